#include "mfhg/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace mfhg {

LossKind loss_kind_from_name(const std::string& name) {
  if (name == "bce") return LossKind::Bce;
  if (name == "nps") return LossKind::Nps;
  if (name == "l1") return LossKind::L1;
  if (name == "mse") return LossKind::Mse;
  throw std::invalid_argument("unknown loss: " + name);
}

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::Bce: return "bce";
    case LossKind::Nps: return "nps";
    case LossKind::L1: return "l1";
    case LossKind::Mse: return "mse";
  }
  return "?";
}

LossValue bce_loss(const Tensor& z, const FocusMap& target) {
  if (z.c != 2)
    throw std::invalid_argument("bce_loss: output must have 2 channels");
  if (z.h != target.height() || z.w != target.width())
    throw std::invalid_argument("bce_loss: target dimensions mismatch");
  if (!target.is_binary())
    throw std::invalid_argument("bce_loss: target must be binary");

  constexpr double kEps = 1e-7;
  const double n = static_cast<double>(z.h) * z.w;
  LossValue loss;
  loss.gradient = Tensor(z.h, z.w, 2);
  double sum = 0.0;
  for (int y = 0; y < z.h; ++y) {
    for (int x = 0; x < z.w; ++x) {
      const double t = target.at(y, x);
      const double z0 = z.at(y, x, 0);
      const double z1 = z.at(y, x, 1);
      const double z0c = std::min(std::max(z0, kEps), 1.0 - kEps);
      const double z1c = std::min(std::max(z1, kEps), 1.0 - kEps);
      sum += t * std::log(z0c) + (1.0 - t) * std::log(z1c);
      if (z0 > kEps && z0 < 1.0 - kEps)
        loss.gradient.at(y, x, 0) = -t / (z0c * n);
      if (z1 > kEps && z1 < 1.0 - kEps)
        loss.gradient.at(y, x, 1) = -(1.0 - t) / (z1c * n);
    }
  }
  loss.value = -sum / n;
  return loss;
}

double nps(double a, double b, double alpha) {
  const double e = std::exp(alpha * std::abs(a - b));
  return (e - 1.0) / (e + 1.0);
}

namespace {

// d nps(a, x) / dx; zero subgradient at the x == a kink.
double nps_grad(double a, double x, double alpha) {
  const double d = x - a;
  if (d == 0.0) return 0.0;
  const double e = std::exp(alpha * std::abs(d));
  const double slope = 2.0 * alpha * e / ((e + 1.0) * (e + 1.0));
  return d > 0.0 ? slope : -slope;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_pair(const Tensor& yhat, const Image& y, const char* who) {
  if (yhat.h != y.height() || yhat.w != y.width() || yhat.c != y.channels())
    throw std::invalid_argument(std::string(who) + ": dimensions mismatch");
}

}  // namespace

LossValue regression_loss(const Tensor& yhat, const Image& y, double alpha) {
  check_pair(yhat, y, "regression_loss");
  if (yhat.c != 3)
    throw std::invalid_argument("regression_loss: output must have 3 channels");

  const int h = yhat.h, w = yhat.w;
  const double n = static_cast<double>(h) * w;
  LossValue loss;
  loss.gradient = Tensor(h, w, 3);

  for (int c = 0; c < 3; ++c) {
    double dissimilarity = 0.0;
    double min_t = y.at(0, 0, c), max_t = min_t;
    double min_p = yhat.at(0, 0, c), max_p = min_p;
    int argmin = 0, argmax = 0;
    for (int yy = 0; yy < h; ++yy) {
      for (int xx = 0; xx < w; ++xx) {
        const double t = y.at(yy, xx, c);
        const double p = yhat.at(yy, xx, c);
        dissimilarity += nps(t, p, alpha);
        loss.gradient.at(yy, xx, c) = nps_grad(t, p, alpha) / n;
        min_t = std::min(min_t, t);
        max_t = std::max(max_t, t);
        if (p < min_p) {
          min_p = p;
          argmin = yy * w + xx;
        }
        if (p > max_p) {
          max_p = p;
          argmax = yy * w + xx;
        }
      }
    }
    loss.value += dissimilarity / n + std::abs(min_t - min_p) +
                  std::abs(max_t - max_p);
    loss.gradient.at(argmin / w, argmin % w, c) += sign(min_p - min_t);
    loss.gradient.at(argmax / w, argmax % w, c) += sign(max_p - max_t);
  }
  return loss;
}

LossValue l1_loss(const Tensor& yhat, const Image& y) {
  check_pair(yhat, y, "l1_loss");
  const double n = static_cast<double>(yhat.size());
  LossValue loss;
  loss.gradient = Tensor(yhat.h, yhat.w, yhat.c);
  for (std::size_t i = 0; i < yhat.size(); ++i) {
    const double d = yhat.v[i] - y.data()[i];
    loss.value += std::abs(d) / n;
    loss.gradient.v[i] = sign(d) / n;
  }
  return loss;
}

LossValue mse_loss(const Tensor& yhat, const Image& y) {
  check_pair(yhat, y, "mse_loss");
  const double n = static_cast<double>(yhat.size());
  LossValue loss;
  loss.gradient = Tensor(yhat.h, yhat.w, yhat.c);
  for (std::size_t i = 0; i < yhat.size(); ++i) {
    const double d = yhat.v[i] - y.data()[i];
    loss.value += d * d / n;
    loss.gradient.v[i] = 2.0 * d / n;
  }
  return loss;
}

}  // namespace mfhg
