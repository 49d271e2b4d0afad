#pragma once

// Direct-definition histogram/metric evaluations, written independently of
// the library's code paths so implementation changes cannot hide in both
// sides of a comparison.

#include <array>
#include <cmath>
#include <vector>

#include "mfhg/image.hpp"

namespace mfhg::oracles {

constexpr int kB = 256;

inline int bin256(double v) {
  const int b = static_cast<int>(v * kB);
  return b < 0 ? 0 : (b >= kB ? kB - 1 : b);
}

struct Hists {
  std::vector<double> joint;
  std::array<double, kB> px{}, py{};
};

inline Hists histograms(const Image& x, const Image& y) {
  Hists h;
  h.joint.assign(static_cast<std::size_t>(kB) * kB, 0.0);
  const double inc = 1.0 / static_cast<double>(x.data().size());
  for (std::size_t i = 0; i < x.data().size(); ++i) {
    h.joint[static_cast<std::size_t>(bin256(x.data()[i])) * kB +
            bin256(y.data()[i])] += inc;
    h.px[bin256(x.data()[i])] += inc;
    h.py[bin256(y.data()[i])] += inc;
  }
  return h;
}

template <typename C>
double entropy(const C& p) {
  double e = 0.0;
  for (double v : p)
    if (v > 0.0) e -= v * std::log(v);
  return e;
}

inline double mutual_information(const Image& x, const Image& y) {
  const Hists h = histograms(x, y);
  double mi = 0.0;
  for (int i = 0; i < kB; ++i)
    for (int j = 0; j < kB; ++j) {
      const double pij = h.joint[static_cast<std::size_t>(i) * kB + j];
      if (pij > 0.0) mi += pij * std::log(pij / (h.px[i] * h.py[j]));
    }
  return mi;
}

inline double q_mi(const Image& a, const Image& b, const Image& f) {
  const Hists af = histograms(a, f);
  const Hists bf = histograms(b, f);
  const double ha = entropy(af.px), hf1 = entropy(af.py);
  const double hb = entropy(bf.px), hf2 = entropy(bf.py);
  double total = 0.0;
  if (ha + hf1 > 0.0) total += mutual_information(a, f) / (ha + hf1);
  if (hb + hf2 > 0.0) total += mutual_information(b, f) / (hb + hf2);
  return 2.0 * total;
}

inline double tsallis_entropy(const std::array<double, kB>& p, double q) {
  double s = 0.0;
  for (double v : p)
    if (v > 0.0) s += std::pow(v, q);
  return (1.0 - s) / (q - 1.0);
}

inline double tsallis_mi(const Image& x, const Image& y, double q) {
  const Hists h = histograms(x, y);
  double s = 0.0;
  for (int i = 0; i < kB; ++i)
    for (int j = 0; j < kB; ++j) {
      const double pij = h.joint[static_cast<std::size_t>(i) * kB + j];
      if (pij > 0.0)
        s += std::pow(pij, q) * std::pow(h.px[i] * h.py[j], 1.0 - q);
    }
  return (s - 1.0) / (q - 1.0);
}

inline double q_te(const Image& a, const Image& b, const Image& f, double q) {
  const Hists af = histograms(a, f);
  const Hists bf = histograms(b, f);
  const double denom = tsallis_entropy(af.px, q) + tsallis_entropy(bf.px, q);
  if (denom <= 0.0) return 0.0;
  return (tsallis_mi(a, f, q) + tsallis_mi(b, f, q)) / denom;
}

// Nonlinear-correlation matrix entropy via an independent power-iteration
// eigensolver on the 3x3 correlation matrix.
inline double q_ncie(const Image& a, const Image& b, const Image& f) {
  const double log_b = std::log(256.0);
  auto ncc = [&](const Image& x, const Image& y) {
    return mutual_information(x, y) / log_b;
  };
  double r[3][3] = {{1.0, ncc(a, b), ncc(a, f)},
                    {0.0, 1.0, ncc(b, f)},
                    {0.0, 0.0, 1.0}};
  r[1][0] = r[0][1];
  r[2][0] = r[0][2];
  r[2][1] = r[1][2];

  // Jacobi rotations, plenty for a symmetric 3x3
  for (int sweep = 0; sweep < 64; ++sweep) {
    int p = 0, q = 1;
    double off = std::abs(r[0][1]);
    if (std::abs(r[0][2]) > off) {
      off = std::abs(r[0][2]);
      p = 0;
      q = 2;
    }
    if (std::abs(r[1][2]) > off) {
      off = std::abs(r[1][2]);
      p = 1;
      q = 2;
    }
    if (off < 1e-15) break;
    const double theta = 0.5 * std::atan2(2.0 * r[p][q], r[q][q] - r[p][p]);
    const double c = std::cos(theta), s = std::sin(theta);
    double rp[3], rq[3];
    for (int k = 0; k < 3; ++k) {
      rp[k] = c * r[p][k] - s * r[q][k];
      rq[k] = s * r[p][k] + c * r[q][k];
    }
    for (int k = 0; k < 3; ++k) {
      r[p][k] = rp[k];
      r[q][k] = rq[k];
    }
    for (int k = 0; k < 3; ++k) {
      const double vp = c * r[k][p] - s * r[k][q];
      const double vq = s * r[k][p] + c * r[k][q];
      r[k][p] = vp;
      r[k][q] = vq;
    }
  }
  double value = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double t = r[k][k] / 3.0;
    if (t > 0.0) value += t * std::log(t) / log_b;
  }
  return value;
}

}  // namespace mfhg::oracles
