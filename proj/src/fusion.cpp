#include "mfhg/fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace mfhg {

Image weighted_fuse(const SourcePair& pair, const Tensor& z) {
  if (pair.a.empty() || !pair.a.same_shape(pair.b))
    throw std::invalid_argument("weighted_fuse: source dimensions mismatch");
  if (z.h != pair.a.height() || z.w != pair.a.width() || z.c != 2)
    throw std::invalid_argument("weighted_fuse: focus pair shape mismatch");

  const int h = z.h, w = z.w, ch = pair.a.channels();
  Image out(h, w, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double z0 = z.at(y, x, 0);
      const double z1 = z.at(y, x, 1);
      for (int c = 0; c < ch; ++c)
        out.at(y, x, c) =
            clamp01(z0 * pair.a.at(y, x, c) + z1 * pair.b.at(y, x, c));
    }
  return out;
}

Image nearest_source(const Image& fused, const SourcePair& pair) {
  if (!fused.same_shape(pair.a) || !fused.same_shape(pair.b))
    throw std::invalid_argument("nearest_source: dimensions mismatch");
  const int h = fused.height(), w = fused.width(), ch = fused.channels();
  Image out(h, w, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double da = 0.0, db = 0.0;
      for (int c = 0; c < ch; ++c) {
        const double va = fused.at(y, x, c) - pair.a.at(y, x, c);
        const double vb = fused.at(y, x, c) - pair.b.at(y, x, c);
        da += va * va;
        db += vb * vb;
      }
      const Image& src = da < db ? pair.a : pair.b;
      for (int c = 0; c < ch; ++c) out.at(y, x, c) = src.at(y, x, c);
    }
  return out;
}

std::string Fuser::name() const {
  switch (kind) {
    case FuserKind::HfSeg: return "hf-seg";
    case FuserKind::HfReg: return near ? "hf-reg-near" : "hf-reg";
    case FuserKind::DummyA: return "dummy-a";
    case FuserKind::DummyB: return "dummy-b";
    case FuserKind::Average: return "average";
  }
  return "?";
}

Fuser make_model_fuser(const Parameters& model, bool near) {
  Fuser f;
  f.kind = model.config.head == Head::Seg ? FuserKind::HfSeg : FuserKind::HfReg;
  f.model = &model;
  f.near = near;
  return f;
}

Image fuse_pair(const Fuser& fuser, const SourcePair& pair) {
  if (pair.a.empty() || !pair.a.same_shape(pair.b))
    throw std::invalid_argument("fuse_pair: source dimensions mismatch");
  switch (fuser.kind) {
    case FuserKind::DummyA: return pair.a;
    case FuserKind::DummyB: return pair.b;
    case FuserKind::Average: {
      Image out(pair.a.height(), pair.a.width(), pair.a.channels());
      for (std::size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = 0.5 * (pair.a.data()[i] + pair.b.data()[i]);
      return out;
    }
    case FuserKind::HfSeg: {
      if (!fuser.model || fuser.model->config.head != Head::Seg)
        throw std::invalid_argument("fuse_pair: fuser needs a seg model");
      const Tensor z = forward(*fuser.model, pair);
      return weighted_fuse(pair, z);
    }
    case FuserKind::HfReg: {
      if (!fuser.model || fuser.model->config.head != Head::Reg)
        throw std::invalid_argument("fuse_pair: fuser needs a reg model");
      const Tensor yhat = forward(*fuser.model, pair);
      Image out(yhat.h, yhat.w, 3);
      for (std::size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = clamp01(yhat.v[i]);
      return fuser.near ? nearest_source(out, pair) : out;
    }
  }
  throw std::invalid_argument("fuse_pair: unknown fuser kind");
}

Image fuse_burst(const Fuser& fuser, const Burst& burst) {
  if (burst.size() < 2)
    throw std::invalid_argument("fuse_burst: need at least two frames");
  Image acc = burst[0];
  for (std::size_t i = 1; i < burst.size(); ++i)
    acc = fuse_pair(fuser, SourcePair{acc, burst[i]});
  return acc;
}

double mean_squared_error(const Image& a, const Image& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("mean_squared_error: dimensions mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.data().size());
}

double mean_absolute_error(const Image& a, const Image& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("mean_absolute_error: dimensions mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    sum += std::abs(a.data()[i] - b.data()[i]);
  return sum / static_cast<double>(a.data().size());
}

double commutativity_gap(const Fuser& fuser, const SourcePair& pair) {
  const Image forward_order = fuse_pair(fuser, pair);
  const Image reversed = fuse_pair(fuser, SourcePair{pair.b, pair.a});
  return mean_squared_error(forward_order, reversed);
}

}  // namespace mfhg
