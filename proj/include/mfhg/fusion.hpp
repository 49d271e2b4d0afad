#pragma once

#include <string>
#include <vector>

#include "mfhg/image.hpp"
#include "mfhg/network.hpp"
#include "mfhg/tensor.hpp"

namespace mfhg {

// f = z0*a + z1*b per pixel per channel; z must be a per-pixel softmax pair.
Image weighted_fuse(const SourcePair& pair, const Tensor& z);

// Snaps every fused pixel to the source whose RGB vector is closest in
// squared distance; ties go to source B.
Image nearest_source(const Image& fused, const SourcePair& pair);

enum class FuserKind { HfSeg, HfReg, DummyA, DummyB, Average };

// Immutable fusion strategy. Model-backed kinds borrow the parameters,
// which must outlive the fuser.
struct Fuser {
  FuserKind kind = FuserKind::Average;
  const Parameters* model = nullptr;
  bool near = false;  // nearest-source post-processing (reg only)

  std::string name() const;
};

Fuser make_model_fuser(const Parameters& model, bool near = false);

Image fuse_pair(const Fuser& fuser, const SourcePair& pair);

// Left fold over the burst: f(...f(f(x0,x1),x2)...,xn). Burst length >= 2.
Image fuse_burst(const Fuser& fuser, const Burst& burst);

// Mean squared error between fusing (a,b) and fusing (b,a).
double commutativity_gap(const Fuser& fuser, const SourcePair& pair);

double mean_squared_error(const Image& a, const Image& b);
double mean_absolute_error(const Image& a, const Image& b);

}  // namespace mfhg
