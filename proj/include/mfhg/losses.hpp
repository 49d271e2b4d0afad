#pragma once

#include <string>

#include "mfhg/image.hpp"
#include "mfhg/tensor.hpp"

namespace mfhg {

enum class LossKind { Bce, Nps, L1, Mse };

LossKind loss_kind_from_name(const std::string& name);
std::string loss_kind_name(LossKind kind);

// Scalar objective plus its exact gradient with respect to the network
// output. value is finite and nonnegative.
struct LossValue {
  double value = 0.0;
  Tensor gradient;
};

// Per-pixel binary cross entropy of a 2-channel softmax pair against a
// binary target; probabilities are clamped to [1e-7, 1-1e-7] before the
// logs (clamped entries get zero gradient).
LossValue bce_loss(const Tensor& z, const FocusMap& target);

// Normalized positive sigmoid dissimilarity between two intensities:
// (e^{alpha|a-b|} - 1) / (e^{alpha|a-b|} + 1). Bounded in [0,1), zero only
// at a == b. alpha must be positive.
double nps(double a, double b, double alpha);

// Sum over channels of the mean per-pixel NPS dissimilarity, plus absolute
// per-channel min and max mismatches that pin the output range. The min/max
// subgradient routes to the first row-major extremum of each channel.
LossValue regression_loss(const Tensor& yhat, const Image& y, double alpha);

// Mean absolute / mean squared error over all pixels and channels.
LossValue l1_loss(const Tensor& yhat, const Image& y);
LossValue mse_loss(const Tensor& yhat, const Image& y);

}  // namespace mfhg
