#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfhg/dataset.hpp"
#include "mfhg/image.hpp"
#include "mfhg/tensor.hpp"

namespace mfhg {

enum class Head { Seg, Reg };

// Encoder-decoder with skip connections. Two 3x3 conv+ReLU per level,
// 2x2 max-pool downsampling, nearest-neighbor upsampling, concatenated
// skips. The segmentation head ends in a per-pixel softmax over 2 channels,
// the regression head in a linear 3-channel conv.
struct HourglassConfig {
  int depth = 3;
  int base_channels = 16;
  Head head = Head::Seg;

  static constexpr int in_channels = 6;  // two stacked RGB sources
  int out_channels() const { return head == Head::Seg ? 2 : 3; }
  int n_convs() const { return 5 * depth + 3; }

  bool operator==(const HourglassConfig&) const = default;
};

struct ConvSpec {
  int in_c = 0;
  int out_c = 0;
};

// Conv shapes in deterministic layer order: encoder stages (two convs
// each), bottleneck pair, decoder stages (upsample conv, merge conv,
// refine conv), head conv.
std::vector<ConvSpec> conv_specs(const HourglassConfig& config);

// Weight layout per conv: [ky][kx][in][out], row-major; bias per out
// channel. Stored in 32-bit floats, matching the checkpoint encoding;
// all arithmetic runs in double.
struct Parameters {
  HourglassConfig config;
  std::vector<std::vector<float>> weights;
  std::vector<std::vector<float>> biases;

  std::size_t scalar_count() const;
};

struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
};

// Conv weights ~ Normal(0, 2/(fan_in+fan_out)) with fan counted over the
// 3x3 support; biases zero.
Parameters init_parameters(const HourglassConfig& config, Rng& rng);

Gradients zero_gradients(const Parameters& params);

// Everything backward needs: per-conv inputs and post-activation outputs,
// max-pool argmax indices, softmax probabilities, padding geometry.
struct ActivationCache {
  HourglassConfig config;
  int in_h = 0, in_w = 0;
  int pad_h = 0, pad_w = 0;
  std::vector<Tensor> conv_in;
  std::vector<Tensor> conv_out;
  std::vector<std::vector<int>> pool_argmax;
  std::vector<Tensor> pool_in_shape;  // dims only, data not kept
  Tensor softmax_out;
};

Tensor stack_pair(const SourcePair& pair);

// Runs the network on a source pair. Output spatial dims equal the input
// dims for any input (sizes not divisible by 2^depth are mirror-padded and
// cropped back). Seg output is the per-pixel softmax pair, Reg output the
// unbounded 3-channel estimate.
Tensor forward(const Parameters& params, const SourcePair& pair,
               ActivationCache* cache = nullptr);

// Exact reverse-mode gradient of every parameter given dLoss/dOutput.
// The cache must come from a forward call with the same parameters.
Gradients backward(const Parameters& params, const ActivationCache& cache,
                   const Tensor& output_gradient);

struct AdamState {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m_w, v_w, m_b, v_b;

  static AdamState create(const Parameters& params, double lr = 1e-5);
};

// Bias-corrected Adam update, applied in place.
void adam_step(Parameters& params, const Gradients& grads, AdamState& state);

// Checkpoint: magic "MFHG1", then depth/base_channels/head as little-endian
// uint32, then each conv's weights and bias as little-endian float32 in
// layer order.
void save_checkpoint(const Parameters& params, const std::string& path);
Parameters load_checkpoint(const std::string& path);

}  // namespace mfhg
