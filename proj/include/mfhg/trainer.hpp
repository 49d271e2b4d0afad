#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfhg/dataset.hpp"
#include "mfhg/losses.hpp"
#include "mfhg/network.hpp"

namespace mfhg {

struct TrainSchedule {
  int epochs = 1;
  int batch_size = 3;          // declared examples; tuple inversion doubles it
  long max_iterations = 0;     // 0 = run all epochs
  double lr = 1e-5;
  double alpha = 6.0;          // NPS sharpness
  bool commutative = true;     // forward each tuple and its reversal
  int checkpoint_every = 0;    // epochs between checkpoints; 0 = none
  std::string checkpoint_dir;  // empty = never write checkpoints
  std::uint64_t seed = 0;
  int threads = 0;             // 0 = hardware concurrency
};

struct TrainingReport {
  std::vector<double> iteration_loss;  // mean batch loss per Adam step
  std::vector<double> epoch_loss;      // mean of the epoch's batch losses
  long iterations = 0;
  std::vector<std::string> checkpoints;
};

// Loss gradient for one example under the given head/loss combination.
LossValue example_loss(const Parameters& params, const TrainingExample& ex,
                       LossKind loss, double alpha, ActivationCache* cache);

// On-the-fly synthesis + augmentation over `samples`, commutative batch
// assembly, mean-gradient Adam steps. Aborts with a NumericalError naming
// the epoch and batch if the loss turns non-finite.
TrainingReport train(Parameters& params,
                     const std::vector<SegmentedSample>& samples,
                     const SynthesisConfig& synth, LossKind loss,
                     const TrainSchedule& schedule);

}  // namespace mfhg
