#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mfhg/image.hpp"

namespace mfhg {

using Rng = std::mt19937_64;

// Label raster over an image; label 0 is background, objects are 1..gamma.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  std::uint8_t at(int y, int x) const {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(int y, int x) {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
  int max_label() const;
};

// Sharp image plus its segmentation mask.
struct SegmentedSample {
  Image image;
  LabelMap mask;
};

// One synthesized training record. target(p) = 1 marks pixels where source A
// carries the sharp value (and therefore truth(p) == pair.a(p) when no noise
// is applied).
struct TrainingExample {
  SourcePair pair;
  Image truth;
  FocusMap target;
  double sigma = 0.0;
};

struct SynthesisConfig {
  double sigma_low = 1.0;
  double sigma_high = 5.0;
  double noise_std_high = 0.0;   // 0 disables the noisy variant
  int crop = 400;                // skipped when the sample is smaller
  std::uint64_t seed = 0;
};

// Indicator map of the labels listed in `selected`.
FocusMap focus_map_from_labels(const LabelMap& mask,
                               const std::vector<std::uint8_t>& selected);

// Draws a uniformly random nonempty proper subset of {0..gamma} and returns
// its indicator map. gamma must be at least 1.
FocusMap select_focus_subset(const SegmentedSample& sample, Rng& rng);

TrainingExample synthesize_example(const SegmentedSample& sample,
                                   const SynthesisConfig& cfg, Rng& rng);

// Applies one random crop window and one mirror decision identically to the
// pair, the truth and the target.
TrainingExample augment(const TrainingExample& example,
                        const SynthesisConfig& cfg, Rng& rng);

TrainingExample mirror_example(const TrainingExample& example);
TrainingExample crop_example(const TrainingExample& example, int y0, int x0,
                             int size);

// Doubles the batch: each example is followed by its source-swapped twin
// with inverted target and identical truth.
std::vector<TrainingExample> make_commutative_batch(
    const std::vector<TrainingExample>& examples);

// Random textured background plus n_objects discs/polygons with distinct
// labels and textures. Every label in {0..n_objects} covers at least one
// pixel.
SegmentedSample generate_procedural_sample(int width, int height,
                                           int n_objects, Rng& rng);

// Matched-basename PNG pairs (RGB image, 8-bit gray label mask), sorted
// lexicographically by basename.
std::vector<SegmentedSample> load_segmented_samples(
    const std::string& image_dir, const std::string& mask_dir);

// JSON-lines manifest; records are either {"image_path","mask_path"} or a
// procedural block {"seed","count","width","height","n_objects"}.
std::vector<SegmentedSample> load_manifest(const std::string& path);

}  // namespace mfhg
