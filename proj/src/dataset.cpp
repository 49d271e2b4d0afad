#include "mfhg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mfhg/errors.hpp"
#include "mfhg/image_io.hpp"

namespace fs = std::filesystem;

namespace mfhg {

int LabelMap::max_label() const {
  int m = 0;
  for (std::uint8_t v : labels) m = std::max(m, static_cast<int>(v));
  return m;
}

FocusMap focus_map_from_labels(const LabelMap& mask,
                               const std::vector<std::uint8_t>& selected) {
  bool in_set[256] = {false};
  for (std::uint8_t s : selected) in_set[s] = true;
  FocusMap g(mask.height, mask.width);
  for (std::size_t i = 0; i < mask.labels.size(); ++i)
    g.data()[i] = in_set[mask.labels[i]] ? 1.0 : 0.0;
  return g;
}

FocusMap select_focus_subset(const SegmentedSample& sample, Rng& rng) {
  const int gamma = sample.mask.max_label();
  if (gamma < 1)
    throw std::invalid_argument(
        "select_focus_subset: sample has no segmented objects");
  const int n_labels = gamma + 1;

  // Uniform over all subsets, resampling empty and full draws, which leaves
  // a uniform distribution over the nonempty proper subsets.
  std::vector<std::uint8_t> selected;
  std::bernoulli_distribution coin(0.5);
  while (true) {
    selected.clear();
    for (int label = 0; label < n_labels; ++label)
      if (coin(rng)) selected.push_back(static_cast<std::uint8_t>(label));
    if (!selected.empty() && static_cast<int>(selected.size()) < n_labels)
      break;
  }
  return focus_map_from_labels(sample.mask, selected);
}

namespace {

void validate_config(const SynthesisConfig& cfg) {
  if (!(cfg.sigma_low > 0.0) || cfg.sigma_low > cfg.sigma_high)
    throw std::invalid_argument(
        "SynthesisConfig: need 0 < sigma_low <= sigma_high");
  if (cfg.noise_std_high < 0.0)
    throw std::invalid_argument("SynthesisConfig: noise_std_high < 0");
}

void add_noise(Image& img, double std_dev, Rng& rng) {
  std::normal_distribution<double> n(0.0, std_dev);
  for (double& v : img.data()) v = clamp01(v + n(rng));
}

}  // namespace

TrainingExample synthesize_example(const SegmentedSample& sample,
                                   const SynthesisConfig& cfg, Rng& rng) {
  validate_config(cfg);
  if (sample.image.empty())
    throw std::invalid_argument("synthesize_example: empty sample image");
  if (sample.mask.height != sample.image.height() ||
      sample.mask.width != sample.image.width())
    throw std::invalid_argument("synthesize_example: mask dimensions mismatch");

  TrainingExample ex;
  FocusMap g = select_focus_subset(sample, rng);
  ex.sigma = cfg.sigma_low == cfg.sigma_high
                 ? cfg.sigma_low
                 : std::uniform_real_distribution<double>(cfg.sigma_low,
                                                          cfg.sigma_high)(rng);
  const Image blurred = blur(sample.image, gaussian_kernel(ex.sigma));
  ex.pair = composite_pair(sample.image, blurred, g);
  ex.truth = sample.image;

  // The stored target marks where source A is sharp: the complement of g,
  // since compositing places the blurred values under g.
  ex.target = FocusMap(g.height(), g.width());
  for (std::size_t i = 0; i < g.data().size(); ++i)
    ex.target.data()[i] = 1.0 - g.data()[i];

  if (cfg.noise_std_high > 0.0) {
    const double std_dev =
        std::uniform_real_distribution<double>(0.0, cfg.noise_std_high)(rng);
    add_noise(ex.pair.a, std_dev, rng);
    add_noise(ex.pair.b, std_dev, rng);
  }
  return ex;
}

TrainingExample mirror_example(const TrainingExample& example) {
  const int h = example.truth.height(), w = example.truth.width();
  const int ch = example.truth.channels();
  TrainingExample out;
  out.sigma = example.sigma;
  out.pair = SourcePair{Image(h, w, ch), Image(h, w, ch)};
  out.truth = Image(h, w, ch);
  out.target = FocusMap(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int mx = w - 1 - x;
      for (int c = 0; c < ch; ++c) {
        out.pair.a.at(y, x, c) = example.pair.a.at(y, mx, c);
        out.pair.b.at(y, x, c) = example.pair.b.at(y, mx, c);
        out.truth.at(y, x, c) = example.truth.at(y, mx, c);
      }
      out.target.at(y, x) = example.target.at(y, mx);
    }
  }
  return out;
}

TrainingExample crop_example(const TrainingExample& example, int y0, int x0,
                             int size) {
  const int h = example.truth.height(), w = example.truth.width();
  const int ch = example.truth.channels();
  if (size <= 0 || y0 < 0 || x0 < 0 || y0 + size > h || x0 + size > w)
    throw std::invalid_argument("crop_example: window out of bounds");
  TrainingExample out;
  out.sigma = example.sigma;
  out.pair = SourcePair{Image(size, size, ch), Image(size, size, ch)};
  out.truth = Image(size, size, ch);
  out.target = FocusMap(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      for (int c = 0; c < ch; ++c) {
        out.pair.a.at(y, x, c) = example.pair.a.at(y0 + y, x0 + x, c);
        out.pair.b.at(y, x, c) = example.pair.b.at(y0 + y, x0 + x, c);
        out.truth.at(y, x, c) = example.truth.at(y0 + y, x0 + x, c);
      }
      out.target.at(y, x) = example.target.at(y0 + y, x0 + x);
    }
  }
  return out;
}

TrainingExample augment(const TrainingExample& example,
                        const SynthesisConfig& cfg, Rng& rng) {
  TrainingExample out = example;
  const int h = example.truth.height(), w = example.truth.width();
  if (cfg.crop > 0 && h >= cfg.crop && w >= cfg.crop) {
    const int y0 =
        h == cfg.crop ? 0
                      : std::uniform_int_distribution<int>(0, h - cfg.crop)(rng);
    const int x0 =
        w == cfg.crop ? 0
                      : std::uniform_int_distribution<int>(0, w - cfg.crop)(rng);
    if (y0 != 0 || x0 != 0 || cfg.crop != h || cfg.crop != w)
      out = crop_example(out, y0, x0, cfg.crop);
  }
  if (std::bernoulli_distribution(0.5)(rng)) out = mirror_example(out);
  return out;
}

std::vector<TrainingExample> make_commutative_batch(
    const std::vector<TrainingExample>& examples) {
  if (examples.empty())
    throw std::invalid_argument("make_commutative_batch: empty batch");
  std::vector<TrainingExample> batch;
  batch.reserve(examples.size() * 2);
  for (const TrainingExample& ex : examples) {
    batch.push_back(ex);
    TrainingExample rev;
    rev.pair = SourcePair{ex.pair.b, ex.pair.a};
    rev.truth = ex.truth;
    rev.sigma = ex.sigma;
    rev.target = FocusMap(ex.target.height(), ex.target.width());
    for (std::size_t i = 0; i < ex.target.data().size(); ++i)
      rev.target.data()[i] = 1.0 - ex.target.data()[i];
    batch.push_back(std::move(rev));
  }
  return batch;
}

namespace {

struct Texture {
  double base[3];
  double amplitude;
  double wavelength;
  double dir_x, dir_y;
  double phase[3];
  double noise;
};

Texture draw_texture(Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Texture t;
  for (double& b : t.base) b = 0.2 + 0.6 * u01(rng);
  t.amplitude = 0.08 + 0.10 * u01(rng);
  t.wavelength = 3.0 + 5.0 * u01(rng);
  const double theta = u01(rng) * 2.0 * M_PI;
  t.dir_x = std::cos(theta);
  t.dir_y = std::sin(theta);
  for (double& p : t.phase) p = u01(rng) * 2.0 * M_PI;
  t.noise = 0.03 + 0.05 * u01(rng);
  return t;
}

bool point_in_polygon(double px, double py,
                      const std::vector<std::pair<double, double>>& poly) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto [xi, yi] = poly[i];
    const auto [xj, yj] = poly[j];
    if ((yi > py) != (yj > py) &&
        px < (xj - xi) * (py - yi) / (yj - yi) + xi)
      inside = !inside;
  }
  return inside;
}

bool paint_objects(LabelMap& mask, int n_objects, Rng& rng) {
  const int h = mask.height, w = mask.width;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::fill(mask.labels.begin(), mask.labels.end(), 0);
  const double min_dim = std::min(w, h);

  for (int obj = 1; obj <= n_objects; ++obj) {
    const double cx = (0.15 + 0.7 * u01(rng)) * w;
    const double cy = (0.15 + 0.7 * u01(rng)) * h;
    const double radius = (0.15 + 0.20 * u01(rng)) * min_dim;
    const bool disc = u01(rng) < 0.5;
    std::vector<std::pair<double, double>> poly;
    if (!disc) {
      const int k = 3 + static_cast<int>(u01(rng) * 4.0);
      std::vector<double> angles(k);
      for (double& a : angles) a = u01(rng) * 2.0 * M_PI;
      std::sort(angles.begin(), angles.end());
      for (double a : angles) {
        const double r = radius * (0.5 + 0.6 * u01(rng));
        poly.emplace_back(cx + r * std::cos(a), cy + r * std::sin(a));
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const bool hit =
            disc ? (x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius
                 : point_in_polygon(x, y, poly);
        if (hit) mask.at(y, x) = static_cast<std::uint8_t>(obj);
      }
    }
  }

  std::vector<int> count(n_objects + 1, 0);
  for (std::uint8_t v : mask.labels) ++count[v];
  return std::all_of(count.begin(), count.end(), [](int c) { return c > 0; });
}

}  // namespace

SegmentedSample generate_procedural_sample(int width, int height,
                                           int n_objects, Rng& rng) {
  if (n_objects < 1)
    throw std::invalid_argument("generate_procedural_sample: n_objects < 1");
  if (n_objects > 255)
    throw std::invalid_argument("generate_procedural_sample: n_objects > 255");
  if (width < 4 || height < 4)
    throw std::invalid_argument("generate_procedural_sample: frame too small");

  std::vector<Texture> textures;
  textures.reserve(n_objects + 1);
  for (int i = 0; i <= n_objects; ++i) textures.push_back(draw_texture(rng));

  SegmentedSample sample;
  sample.mask.height = height;
  sample.mask.width = width;
  sample.mask.labels.assign(static_cast<std::size_t>(height) * width, 0);

  int attempts = 0;
  while (!paint_objects(sample.mask, n_objects, rng)) {
    if (++attempts > 200)
      throw std::runtime_error(
          "generate_procedural_sample: could not keep every label visible");
  }

  sample.image = Image(height, width, 3);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Texture& t = textures[sample.mask.at(y, x)];
      const double wave =
          2.0 * M_PI * (x * t.dir_x + y * t.dir_y) / t.wavelength;
      for (int c = 0; c < 3; ++c)
        sample.image.at(y, x, c) =
            clamp01(t.base[c] + t.amplitude * std::sin(wave + t.phase[c]) +
                    t.noise * sym(rng));
    }
  }
  return sample;
}

namespace {

std::map<std::string, fs::path> png_files(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() == ".png")
      out[entry.path().stem().string()] = entry.path();
  }
  return out;
}

SegmentedSample load_sample_files(const fs::path& image_path,
                                  const fs::path& mask_path) {
  SegmentedSample sample;
  sample.image = load_png(image_path.string());
  if (sample.image.channels() != 3)
    throw FormatError("image is not RGB: " + image_path.string());
  const PngBytes mask_png = read_png_bytes(mask_path.string());
  if (mask_png.channels != 1)
    throw FormatError("mask is not 8-bit grayscale: " + mask_path.string());
  if (mask_png.height != sample.image.height() ||
      mask_png.width != sample.image.width())
    throw FormatError("image/mask dimensions mismatch for " +
                      mask_path.string());
  sample.mask.height = mask_png.height;
  sample.mask.width = mask_png.width;
  sample.mask.labels = mask_png.bytes;
  return sample;
}

}  // namespace

std::vector<SegmentedSample> load_segmented_samples(
    const std::string& image_dir, const std::string& mask_dir) {
  const auto images = png_files(image_dir);
  const auto masks = png_files(mask_dir);
  for (const auto& [stem, path] : images)
    if (!masks.count(stem))
      throw FormatError("missing mask for image: " + path.string());
  for (const auto& [stem, path] : masks)
    if (!images.count(stem))
      throw FormatError("missing image for mask: " + path.string());

  std::vector<SegmentedSample> samples;
  samples.reserve(images.size());
  for (const auto& [stem, path] : images)  // std::map iterates sorted
    samples.push_back(load_sample_files(path, masks.at(stem)));
  return samples;
}

std::vector<SegmentedSample> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  const fs::path base = fs::path(path).parent_path();

  std::vector<SegmentedSample> samples;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest " + path + " line " +
                        std::to_string(line_no) + ": " + e.what());
    }
    if (record.contains("image_path")) {
      const fs::path img = base / record.at("image_path").get<std::string>();
      const fs::path msk = base / record.at("mask_path").get<std::string>();
      samples.push_back(load_sample_files(img, msk));
    } else if (record.contains("seed")) {
      const std::uint64_t seed = record.at("seed").get<std::uint64_t>();
      const int count = record.at("count").get<int>();
      const int width = record.at("width").get<int>();
      const int height = record.at("height").get<int>();
      const int n_objects = record.at("n_objects").get<int>();
      for (int i = 0; i < count; ++i) {
        Rng rng(seed ^ static_cast<std::uint64_t>(i));
        samples.push_back(
            generate_procedural_sample(width, height, n_objects, rng));
      }
    } else {
      throw FormatError("manifest " + path + " line " +
                        std::to_string(line_no) + ": unknown record type");
    }
  }
  return samples;
}

}  // namespace mfhg
