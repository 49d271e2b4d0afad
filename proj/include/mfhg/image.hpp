#pragma once

#include <cstddef>
#include <vector>

namespace mfhg {

// Row-major, channel-last raster. Intensities live in [0,1]; every
// constructor clamps, and operations that could leave the range clamp
// before returning.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  const double& at(int y, int x, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  void clamp();

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Per-pixel map in [0,1]; binary maps hold only {0,1}. Dimensions always
// match the image they annotate.
class FocusMap {
 public:
  FocusMap() = default;
  FocusMap(int height, int width, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x) {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  const double& at(int y, int x) const {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool is_binary() const;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// Two co-registered views of the same scene with different focus planes.
struct SourcePair {
  Image a;
  Image b;
};

using Burst = std::vector<Image>;

// Truncated, renormalized 2-D Gaussian. weights = outer(profile, profile),
// sums to 1 within 1e-9 and is symmetric under 180-degree rotation.
struct GaussianKernel {
  double sigma = 0.0;
  int size = 0;                  // odd, 2*ceil(3*sigma)+1
  std::vector<double> weights;   // size*size, row-major
  std::vector<double> profile;   // separable 1-D factor, size entries
};

// sigma must be positive.
GaussianKernel gaussian_kernel(double sigma);

// Per-channel 2-D convolution with mirror boundary handling (edge pixel not
// repeated). Output dimensions equal input dimensions.
Image blur(const Image& image, const GaussianKernel& kernel);

// a = blurred*g + sharp*(1-g); b = blurred*(1-g) + sharp*g, per pixel per
// channel. g must be binary and share dimensions with the images.
SourcePair composite_pair(const Image& sharp, const Image& blurred,
                          const FocusMap& g);

// Luma conversion with weights 0.299/0.587/0.114; input must have 3 channels.
Image to_grayscale(const Image& image);

// Folds an out-of-range coordinate back into [0, n) by mirroring without
// repeating the edge sample. Valid for any offset.
int reflect_index(int i, int n);

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace mfhg
