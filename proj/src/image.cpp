#include "mfhg/image.hpp"

#include <cmath>
#include <stdexcept>

namespace mfhg {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height <= 0 || width <= 0)
    throw std::invalid_argument("Image: dimensions must be positive");
  if (channels != 1 && channels != 3)
    throw std::invalid_argument("Image: channels must be 1 or 3");
  data_.assign(static_cast<std::size_t>(height) * width * channels,
               clamp01(fill));
}

void Image::clamp() {
  for (double& v : data_) v = clamp01(v);
}

FocusMap::FocusMap(int height, int width, double fill)
    : height_(height), width_(width) {
  if (height <= 0 || width <= 0)
    throw std::invalid_argument("FocusMap: dimensions must be positive");
  data_.assign(static_cast<std::size_t>(height) * width, clamp01(fill));
}

bool FocusMap::is_binary() const {
  for (double v : data_)
    if (v != 0.0 && v != 1.0) return false;
  return true;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

GaussianKernel gaussian_kernel(double sigma) {
  if (!(sigma > 0.0))
    throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  const int size = 2 * radius + 1;

  GaussianKernel k;
  k.sigma = sigma;
  k.size = size;
  k.profile.resize(size);
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - radius;
    k.profile[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    sum += k.profile[i];
  }
  for (double& v : k.profile) v /= sum;

  k.weights.resize(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      k.weights[static_cast<std::size_t>(y) * size + x] =
          k.profile[y] * k.profile[x];
  return k;
}

namespace {

void validate_kernel(const GaussianKernel& k) {
  if (k.size <= 0 || k.size % 2 == 0)
    throw std::invalid_argument("blur: kernel size must be odd and positive");
  if (k.weights.size() != static_cast<std::size_t>(k.size) * k.size ||
      k.profile.size() != static_cast<std::size_t>(k.size))
    throw std::invalid_argument("blur: kernel weight/profile sizes mismatch");
  double sum = 0.0;
  for (double w : k.weights) sum += w;
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("blur: kernel weights must sum to 1");
}

}  // namespace

Image blur(const Image& image, const GaussianKernel& kernel) {
  if (image.empty()) throw std::invalid_argument("blur: empty image");
  validate_kernel(kernel);

  const int h = image.height(), w = image.width(), ch = image.channels();
  const int radius = kernel.size / 2;
  const std::vector<double>& p = kernel.profile;

  // Separable two-pass convolution; the stored 2-D weights are the outer
  // product of the profile, so the result matches a direct 2-D convolution.
  Image tmp(h, w, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = 0; k < kernel.size; ++k) {
          const int xx = reflect_index(x + k - radius, w);
          acc += p[k] * image.at(y, xx, c);
        }
        tmp.at(y, x, c) = acc;
      }
    }
  }
  Image out(h, w, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = 0; k < kernel.size; ++k) {
          const int yy = reflect_index(y + k - radius, h);
          acc += p[k] * tmp.at(yy, x, c);
        }
        out.at(y, x, c) = clamp01(acc);
      }
    }
  }
  return out;
}

SourcePair composite_pair(const Image& sharp, const Image& blurred,
                          const FocusMap& g) {
  if (!sharp.same_shape(blurred))
    throw std::invalid_argument("composite_pair: image dimensions mismatch");
  if (g.height() != sharp.height() || g.width() != sharp.width())
    throw std::invalid_argument("composite_pair: focus map dimensions mismatch");
  if (!g.is_binary())
    throw std::invalid_argument("composite_pair: focus map must be binary");

  const int h = sharp.height(), w = sharp.width(), ch = sharp.channels();
  SourcePair pair{Image(h, w, ch), Image(h, w, ch)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gv = g.at(y, x);
      for (int c = 0; c < ch; ++c) {
        const double ys = sharp.at(y, x, c);
        const double yb = blurred.at(y, x, c);
        pair.a.at(y, x, c) = yb * gv + ys * (1.0 - gv);
        pair.b.at(y, x, c) = yb * (1.0 - gv) + ys * gv;
      }
    }
  }
  return pair;
}

Image to_grayscale(const Image& image) {
  if (image.channels() != 3)
    throw std::invalid_argument("to_grayscale: input must have 3 channels");
  Image out(image.height(), image.width(), 1);
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      out.at(y, x, 0) = clamp01(0.299 * image.at(y, x, 0) +
                                0.587 * image.at(y, x, 1) +
                                0.114 * image.at(y, x, 2));
  return out;
}

}  // namespace mfhg
