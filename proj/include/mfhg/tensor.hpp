#pragma once

#include <cstddef>
#include <vector>

namespace mfhg {

// Dense H x W x C activation block, row-major, channel-last, double
// precision. Unlike Image, values are unbounded.
struct Tensor {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int height, int width, int channels, double fill = 0.0)
      : h(height), w(width), c(channels),
        v(static_cast<std::size_t>(height) * width * channels, fill) {}

  double& at(int y, int x, int ch) {
    return v[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  const double& at(int y, int x, int ch) const {
    return v[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }

  std::size_t size() const { return v.size(); }
  bool same_shape(const Tensor& o) const {
    return h == o.h && w == o.w && c == o.c;
  }
};

}  // namespace mfhg
