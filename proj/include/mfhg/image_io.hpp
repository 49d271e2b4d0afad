#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfhg/image.hpp"

namespace mfhg {

// 8-bit raster as stored in a PNG file; c is 1 (gray) or 3 (RGB).
struct PngBytes {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> bytes;
};

PngBytes read_png_bytes(const std::string& path);
void write_png_bytes(const std::string& path, const PngBytes& png);

// Intensity images round-trip through 8-bit PNG: save rounds v*255,
// load divides by 255.
Image load_png(const std::string& path);
void save_png(const Image& image, const std::string& path);

// Lossless float fixture format: ASCII header "MFIMG h w c\n" followed by
// row-major little-endian 32-bit floats.
Image load_raw(const std::string& path);
void save_raw(const Image& image, const std::string& path);

// A focus map rendered as a grayscale image.
Image focus_map_to_image(const FocusMap& map);
FocusMap image_to_focus_map(const Image& image);

}  // namespace mfhg
