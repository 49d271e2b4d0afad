#include "mfhg/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "mfhg/errors.hpp"

namespace mfhg {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

PngBytes read_png_bytes(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open PNG for reading: " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw FormatError("not a PNG file: " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::vector<png_bytep> rows;
  PngBytes out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG file: " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  // Normalize everything to 8-bit gray or RGB.
  png_set_expand(png);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (png_get_color_type(png, info) & PNG_COLOR_MASK_ALPHA)
    png_set_strip_alpha(png);
  png_read_update_info(png, info);

  out.height = static_cast<int>(png_get_image_height(png, info));
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.channels = png_get_channels(png, info);
  if (out.channels != 1 && out.channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unsupported PNG channel count in " + path);
  }

  out.bytes.resize(static_cast<std::size_t>(out.height) * out.width *
                   out.channels);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y)
    rows[y] = out.bytes.data() +
              static_cast<std::size_t>(y) * out.width * out.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png_bytes(const std::string& path, const PngBytes& png_data) {
  if (png_data.channels != 1 && png_data.channels != 3)
    throw std::invalid_argument("write_png_bytes: channels must be 1 or 3");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open PNG for writing: " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to write PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, png_data.width, png_data.height, 8,
               png_data.channels == 1 ? PNG_COLOR_TYPE_GRAY
                                      : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  rows.resize(png_data.height);
  for (int y = 0; y < png_data.height; ++y)
    rows[y] = const_cast<png_bytep>(
        png_data.bytes.data() +
        static_cast<std::size_t>(y) * png_data.width * png_data.channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image load_png(const std::string& path) {
  const PngBytes png = read_png_bytes(path);
  Image img(png.height, png.width, png.channels);
  for (std::size_t i = 0; i < png.bytes.size(); ++i)
    img.data()[i] = png.bytes[i] / 255.0;
  return img;
}

void save_png(const Image& image, const std::string& path) {
  if (image.empty()) throw std::invalid_argument("save_png: empty image");
  PngBytes png;
  png.height = image.height();
  png.width = image.width();
  png.channels = image.channels();
  png.bytes.resize(image.data().size());
  for (std::size_t i = 0; i < png.bytes.size(); ++i) {
    const double v = clamp01(image.data()[i]);
    png.bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  write_png_bytes(path, png);
}

Image load_raw(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open raw image for reading: " + path);
  char magic[6] = {0};
  int h = 0, w = 0, c = 0;
  if (std::fscanf(fp.get(), "%5s %d %d %d", magic, &h, &w, &c) != 4 ||
      std::strcmp(magic, "MFIMG") != 0)
    throw FormatError("bad raw image header in " + path);
  if (std::fgetc(fp.get()) != '\n')
    throw FormatError("bad raw image header terminator in " + path);
  if (h <= 0 || w <= 0 || (c != 1 && c != 3))
    throw FormatError("bad raw image dimensions in " + path);

  Image img(h, w, c);
  const std::size_t n = img.data().size();
  std::vector<float> buf(n);
  if (std::fread(buf.data(), sizeof(float), n, fp.get()) != n)
    throw FormatError("truncated raw image file: " + path);
  for (std::size_t i = 0; i < n; ++i) img.data()[i] = clamp01(buf[i]);
  return img;
}

void save_raw(const Image& image, const std::string& path) {
  if (image.empty()) throw std::invalid_argument("save_raw: empty image");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open raw image for writing: " + path);
  std::fprintf(fp.get(), "MFIMG %d %d %d\n", image.height(), image.width(),
               image.channels());
  std::vector<float> buf(image.data().size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<float>(image.data()[i]);
  if (std::fwrite(buf.data(), sizeof(float), buf.size(), fp.get()) !=
      buf.size())
    throw IoError("failed to write raw image: " + path);
}

Image focus_map_to_image(const FocusMap& map) {
  Image img(map.height(), map.width(), 1);
  img.data() = map.data();
  img.clamp();
  return img;
}

FocusMap image_to_focus_map(const Image& image) {
  if (image.channels() != 1)
    throw std::invalid_argument("image_to_focus_map: input must be grayscale");
  FocusMap map(image.height(), image.width());
  map.data() = image.data();
  return map;
}

}  // namespace mfhg
