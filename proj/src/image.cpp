// SPDX-License-Identifier: Apache-2.0

#include "mvitac/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>

#include "mvitac/error.hpp"

namespace mvitac {

Image resize_bilinear(const Image& src, std::size_t height, std::size_t width) {
  if (src.height == height && src.width == width) return src;
  Image dst(src.channels, height, width);
  const double sy = static_cast<double>(src.height) / static_cast<double>(height);
  const double sx = static_cast<double>(src.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < src.channels; ++c) {
        const double top = src.at(c, y0, x0) * (1.0 - wx) + src.at(c, y0, x1) * wx;
        const double bottom = src.at(c, y1, x0) * (1.0 - wx) + src.at(c, y1, x1) * wx;
        dst.at(c, y, x) = static_cast<float>(top * (1.0 - wy) + bottom * wy);
      }
    }
  }
  return dst;
}

Image crop(const Image& src, std::size_t y0, std::size_t x0, std::size_t height, std::size_t width) {
  if (y0 + height > src.height || x0 + width > src.width) throw ShapeError("crop: window exceeds image bounds");
  Image dst(src.channels, height, width);
  for (std::size_t c = 0; c < src.channels; ++c)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) dst.at(c, y, x) = src.at(c, y0 + y, x0 + x);
  return dst;
}

Image flip_horizontal(const Image& src) {
  Image dst = src;
  for (std::size_t c = 0; c < src.channels; ++c)
    for (std::size_t y = 0; y < src.height; ++y)
      for (std::size_t x = 0; x < src.width; ++x) dst.at(c, y, x) = src.at(c, y, src.width - 1 - x);
  return dst;
}

Image stack_channels(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError("stack_channels: spatial sizes differ (" + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
  }
  Image out(a.channels + b.channels, a.height, a.width);
  std::copy(a.pixels.begin(), a.pixels.end(), out.pixels.begin());
  std::copy(b.pixels.begin(), b.pixels.end(), out.pixels.begin() + static_cast<std::ptrdiff_t>(a.pixels.size()));
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::filesystem::path& path) {
  File fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DatasetFormatError("cannot open image " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DatasetFormatError("libpng initialization failed");
  }
  std::vector<png_byte> buffer;
  png_uint_32 width = 0, height = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DatasetFormatError("malformed PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(3, height, width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(buffer[y * rowbytes + x * 3 + c]) / 255.0f;
  return img;
}

void write_png(const Image& image, const std::filesystem::path& path) {
  if (image.channels != 1 && image.channels != 3) {
    throw ShapeError("write_png: only 1- or 3-channel images can be written, got " + std::to_string(image.channels));
  }
  File fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DatasetFormatError("cannot write image " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DatasetFormatError("libpng initialization failed");
  }
  const std::size_t c = image.channels;
  std::vector<png_byte> buffer(image.height * image.width * c);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t k = 0; k < c; ++k) {
        const float v = std::clamp(image.at(k, y, x), 0.0f, 1.0f);
        buffer[(y * image.width + x) * c + k] = static_cast<png_byte>(std::lround(v * 255.0f));
      }
  std::vector<png_bytep> rows(image.height);
  for (std::size_t y = 0; y < image.height; ++y) rows[y] = buffer.data() + y * image.width * c;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DatasetFormatError("failed writing PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace mvitac
