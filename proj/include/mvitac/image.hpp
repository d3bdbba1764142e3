// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace mvitac {

// Channel-major (CHW) float image. Decoded images hold values in [0,1].
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

  bool empty() const { return pixels.empty(); }
  float& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }

  bool operator==(const Image&) const = default;
};

// Bilinear resampling with half-pixel centers.
Image resize_bilinear(const Image& src, std::size_t height, std::size_t width);
Image crop(const Image& src, std::size_t y0, std::size_t x0, std::size_t height, std::size_t width);
Image flip_horizontal(const Image& src);
// Concatenates along the channel axis; spatial sizes must match.
Image stack_channels(const Image& a, const Image& b);

// 8-bit PNG. Grayscale is expanded to RGB, alpha is dropped; values scaled to [0,1].
Image read_png(const std::filesystem::path& path);
// Writes a 1- or 3-channel image, clamping to [0,1] and rounding to 8 bits.
void write_png(const Image& image, const std::filesystem::path& path);

}  // namespace mvitac
