// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace visnet {

/// Interleaved 8-bit image, row-major, `channels` values per pixel.
struct Image {
  Image() = default;
  Image(std::size_t width, std::size_t height, std::size_t channels, std::uint8_t fill = 0)
      : width(width), height(height), channels(channels), pixels(width * height * channels, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }
  bool same_extent(const Image& o) const { return width == o.width && height == o.height; }
  bool operator==(const Image&) const = default;

  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;
};

/// Binary netpbm: P6 for 3-channel, P5 for 1-channel images.
Image read_pnm(std::istream& in, const std::string& name = "<stream>");
Image load_pnm(const std::string& path);
void write_pnm(std::ostream& out, const Image& image);
void save_pnm(const std::string& path, const Image& image);

struct Hsv {
  double h;  // degrees in [0,360)
  double s;  // [0,1]
  double v;  // [0,1]
};

Hsv rgb_to_hsv(double r, double g, double b);  // inputs in [0,1]
void hsv_to_rgb(const Hsv& hsv, double& r, double& g, double& b);

std::uint8_t to_u8(double v);

/// Half-pixel-center bilinear resize.
Image resize_bilinear(const Image& src, std::size_t width, std::size_t height);

}  // namespace visnet
