// SPDX-License-Identifier: Apache-2.0
#include "visnet/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "visnet/error.hpp"

namespace visnet {
namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

Image read_pnm(std::istream& in, const std::string& name) {
  const std::string magic = next_token(in);
  std::size_t channels;
  if (magic == "P6") {
    channels = 3;
  } else if (magic == "P5") {
    channels = 1;
  } else {
    throw ParseError(name + ": not a binary PPM/PGM image");
  }
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(next_token(in));
    h = std::stoul(next_token(in));
    maxval = std::stoul(next_token(in));
  } catch (const std::exception&) {
    throw ParseError(name + ": malformed image header");
  }
  if (w == 0 || h == 0 || maxval != 255) throw ParseError(name + ": only 8-bit images with positive extents");
  Image img(w, h, channels);
  if (!in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()))) {
    throw ParseError(name + ": truncated pixel data");
  }
  return img;
}

Image load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open image '" + path + "'");
  return read_pnm(in, path);
}

void write_pnm(std::ostream& out, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw InvalidInputError("PNM output needs 1 or 3 channels");
  out << (image.channels == 3 ? "P6" : "P5") << '\n' << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
}

void save_pnm(const std::string& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInputError("cannot write image '" + path + "'");
  write_pnm(out, image);
}

Hsv rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  Hsv out{0.0, mx > 0.0 ? d / mx : 0.0, mx};
  if (d > 0.0) {
    if (mx == r) {
      out.h = 60.0 * std::fmod((g - b) / d, 6.0);
    } else if (mx == g) {
      out.h = 60.0 * ((b - r) / d + 2.0);
    } else {
      out.h = 60.0 * ((r - g) / d + 4.0);
    }
    if (out.h < 0.0) out.h += 360.0;
  }
  return out;
}

void hsv_to_rgb(const Hsv& hsv, double& r, double& g, double& b) {
  const double h = std::fmod(std::fmod(hsv.h, 360.0) + 360.0, 360.0);
  const double c = hsv.v * hsv.s;
  const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
  const double m = hsv.v - c;
  double rp = 0, gp = 0, bp = 0;
  switch (static_cast<int>(h / 60.0)) {
    case 0: rp = c; gp = x; break;
    case 1: rp = x; gp = c; break;
    case 2: gp = c; bp = x; break;
    case 3: gp = x; bp = c; break;
    case 4: rp = x; bp = c; break;
    default: rp = c; bp = x; break;
  }
  r = rp + m;
  g = gp + m;
  b = bp + m;
}

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

Image resize_bilinear(const Image& src, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw InvalidInputError("resize target must be positive");
  if (src.width == width && src.height == height) return src;
  Image out(width, height, src.channels);
  const double sy = static_cast<double>(src.height) / static_cast<double>(height);
  const double sx = static_cast<double>(src.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const auto y1 = std::min(y0 + 1, src.height - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const auto x1 = std::min(x0 + 1, src.width - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < src.channels; ++c) {
        const double top = src.at(x0, y0, c) * (1 - tx) + src.at(x1, y0, c) * tx;
        const double bot = src.at(x0, y1, c) * (1 - tx) + src.at(x1, y1, c) * tx;
        out.at(x, y, c) = to_u8(top * (1 - ty) + bot * ty);
      }
    }
  }
  return out;
}

}  // namespace visnet
