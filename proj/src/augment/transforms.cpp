// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <string>

#include "visnet/augment.hpp"
#include "visnet/error.hpp"

namespace visnet {
namespace {

void require_color_input(const Image& img) {
  if (img.channels != 3) {
    throw InvalidInputError("training transforms need a color image, got " + std::to_string(img.channels) +
                            " channel(s)");
  }
  if (img.width == 0 || img.height == 0) throw InvalidInputError("training transforms need a non-empty image");
}

void validate(const TransformConfig& cfg) {
  if (cfg.height == 0 || cfg.width == 0) throw ConfigError("transform output size must be positive");
  if (!(cfg.erase_area_min > 0.0 && cfg.erase_area_min <= cfg.erase_area_max && cfg.erase_area_max < 1.0)) {
    throw ConfigError("erase area range must satisfy 0 < min <= max < 1");
  }
  if (!(cfg.erase_aspect_min > 0.0 && cfg.erase_aspect_min <= 1.0)) throw ConfigError("erase aspect must be in (0,1]");
  for (double s : cfg.stddev) {
    if (!(s > 0.0)) throw ConfigError("normalization stddev must be positive");
  }
}

void jitter(Image& img, const TransformConfig& cfg, std::mt19937_64& rng) {
  auto factor = [&](double amount) { return std::uniform_real_distribution<double>(1.0 - amount, 1.0 + amount)(rng); };
  const double b = factor(cfg.brightness);
  const double c = factor(cfg.contrast);
  const double s = factor(cfg.saturation);
  const double h = std::uniform_real_distribution<double>(-cfg.hue, cfg.hue)(rng);

  const std::size_t n = img.width * img.height;
  std::vector<double> px(img.pixels.begin(), img.pixels.end());
  for (auto& v : px) v = std::clamp(v * b, 0.0, 255.0);
  double mean_gray = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_gray += 0.299 * px[i * 3] + 0.587 * px[i * 3 + 1] + 0.114 * px[i * 3 + 2];
  mean_gray /= static_cast<double>(n);
  for (auto& v : px) v = std::clamp(mean_gray + c * (v - mean_gray), 0.0, 255.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = 0.299 * px[i * 3] + 0.587 * px[i * 3 + 1] + 0.114 * px[i * 3 + 2];
    for (std::size_t k = 0; k < 3; ++k) px[i * 3 + k] = std::clamp(g + s * (px[i * 3 + k] - g), 0.0, 255.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto hsv = rgb_to_hsv(px[i * 3] / 255.0, px[i * 3 + 1] / 255.0, px[i * 3 + 2] / 255.0);
    hsv.h += h * 360.0;
    double r, g, bl;
    hsv_to_rgb(hsv, r, g, bl);
    img.pixels[i * 3] = to_u8(r * 255.0);
    img.pixels[i * 3 + 1] = to_u8(g * 255.0);
    img.pixels[i * 3 + 2] = to_u8(bl * 255.0);
  }
}

}  // namespace

Image train_transform_image(const Image& image, const TransformConfig& cfg, std::mt19937_64& rng,
                            TransformTrace* trace) {
  require_color_input(image);
  validate(cfg);
  Image resized = resize_bilinear(image, cfg.width, cfg.height);

  // Zero padding followed by a crop back to the target size.
  const std::size_t pad = cfg.padding;
  std::size_t ox = pad, oy = pad;
  if (cfg.random_crop && pad > 0) {
    std::uniform_int_distribution<std::size_t> d(0, 2 * pad);
    ox = d(rng);
    oy = d(rng);
  }
  Image out(cfg.width, cfg.height, 3, 0);
  for (std::size_t y = 0; y < cfg.height; ++y) {
    const long sy = static_cast<long>(y + oy) - static_cast<long>(pad);
    if (sy < 0 || sy >= static_cast<long>(cfg.height)) continue;
    for (std::size_t x = 0; x < cfg.width; ++x) {
      const long sx = static_cast<long>(x + ox) - static_cast<long>(pad);
      if (sx < 0 || sx >= static_cast<long>(cfg.width)) continue;
      for (std::size_t c = 0; c < 3; ++c) {
        out.at(x, y, c) = resized.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy), c);
      }
    }
  }

  const bool flip = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.flip_probability;
  if (flip) {
    for (std::size_t y = 0; y < cfg.height; ++y) {
      for (std::size_t x = 0; x < cfg.width / 2; ++x) {
        for (std::size_t c = 0; c < 3; ++c) std::swap(out.at(x, y, c), out.at(cfg.width - 1 - x, y, c));
      }
    }
  }
  if (trace) trace->flipped = flip;
  if (cfg.color_jitter) jitter(out, cfg, rng);
  return out;
}

Tensor to_normalized_tensor(const Image& image, const TransformConfig& cfg) {
  require_color_input(image);
  Tensor t({3, image.height, image.width});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < image.height; ++y) {
      for (std::size_t x = 0; x < image.width; ++x) {
        t[(c * image.height + y) * image.width + x] = (image.at(x, y, c) / 255.0 - cfg.mean[c]) / cfg.stddev[c];
      }
    }
  }
  return t;
}

void random_erase(Tensor& chw, const TransformConfig& cfg, std::mt19937_64& rng, TransformTrace* trace) {
  require_rank(chw, 3, "random_erase");
  const std::size_t h = chw.dim(1), w = chw.dim(2);
  const double total = static_cast<double>(h * w);
  if (trace) trace->erased = false;
  if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) >= cfg.erase_probability) return;
  std::uniform_real_distribution<double> area_d(cfg.erase_area_min, cfg.erase_area_max);
  std::uniform_real_distribution<double> log_aspect(std::log(cfg.erase_aspect_min), -std::log(cfg.erase_aspect_min));
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double area = area_d(rng) * total;
    const double aspect = std::exp(log_aspect(rng));
    const auto eh = static_cast<std::size_t>(std::lround(std::sqrt(area * aspect)));
    const auto ew = static_cast<std::size_t>(std::lround(std::sqrt(area / aspect)));
    if (eh == 0 || ew == 0 || eh >= h || ew >= w) continue;
    const double frac = static_cast<double>(eh * ew) / total;
    if (frac < cfg.erase_area_min || frac > cfg.erase_area_max) continue;
    const std::size_t y0 = std::uniform_int_distribution<std::size_t>(0, h - eh)(rng);
    const std::size_t x0 = std::uniform_int_distribution<std::size_t>(0, w - ew)(rng);
    for (std::size_t c = 0; c < chw.dim(0); ++c) {
      for (std::size_t y = y0; y < y0 + eh; ++y) {
        for (std::size_t x = x0; x < x0 + ew; ++x) chw[(c * h + y) * w + x] = 0.0;
      }
    }
    if (trace) *trace = {trace->flipped, true, x0, y0, ew, eh};
    return;
  }
}

Tensor train_transforms(const Image& image, const TransformConfig& cfg, std::mt19937_64& rng, TransformTrace* trace) {
  const Image img = train_transform_image(image, cfg, rng, trace);
  Tensor t = to_normalized_tensor(img, cfg);
  random_erase(t, cfg, rng, trace);
  return t;
}

Tensor test_transforms(const Image& image, const TransformConfig& cfg) {
  require_color_input(image);
  validate(cfg);
  return to_normalized_tensor(resize_bilinear(image, cfg.width, cfg.height), cfg);
}

}  // namespace visnet
