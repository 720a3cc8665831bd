// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "visnet/augment.hpp"
#include "visnet/error.hpp"

namespace visnet {
namespace {

constexpr double kPi = std::numbers::pi;

void require_color(const Image& img, const char* what) {
  if (img.channels != 3 || img.width == 0 || img.height == 0 || img.pixels.size() != img.width * img.height * 3) {
    throw InvalidInputError(std::string(what) + " needs a non-empty 3-channel image");
  }
}

std::vector<double> luma(const Image& img) {
  std::vector<double> out(img.width * img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      out[y * img.width + x] =
          0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
    }
  }
  return out;
}

// Clamped sample of a plane.
double sample(const std::vector<double>& p, std::size_t w, std::size_t h, long x, long y) {
  x = std::clamp(x, 0L, static_cast<long>(w) - 1);
  y = std::clamp(y, 0L, static_cast<long>(h) - 1);
  return p[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
}

double bilinear_at(const Image& img, double fx, double fy, std::size_t c) {
  fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
  const auto x0 = static_cast<std::size_t>(fx);
  const auto y0 = static_cast<std::size_t>(fy);
  const auto x1 = std::min(x0 + 1, img.width - 1);
  const auto y1 = std::min(y0 + 1, img.height - 1);
  const double tx = fx - static_cast<double>(x0);
  const double ty = fy - static_cast<double>(y0);
  const double top = img.at(x0, y0, c) * (1 - tx) + img.at(x1, y0, c) * tx;
  const double bot = img.at(x0, y1, c) * (1 - tx) + img.at(x1, y1, c) * tx;
  return top * (1 - ty) + bot * ty;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::array<std::uint8_t, 3> random_color(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, 255);
  return {static_cast<std::uint8_t>(d(rng)), static_cast<std::uint8_t>(d(rng)), static_cast<std::uint8_t>(d(rng))};
}

void check_range(const char* name, double lo, double hi, double min, double max) {
  if (!(lo <= hi) || lo < min || hi > max) {
    throw ConfigError(std::string(name) + " range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                      "] must lie within [" + std::to_string(min) + ", " + std::to_string(max) + "]");
  }
}

}  // namespace

std::string_view category_name(BackgroundCategory c) {
  switch (c) {
    case BackgroundCategory::kColor: return "color";
    case BackgroundCategory::kTexture: return "texture";
    case BackgroundCategory::kNoise: return "noise";
    case BackgroundCategory::kBlur: return "blur";
    case BackgroundCategory::kPattern: return "pattern";
    case BackgroundCategory::kGradient: return "gradient";
  }
  throw ConfigError("unknown background category");
}

std::optional<BackgroundCategory> parse_category(std::string_view name) {
  for (auto c : kCategoryOrder) {
    if (category_name(c) == name) return c;
  }
  return std::nullopt;
}

void MaskedImage::validate() const {
  require_color(image, "masked image");
  if (mask.size() != image.width * image.height) {
    throw DimensionError("mask holds " + std::to_string(mask.size()) + " pixels, image is " +
                         std::to_string(image.width) + "x" + std::to_string(image.height));
  }
}

std::vector<std::uint8_t> mask_from_image(const Image& gray) {
  if (gray.channels != 1) throw InvalidInputError("mask must be a single-channel grayscale image");
  std::vector<std::uint8_t> m(gray.pixels.size());
  std::transform(gray.pixels.begin(), gray.pixels.end(), m.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v != 0); });
  return m;
}

void AugmentConfig::validate() const {
  for (auto c : kCategoryOrder) {
    const auto& s = settings(c);
    const std::string n(category_name(c));
    if (!(s.probability >= 0.0 && s.probability <= 1.0)) throw ConfigError(n + ".probability must be in [0,1]");
    if (!(s.strength >= 0.0 && s.strength <= 1.0)) throw ConfigError(n + ".strength must be in [0,1]");
  }
  check_range("hue", hue_min, hue_max, 30.0, 150.0);
  check_range("saturation", saturation_min, saturation_max, 1.0, 2.0);
  check_range("brightness", brightness_min, brightness_max, 0.7, 1.3);
  check_range("noise_var", noise_var_min, noise_var_max, 0.01, 0.05);
  if (!(salt_pepper_max >= 0.0 && salt_pepper_max <= 1.0)) throw ConfigError("salt_pepper_max must be in [0,1]");
}

Image composite(const MaskedImage& src, const Image& background) {
  src.validate();
  if (!src.image.same_extent(background) || background.channels != 3) {
    throw DimensionError("background is " + std::to_string(background.width) + "x" +
                         std::to_string(background.height) + ", source is " + std::to_string(src.image.width) + "x" +
                         std::to_string(src.image.height));
  }
  Image out = background;
  for (std::size_t i = 0; i < src.mask.size(); ++i) {
    if (!src.mask[i]) continue;
    for (std::size_t c = 0; c < 3; ++c) out.pixels[i * 3 + c] = src.image.pixels[i * 3 + c];
  }
  return out;
}

Image blend(const Image& bg, const Image& effect, double strength) {
  if (!(strength >= 0.0 && strength <= 1.0)) throw ConfigError("strength must be in [0,1]");
  if (!bg.same_extent(effect) || bg.channels != effect.channels) throw DimensionError("blend operands differ in extent");
  if (strength == 0.0) return bg;
  Image out = bg;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = to_u8((1.0 - strength) * bg.pixels[i] + strength * effect.pixels[i]);
  }
  return out;
}

Image color_effect(const Image& bg, const ColorParams& p) {
  require_color(bg, "color effect");
  Image out = bg;
  for (std::size_t i = 0; i < bg.width * bg.height; ++i) {
    auto hsv = rgb_to_hsv(bg.pixels[i * 3] / 255.0, bg.pixels[i * 3 + 1] / 255.0, bg.pixels[i * 3 + 2] / 255.0);
    hsv.h += p.hue_degrees;
    hsv.s = std::min(1.0, hsv.s * p.saturation);
    hsv.v = std::min(1.0, hsv.v * p.brightness);
    double r, g, b;
    hsv_to_rgb(hsv, r, g, b);
    out.pixels[i * 3] = to_u8(r * 255.0);
    out.pixels[i * 3 + 1] = to_u8(g * 255.0);
    out.pixels[i * 3 + 2] = to_u8(b * 255.0);
  }
  return out;
}

Image noise_effect(const Image& bg, const NoiseParams& p, std::mt19937_64& rng) {
  require_color(bg, "noise effect");
  if (!(p.gaussian_var >= 0.0) || !(p.salt_pepper >= 0.0 && p.salt_pepper <= 1.0)) {
    throw ConfigError("noise parameters out of range");
  }
  Image out = bg;
  std::normal_distribution<double> gauss(0.0, std::sqrt(p.gaussian_var) * 255.0);
  for (auto& v : out.pixels) v = to_u8(v + gauss(rng));
  if (p.salt_pepper > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < bg.width * bg.height; ++i) {
      const double r = u(rng);
      if (r >= p.salt_pepper) continue;
      const std::uint8_t v = r < 0.5 * p.salt_pepper ? 0 : 255;
      for (std::size_t c = 0; c < 3; ++c) out.pixels[i * 3 + c] = v;
    }
  }
  return out;
}

Image canny_edges(const Image& rgb, double low, double high) {
  require_color(rgb, "edge detection");
  const std::size_t w = rgb.width, h = rgb.height;
  const auto raw = luma(rgb);
  // 3x3 Gaussian smoothing before gradients.
  std::vector<double> lum(w * h);
  static constexpr double kGauss[3] = {0.25, 0.5, 0.25};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          s += kGauss[dy + 1] * kGauss[dx + 1] *
               sample(raw, w, h, static_cast<long>(x) + dx, static_cast<long>(y) + dy);
        }
      }
      lum[y * w + x] = s;
    }
  }
  std::vector<double> mag(w * h), ang(w * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const long X = static_cast<long>(x), Y = static_cast<long>(y);
      auto s = [&](long dx, long dy) { return sample(lum, w, h, X + dx, Y + dy); };
      const double gx = (s(1, -1) + 2 * s(1, 0) + s(1, 1)) - (s(-1, -1) + 2 * s(-1, 0) + s(-1, 1));
      const double gy = (s(-1, 1) + 2 * s(0, 1) + s(1, 1)) - (s(-1, -1) + 2 * s(0, -1) + s(1, -1));
      mag[y * w + x] = std::hypot(gx, gy);
      ang[y * w + x] = std::atan2(gy, gx);
    }
  }
  // Non-maximum suppression along the quantized gradient direction.
  std::vector<double> thin(w * h, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double a = ang[y * w + x] * 180.0 / kPi;
      if (a < 0) a += 180.0;
      long dx = 1, dy = 0;
      if (a >= 22.5 && a < 67.5) {
        dx = 1; dy = 1;
      } else if (a >= 67.5 && a < 112.5) {
        dx = 0; dy = 1;
      } else if (a >= 112.5 && a < 157.5) {
        dx = -1; dy = 1;
      }
      const double m = mag[y * w + x];
      const long X = static_cast<long>(x), Y = static_cast<long>(y);
      if (m >= sample(mag, w, h, X + dx, Y + dy) && m >= sample(mag, w, h, X - dx, Y - dy)) thin[y * w + x] = m;
    }
  }
  // Hysteresis: grow strong edges through weak ones.
  Image edges(w, h, 1, 0);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < w * h; ++i) {
    if (thin[i] >= high) {
      edges.pixels[i] = 255;
      stack.push_back(i);
    }
  }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const long X = static_cast<long>(i % w), Y = static_cast<long>(i / w);
    for (long dy = -1; dy <= 1; ++dy) {
      for (long dx = -1; dx <= 1; ++dx) {
        const long nx = X + dx, ny = Y + dy;
        if (nx < 0 || ny < 0 || nx >= static_cast<long>(w) || ny >= static_cast<long>(h)) continue;
        const std::size_t j = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
        if (edges.pixels[j] == 0 && thin[j] >= low) {
          edges.pixels[j] = 255;
          stack.push_back(j);
        }
      }
    }
  }
  return edges;
}

Image texture_effect(const Image& bg, const TextureParams& p) {
  require_color(bg, "texture effect");
  static constexpr double kEmboss[3][3] = {{-2, -1, 0}, {-1, 1, 1}, {0, 1, 2}};
  const std::size_t w = bg.width, h = bg.height;
  Image out(w, h, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> plane(w * h);
    for (std::size_t i = 0; i < w * h; ++i) plane[i] = bg.pixels[i * 3 + c];
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            s += kEmboss[dy + 1][dx + 1] * sample(plane, w, h, static_cast<long>(x) + dx, static_cast<long>(y) + dy);
          }
        }
        out.at(x, y, c) = to_u8(s);
      }
    }
  }
  const Image edges = canny_edges(bg, p.low_threshold, p.high_threshold);
  for (std::size_t i = 0; i < w * h; ++i) {
    if (edges.pixels[i]) out.pixels[i * 3] = out.pixels[i * 3 + 1] = out.pixels[i * 3 + 2] = 255;
  }
  return out;
}

Image blur_effect(const Image& bg, const BlurParams& p) {
  require_color(bg, "blur effect");
  Image out(bg.width, bg.height, 3);
  if (p.kind == BlurKind::kMotion) {
    if (!(p.length >= 1.0)) throw ConfigError("motion blur length must be at least 1");
    const auto taps = static_cast<int>(std::lround(p.length));
    const double rad = p.angle * kPi / 180.0;
    const double ux = std::cos(rad), uy = std::sin(rad);
    for (std::size_t y = 0; y < bg.height; ++y) {
      for (std::size_t x = 0; x < bg.width; ++x) {
        for (std::size_t c = 0; c < 3; ++c) {
          double s = 0.0;
          for (int t = 0; t < taps; ++t) {
            const double off = t - 0.5 * (taps - 1);
            s += bilinear_at(bg, static_cast<double>(x) + off * ux, static_cast<double>(y) + off * uy, c);
          }
          out.at(x, y, c) = to_u8(s / taps);
        }
      }
    }
    return out;
  }
  if (!(p.zoom >= 0.0 && p.zoom < 1.0)) throw ConfigError("zoom blur amount must be in [0,1)");
  constexpr int kTaps = 8;
  const double cx = 0.5 * static_cast<double>(bg.width - 1);
  const double cy = 0.5 * static_cast<double>(bg.height - 1);
  for (std::size_t y = 0; y < bg.height; ++y) {
    for (std::size_t x = 0; x < bg.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int t = 0; t < kTaps; ++t) {
          const double f = 1.0 - p.zoom * t / (kTaps - 1);
          s += bilinear_at(bg, cx + (static_cast<double>(x) - cx) * f, cy + (static_cast<double>(y) - cy) * f, c);
        }
        out.at(x, y, c) = to_u8(s / kTaps);
      }
    }
  }
  return out;
}

Image pattern_effect(const Image& bg, const PatternParams& p) {
  require_color(bg, "pattern effect");
  if (!(p.pitch > 0.0) || !(p.thickness > 0.0)) throw ConfigError("pattern pitch and thickness must be positive");
  Image out = bg;
  for (std::size_t y = 0; y < bg.height; ++y) {
    for (std::size_t x = 0; x < bg.width; ++x) {
      const double fx = static_cast<double>(x), fy = static_cast<double>(y);
      bool on = false;
      switch (p.kind) {
        case PatternKind::kGrid:
          on = std::fmod(fx, p.pitch) < p.thickness || std::fmod(fy, p.pitch) < p.thickness;
          break;
        case PatternKind::kCircles:
          on = std::fmod(std::hypot(fx - p.center_x, fy - p.center_y), p.pitch) < p.thickness;
          break;
        case PatternKind::kStripes: {
          const double t = p.anti_diagonal ? fx - fy + static_cast<double>(bg.height) : fx + fy;
          on = std::fmod(t / std::numbers::sqrt2, p.pitch) < p.thickness;
          break;
        }
      }
      if (on) {
        for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = p.color[c];
      }
    }
  }
  return out;
}

Image gradient_effect(const Image& bg, const GradientParams& p) {
  require_color(bg, "gradient effect");
  Image out(bg.width, bg.height, 3);
  const double w = static_cast<double>(bg.width - 1), h = static_cast<double>(bg.height - 1);
  const double rad = p.angle * kPi / 180.0;
  const double ux = std::cos(rad), uy = std::sin(rad);
  // Projection extent of the frame onto the gradient axis.
  double lo = 0.0, hi = 0.0;
  for (double cx : {0.0, w}) {
    for (double cy : {0.0, h}) {
      lo = std::min(lo, cx * ux + cy * uy);
      hi = std::max(hi, cx * ux + cy * uy);
    }
  }
  double max_r = 0.0;
  for (double cx : {0.0, w}) {
    for (double cy : {0.0, h}) max_r = std::max(max_r, std::hypot(cx - p.center_x, cy - p.center_y));
  }
  for (std::size_t y = 0; y < bg.height; ++y) {
    for (std::size_t x = 0; x < bg.width; ++x) {
      const double fx = static_cast<double>(x), fy = static_cast<double>(y);
      double t = 0.0;
      switch (p.kind) {
        case GradientKind::kLinear:
          t = hi > lo ? (fx * ux + fy * uy - lo) / (hi - lo) : 0.0;
          break;
        case GradientKind::kRadial:
          t = max_r > 0.0 ? std::hypot(fx - p.center_x, fy - p.center_y) / max_r : 0.0;
          break;
        case GradientKind::kAngular:
          t = (std::atan2(fy - p.center_y, fx - p.center_x) + kPi) / (2.0 * kPi);
          break;
      }
      t = std::clamp(t, 0.0, 1.0);
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = to_u8((1.0 - t) * p.start[c] + t * p.end[c]);
    }
  }
  return out;
}

Image background_transform(const Image& bg, BackgroundCategory category, double strength, const AugmentConfig& cfg,
                           std::mt19937_64& rng) {
  require_color(bg, "background transform");
  if (!(strength >= 0.0 && strength <= 1.0)) throw ConfigError("strength must be in [0,1]");
  const double w = static_cast<double>(bg.width), h = static_cast<double>(bg.height);
  Image effect;
  switch (category) {
    case BackgroundCategory::kColor:
      effect = color_effect(bg, {uniform(rng, cfg.hue_min, cfg.hue_max), uniform(rng, cfg.saturation_min, cfg.saturation_max),
                                 uniform(rng, cfg.brightness_min, cfg.brightness_max)});
      break;
    case BackgroundCategory::kTexture: {
      const double low = uniform(rng, 20.0, 60.0);
      effect = texture_effect(bg, {low, low * uniform(rng, 2.0, 3.0)});
      break;
    }
    case BackgroundCategory::kNoise: {
      const double var = uniform(rng, cfg.noise_var_min, cfg.noise_var_max);
      const double sp = uniform(rng, 0.0, cfg.salt_pepper_max);
      effect = noise_effect(bg, {var, sp}, rng);
      break;
    }
    case BackgroundCategory::kBlur: {
      BlurParams p;
      p.kind = std::bernoulli_distribution(0.5)(rng) ? BlurKind::kMotion : BlurKind::kZoom;
      p.length = uniform(rng, 5.0, 15.0);
      p.angle = uniform(rng, 0.0, 180.0);
      p.zoom = uniform(rng, 0.05, 0.2);
      effect = blur_effect(bg, p);
      break;
    }
    case BackgroundCategory::kPattern: {
      PatternParams p;
      p.kind = static_cast<PatternKind>(std::uniform_int_distribution<int>(0, 2)(rng));
      p.pitch = uniform(rng, 8.0, 24.0);
      p.thickness = uniform(rng, 1.0, 3.0);
      p.center_x = uniform(rng, 0.0, w);
      p.center_y = uniform(rng, 0.0, h);
      p.anti_diagonal = std::bernoulli_distribution(0.5)(rng);
      p.color = random_color(rng);
      effect = pattern_effect(bg, p);
      break;
    }
    case BackgroundCategory::kGradient: {
      GradientParams p;
      p.kind = static_cast<GradientKind>(std::uniform_int_distribution<int>(0, 2)(rng));
      p.angle = uniform(rng, 0.0, 360.0);
      p.center_x = uniform(rng, 0.0, w);
      p.center_y = uniform(rng, 0.0, h);
      p.start = random_color(rng);
      p.end = random_color(rng);
      effect = gradient_effect(bg, p);
      break;
    }
    default:
      throw ConfigError("unknown background category " + std::to_string(static_cast<int>(category)));
  }
  return blend(bg, effect, strength);
}

Image augment_pipeline(const MaskedImage& src, const AugmentConfig& cfg, std::mt19937_64& rng) {
  src.validate();
  cfg.validate();
  Image bg = src.image;
  for (std::size_t i = 0; i < src.mask.size(); ++i) {
    if (src.mask[i]) bg.pixels[i * 3] = bg.pixels[i * 3 + 1] = bg.pixels[i * 3 + 2] = 0;
  }
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  bool changed = false;
  for (auto c : kCategoryOrder) {
    const auto& s = cfg.settings(c);
    if (coin(rng) >= s.probability) continue;
    bg = background_transform(bg, c, s.strength, cfg, rng);
    changed = true;
  }
  if (!changed) return src.image;
  return composite(src, bg);
}

std::mt19937_64 image_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x56u};
  return std::mt19937_64(seq);
}

}  // namespace visnet
