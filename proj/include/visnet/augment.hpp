// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "visnet/image.hpp"
#include "visnet/tensor.hpp"

namespace visnet {

/// Background transformation categories, in application order.
enum class BackgroundCategory { kColor, kTexture, kNoise, kBlur, kPattern, kGradient };
inline constexpr std::size_t kNumCategories = 6;
inline constexpr std::array<BackgroundCategory, kNumCategories> kCategoryOrder{
    BackgroundCategory::kColor, BackgroundCategory::kTexture, BackgroundCategory::kNoise,
    BackgroundCategory::kBlur,  BackgroundCategory::kPattern, BackgroundCategory::kGradient};

std::string_view category_name(BackgroundCategory c);
std::optional<BackgroundCategory> parse_category(std::string_view name);

/// Color image plus person mask (nonzero = person).
struct MaskedImage {
  Image image;
  std::vector<std::uint8_t> mask;

  void validate() const;
  bool is_person(std::size_t x, std::size_t y) const { return mask[y * image.width + x] != 0; }
};

/// Reads a grayscale mask image; nonzero pixels are person.
std::vector<std::uint8_t> mask_from_image(const Image& gray);

struct CategorySettings {
  double probability = 0.5;
  double strength = 1.0;
};

struct AugmentConfig {
  std::array<CategorySettings, kNumCategories> categories{};

  double hue_min = 30.0, hue_max = 150.0;          // degrees
  double saturation_min = 1.0, saturation_max = 2.0;
  double brightness_min = 0.7, brightness_max = 1.3;
  double noise_var_min = 0.01, noise_var_max = 0.05;  // on the [0,1] intensity scale
  double salt_pepper_max = 0.02;                      // fraction of pixels
  std::uint64_t seed = 0;

  /// Rejects ranges outside the published bounds and p, strength outside [0,1].
  void validate() const;
  CategorySettings& settings(BackgroundCategory c) { return categories[static_cast<std::size_t>(c)]; }
  const CategorySettings& settings(BackgroundCategory c) const { return categories[static_cast<std::size_t>(c)]; }
};

/// Person pixels from `src`, every other pixel from `background`.
Image composite(const MaskedImage& src, const Image& background);

/// out = round((1 - strength) * bg + strength * effect).
Image blend(const Image& bg, const Image& effect, double strength);

struct ColorParams {
  double hue_degrees = 0.0;
  double saturation = 1.0;
  double brightness = 1.0;
};
Image color_effect(const Image& bg, const ColorParams& p);

struct NoiseParams {
  double gaussian_var = 0.01;
  double salt_pepper = 0.0;
};
Image noise_effect(const Image& bg, const NoiseParams& p, std::mt19937_64& rng);

/// Emboss filter with Canny edges painted white.
struct TextureParams {
  double low_threshold = 40.0;
  double high_threshold = 100.0;
};
Image texture_effect(const Image& bg, const TextureParams& p);
/// Binary Canny edge map (255 on edges) of the luma channel.
Image canny_edges(const Image& rgb, double low, double high);

enum class BlurKind { kMotion, kZoom };
struct BlurParams {
  BlurKind kind = BlurKind::kMotion;
  double length = 9.0;     // motion: kernel length in pixels
  double angle = 0.0;      // motion: degrees
  double zoom = 0.1;       // zoom: fraction of the radius swept
};
Image blur_effect(const Image& bg, const BlurParams& p);

enum class PatternKind { kGrid, kCircles, kStripes };
struct PatternParams {
  PatternKind kind = PatternKind::kGrid;
  double pitch = 12.0;
  double thickness = 2.0;
  double center_x = 0.0, center_y = 0.0;  // circles
  bool anti_diagonal = false;             // stripes
  std::array<std::uint8_t, 3> color{255, 255, 255};
};
Image pattern_effect(const Image& bg, const PatternParams& p);

enum class GradientKind { kLinear, kRadial, kAngular };
struct GradientParams {
  GradientKind kind = GradientKind::kLinear;
  double angle = 0.0;                     // linear: degrees
  double center_x = 0.0, center_y = 0.0;  // radial/angular
  std::array<std::uint8_t, 3> start{0, 0, 0};
  std::array<std::uint8_t, 3> end{255, 255, 255};
};
Image gradient_effect(const Image& bg, const GradientParams& p);

/// Draws the category parameters from `rng` and blends the effect in.
/// strength 0 returns `bg` unchanged.
Image background_transform(const Image& bg, BackgroundCategory category, double strength, const AugmentConfig& cfg,
                           std::mt19937_64& rng);

/// Applies each category with its probability in kCategoryOrder to the
/// background (person pixels zeroed), then composites the person back.
Image augment_pipeline(const MaskedImage& src, const AugmentConfig& cfg, std::mt19937_64& rng);

/// Independent stream per (seed, image index).
std::mt19937_64 image_rng(std::uint64_t seed, std::uint64_t index);

struct TransformConfig {
  std::size_t height = 256;
  std::size_t width = 128;
  std::size_t padding = 10;
  bool random_crop = true;
  double flip_probability = 0.5;
  bool color_jitter = true;
  double brightness = 0.2;
  double contrast = 0.15;
  double saturation = 0.15;
  double hue = 0.1;
  double erase_probability = 0.5;
  double erase_area_min = 0.02;
  double erase_area_max = 0.40;
  double erase_aspect_min = 0.3;
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};
};

struct TransformTrace {
  bool flipped = false;
  bool erased = false;
  std::size_t erase_x = 0, erase_y = 0, erase_w = 0, erase_h = 0;
};

/// Resize, pad + random crop, horizontal flip and color jitter.
Image train_transform_image(const Image& image, const TransformConfig& cfg, std::mt19937_64& rng,
                            TransformTrace* trace = nullptr);

/// [3,H,W] tensor of (pixel/255 - mean) / std.
Tensor to_normalized_tensor(const Image& image, const TransformConfig& cfg);

/// Zeroes one random rectangle covering a uniform area fraction of the frame.
void random_erase(Tensor& chw, const TransformConfig& cfg, std::mt19937_64& rng, TransformTrace* trace = nullptr);

/// Full training chain to a normalized [3,256,128] tensor.
Tensor train_transforms(const Image& image, const TransformConfig& cfg, std::mt19937_64& rng,
                        TransformTrace* trace = nullptr);

/// Test-time chain: resize and normalize only.
Tensor test_transforms(const Image& image, const TransformConfig& cfg);

}  // namespace visnet
