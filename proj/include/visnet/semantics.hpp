// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

#include "visnet/layers.hpp"

namespace visnet {

/// Per-location semantic classes.
enum SemanticClass : std::uint8_t { kUpperBody = 0, kLowerBody = 1, kShoes = 2, kBackground = 3 };
inline constexpr std::size_t kNumSemanticClasses = 4;

/// Vertical body partition of a normalized row coordinate in [0,1).
/// Below 0.4 is upper body, below 0.8 lower body, the rest shoes.
SemanticClass spatial_class(double y_norm);

struct ForegroundMask {
  std::size_t batch = 0, height = 0, width = 0;
  std::vector<std::uint8_t> foreground;  // [B,H,W], 1 = foreground
  std::vector<double> magnitude;         // [B,H,W]
  std::vector<double> mean;              // per image
  std::vector<double> stddev;            // per image, population
};

/// A location is foreground when the L2 norm of its feature vector exceeds
/// mean + 0.5 * stddev of all norms in the same image.
ForegroundMask foreground_mask(const Tensor& fused);

struct PseudoLabelMap {
  std::size_t batch = 0, height = 0, width = 0;
  std::vector<std::uint8_t> labels;      // [B,H,W]
  std::vector<std::uint8_t> foreground;  // [B,H,W]
  std::vector<double> mean;
  std::vector<double> stddev;

  std::size_t size() const { return labels.size(); }
  std::uint8_t label(std::size_t b, std::size_t y, std::size_t x) const { return labels[(b * height + y) * width + x]; }
};

/// Detached targets: spatial class of row y/H where foreground, background elsewhere.
PseudoLabelMap pseudo_labels(const Tensor& fused);

/// Writes the labels of one image as a binary PPM, one pixel per location
/// (upper red, lower green, shoes blue, background black).
void write_label_ppm(std::ostream& out, const PseudoLabelMap& labels, std::size_t image);

struct SemanticHeadConfig {
  std::size_t input = 2048;
  std::array<std::size_t, 2> hidden{1024, 512};
  double dropout = 0.1;
};

/// Per-location MLP: affine, BN, ReLU, dropout twice, then affine to 4 classes.
struct SemanticHeadParams {
  SemanticHeadParams() = default;
  SemanticHeadParams(const SemanticHeadConfig& config, std::mt19937_64& rng);

  std::vector<NamedParam> named();

  Affine fc1;
  BatchNorm bn1;
  Affine fc2;
  BatchNorm bn2;
  Affine fc3;
  double dropout = 0.1;
};

/// [B,D,H,W] -> logits [B*H*W, 4], row order (b, y, x). Batch norm runs over
/// the flattened locations.
Var semantic_head_forward(Tape& tape, Var fused, SemanticHeadParams& p, Mode mode, std::mt19937_64& rng);

}  // namespace visnet
