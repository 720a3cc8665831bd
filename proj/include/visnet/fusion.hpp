// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <random>
#include <vector>

#include "visnet/layers.hpp"

namespace visnet {

inline constexpr std::size_t kNumScales = 4;
inline constexpr std::array<std::size_t, kNumScales> kResNetStageChannels{256, 512, 1024, 2048};
inline constexpr std::array<std::size_t, kNumScales> kResNetStageStrides{4, 8, 16, 32};
inline constexpr std::size_t kMarketTrainIdentities = 751;

/// Stage outputs 1-4 of the backbone, finest first.
struct FeaturePyramid {
  std::array<Tensor, kNumScales> stages;

  /// Checks rank, shared batch, and stage-to-stage halving of the spatial extent.
  void validate() const;
  std::size_t batch() const { return stages[0].dim(0); }
};

struct FusionConfig {
  std::array<std::size_t, kNumScales> stage_channels = kResNetStageChannels;
  std::size_t dim = 2048;
  std::size_t attention_hidden = 512;
  /// Output extent of the attention MLP; anything other than kNumScales is rejected.
  std::size_t attention_outputs = kNumScales;
  bool projection_bias = true;
};

struct Projection {
  Affine conv;
  BatchNorm bn;
};

struct FusionParams {
  FusionParams() = default;
  FusionParams(const FusionConfig& config, std::mt19937_64& rng);

  std::vector<NamedParam> named();

  std::array<Projection, kNumScales> projections;
  Affine attention_hidden;
  Affine attention_out;
};

struct FusionOutputs {
  std::array<Var, kNumScales> projected;
  std::array<Var, kNumScales> aligned;
  /// Per-image scale weights [B,4], each in (0,1), not normalized.
  Var attention;
  Var fused;
};

std::array<Var, kNumScales> bind_pyramid(Tape& tape, const FeaturePyramid& pyramid);

/// F'_i = relu(bn(conv1x1(F_i))) for each stage.
std::array<Var, kNumScales> project_scales(Tape& tape, const std::array<Var, kNumScales>& stages, FusionParams& p,
                                           Mode mode);

/// Resamples every map to the spatial extent of the coarsest stage.
std::array<Var, kNumScales> align_scales(const std::array<Var, kNumScales>& projected);

/// sigmoid(affine2(relu(affine1(GAP(mean of the aligned maps))))) -> [B,4].
Var scale_attention(Tape& tape, const std::array<Var, kNumScales>& aligned, FusionParams& p);

/// sum_i w[b,i] * aligned_i[b].
Var fuse(const std::array<Var, kNumScales>& aligned, Var weights);

FusionOutputs fusion_forward(Tape& tape, const FeaturePyramid& pyramid, FusionParams& p, Mode mode);
FusionOutputs fusion_forward(Tape& tape, const std::array<Var, kNumScales>& stages, FusionParams& p, Mode mode);

struct IdentityHeadParams {
  IdentityHeadParams() = default;
  IdentityHeadParams(std::size_t dim, std::size_t num_classes, std::mt19937_64& rng);

  std::vector<NamedParam> named();

  /// BN-neck; its shift is frozen at zero.
  BatchNorm neck;
  Tensor classifier;  // [num_classes, D]
  /// Must stay empty: the classifier is bias-free.
  std::optional<Tensor> classifier_bias;
};

struct IdentityOutputs {
  Var embedding;  // [B,D]
  Var logits;     // [B,num_classes]
};

IdentityOutputs identity_head(Tape& tape, Var fused, IdentityHeadParams& p, Mode mode);

}  // namespace visnet
