// SPDX-License-Identifier: Apache-2.0
#include "visnet/fusion.hpp"

#include <cmath>
#include <string>

#include "visnet/error.hpp"

namespace visnet {

void FeaturePyramid::validate() const {
  for (std::size_t i = 0; i < kNumScales; ++i) {
    require_rank(stages[i], 4, "pyramid stage");
    if (stages[i].dim(0) != stages[0].dim(0)) {
      throw DimensionError("pyramid stages disagree on batch size: " + shape_to_string(stages[0].shape()) + " vs " +
                           shape_to_string(stages[i].shape()));
    }
    if (i > 0) {
      const auto& prev = stages[i - 1].shape();
      const auto& cur = stages[i].shape();
      if ((prev[2] + 1) / 2 != cur[2] || (prev[3] + 1) / 2 != cur[3]) {
        throw DimensionError("pyramid stage " + std::to_string(i + 1) + " extent " + shape_to_string(cur) +
                             " is not half of stage " + std::to_string(i) + " extent " + shape_to_string(prev));
      }
    }
  }
}

FusionParams::FusionParams(const FusionConfig& config, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < kNumScales; ++i) {
    projections[i].conv = Affine(config.stage_channels[i], config.dim, config.projection_bias, rng);
    projections[i].bn = BatchNorm(config.dim);
  }
  attention_hidden = Affine(config.dim, config.attention_hidden, true, rng);
  attention_out = Affine(config.attention_hidden, config.attention_outputs, true, rng);
}

std::vector<NamedParam> FusionParams::named() {
  std::vector<NamedParam> out;
  for (std::size_t i = 0; i < kNumScales; ++i) {
    const std::string p = "fusion.proj" + std::to_string(i + 1);
    projections[i].conv.collect(p + ".conv", out);
    projections[i].bn.collect(p + ".bn", out);
  }
  attention_hidden.collect("fusion.attn.fc1", out);
  attention_out.collect("fusion.attn.fc2", out);
  return out;
}

std::array<Var, kNumScales> bind_pyramid(Tape& tape, const FeaturePyramid& pyramid) {
  pyramid.validate();
  std::array<Var, kNumScales> out;
  for (std::size_t i = 0; i < kNumScales; ++i) {
    out[i] = tape.constant(Tensor(pyramid.stages[i].shape(), pyramid.stages[i].values()));
  }
  return out;
}

std::array<Var, kNumScales> project_scales(Tape& tape, const std::array<Var, kNumScales>& stages, FusionParams& p,
                                           Mode mode) {
  std::array<Var, kNumScales> out;
  for (std::size_t i = 0; i < kNumScales; ++i) {
    if (stages[i].dim(1) != p.projections[i].conv.in()) {
      throw DimensionError("stage " + std::to_string(i + 1) + " has " + std::to_string(stages[i].dim(1)) +
                           " channels, projection expects " + std::to_string(p.projections[i].conv.in()));
    }
    Var x = p.projections[i].conv.apply_conv(tape, stages[i]);
    x = p.projections[i].bn.apply(tape, x, mode);
    out[i] = ops::relu(x);
  }
  return out;
}

std::array<Var, kNumScales> align_scales(const std::array<Var, kNumScales>& projected) {
  const auto& last = projected[kNumScales - 1].shape();
  std::array<Var, kNumScales> out;
  for (std::size_t i = 0; i < kNumScales; ++i) {
    const auto& s = projected[i].shape();
    if (s.size() != 4 || s[0] != last[0] || s[1] != last[1]) {
      throw DimensionError("align_scales: map " + shape_to_string(s) + " does not share batch/channels with " +
                           shape_to_string(last));
    }
    out[i] = i + 1 == kNumScales ? projected[i] : ops::bilinear_resize(projected[i], last[2], last[3]);
  }
  return out;
}

Var scale_attention(Tape& tape, const std::array<Var, kNumScales>& aligned, FusionParams& p) {
  if (p.attention_out.out() != kNumScales) {
    throw ConfigError("scale attention must produce " + std::to_string(kNumScales) + " weights, configured for " +
                      std::to_string(p.attention_out.out()));
  }
  Var mean_map = ops::scale(ops::add_n(aligned), 1.0 / static_cast<double>(kNumScales));
  Var pooled = ops::global_avg_pool(mean_map);
  Var hidden = ops::relu(p.attention_hidden.apply_dense(tape, pooled));
  return ops::sigmoid(p.attention_out.apply_dense(tape, hidden));
}

Var fuse(const std::array<Var, kNumScales>& aligned, Var weights) { return ops::weighted_sum(aligned, weights); }

FusionOutputs fusion_forward(Tape& tape, const std::array<Var, kNumScales>& stages, FusionParams& p, Mode mode) {
  FusionOutputs out;
  out.projected = project_scales(tape, stages, p, mode);
  out.aligned = align_scales(out.projected);
  out.attention = scale_attention(tape, out.aligned, p);
  out.fused = fuse(out.aligned, out.attention);
  return out;
}

FusionOutputs fusion_forward(Tape& tape, const FeaturePyramid& pyramid, FusionParams& p, Mode mode) {
  return fusion_forward(tape, bind_pyramid(tape, pyramid), p, mode);
}

IdentityHeadParams::IdentityHeadParams(std::size_t dim, std::size_t num_classes, std::mt19937_64& rng)
    : neck(dim) {
  neck.frozen_beta = true;
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  classifier = Tensor::uniform(Shape{num_classes, dim}, rng, -bound, bound).set_requires_grad(true);
}

std::vector<NamedParam> IdentityHeadParams::named() {
  std::vector<NamedParam> out;
  neck.collect("head.neck", out);
  out.push_back({"head.classifier", &classifier});
  return out;
}

IdentityOutputs identity_head(Tape& tape, Var fused, IdentityHeadParams& p, Mode mode) {
  if (p.classifier_bias) throw ConfigError("identity classifier must not carry a bias term");
  require_rank(fused.value(), 4, "identity head input");
  if (p.classifier.dim(1) != fused.dim(1)) {
    throw DimensionError("identity classifier expects " + std::to_string(p.classifier.dim(1)) +
                         " features, fused map has " + std::to_string(fused.dim(1)));
  }
  IdentityOutputs out;
  Var pooled = ops::global_avg_pool(fused);
  out.embedding = p.neck.apply(tape, pooled, mode);
  out.logits = ops::dense(out.embedding, tape.leaf(p.classifier));
  return out;
}

}  // namespace visnet
