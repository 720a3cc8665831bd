// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "visnet/tape.hpp"
#include "visnet/tensor.hpp"

namespace visnet {

enum class Mode { kTrain, kEval };

/// Running statistics of a batch-normalization layer.
struct BatchNormStats {
  explicit BatchNormStats(std::size_t channels = 1)
      : running_mean(Shape{channels}, 0.0), running_var(Shape{channels}, 1.0) {}

  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Differentiable operations. Every op evaluates eagerly and records its
/// local gradient rule on the tape of its inputs.
namespace ops {

/// out[b,o,h,w] = sum_c weight[o,c] x[b,c,h,w] (+ bias[o]).
Var conv1x1(Var x, Var weight, std::optional<Var> bias = std::nullopt);

/// Per-channel normalization. Rank-4 input [B,C,H,W] is normalized over
/// (B,H,W); rank-2 input [N,C] over N. Train mode uses biased batch
/// statistics and folds the unbiased variance into the running estimate.
Var batch_norm(Var x, Var gamma, Var beta, BatchNormStats& stats, Mode mode);

/// Half-pixel-center bilinear resampling to (height, width). Refuses to shrink.
Var bilinear_upsample(Var x, std::size_t height, std::size_t width);

/// Same sampling rule as bilinear_upsample, in either direction.
Var bilinear_resize(Var x, std::size_t height, std::size_t width);

/// [B,C,H,W] -> [B,C].
Var global_avg_pool(Var x);

/// x[N,in] W[out,in]^T (+ b[out]) -> [N,out].
Var dense(Var x, Var weight, std::optional<Var> bias = std::nullopt);

Var relu(Var x);
Var sigmoid(Var x);
/// Row-wise log-softmax of a rank-2 tensor.
Var log_softmax(Var x);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var add_scalar(Var x, double offset);

/// Sum of all elements, reduced by a fixed pairwise tree.
Var sum(Var x);
Var mean(Var x);

/// Sum over `maps` (each [B,...]) of weights[b,i] * maps[i][b,...].
Var weighted_sum(std::span<const Var> maps, Var weights);

/// Elementwise sum of same-shape tensors.
Var add_n(std::span<const Var> xs);

/// [B,C,H,W] -> [B*H*W, C], row index (b*H + h)*W + w.
Var nchw_to_rows(Var x);

/// Inverted dropout; identity in eval mode or at rate 0.
Var dropout(Var x, double rate, Mode mode, std::mt19937_64& rng);

/// -mean_n sum_c target[n,c] log softmax(logits)[n,c], with target rows
/// being probability vectors.
Var soft_cross_entropy(Var logits, const Tensor& target);

/// Each row of [N,D] scaled to unit L2 norm.
Var l2_normalize_rows(Var x);

/// Euclidean distance of every unordered row pair (i<j) of [N,D], in
/// lexicographic pair order; output [N(N-1)/2].
Var pairwise_distances(Var x);

/// Weighted sum of one-element tensors with constant weights.
Var linear_combination(std::span<const Var> scalars, std::span<const double> weights);

}  // namespace ops

/// Sum of a sequence reduced by a fixed pairwise tree.
double pairwise_sum(std::span<const double> values);

}  // namespace visnet
