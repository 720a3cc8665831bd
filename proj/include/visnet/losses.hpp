// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "visnet/semantics.hpp"
#include "visnet/tape.hpp"

namespace visnet {

/// Identity cross-entropy with label smoothing: targets are
/// (1 - eps) * onehot + eps / N.
Var ce_label_smoothing(Var logits, std::span<const std::size_t> targets, double eps);

struct FidiConfig {
  double alpha = 2.0;
  /// Pair relationship u = sigmoid((margin - distance) / scale).
  double scale = 0.25;
  double margin = 1.0;
  double clamp_eps = 1e-7;

  void validate() const;
};

/// Symmetric alpha-divergence contribution of one pair:
///   u log(a u / ((a-1) u + k)) + k log(a k / ((a-1) k + u)),
/// with the second term taken as 0 when k = 0.
double fidi_pair_term(double u, int k, double alpha);

/// d fidi_pair_term / du.
double fidi_pair_term_derivative(double u, int k, double alpha);

/// Pair ground truth for all unordered pairs i<j in lexicographic order.
std::vector<int> pair_labels(std::span<const std::int64_t> ids);

struct FidiResult {
  Var loss;
  /// True when the batch lacks positive or negative pairs.
  bool degenerate = false;
  std::size_t positive_pairs = 0;
  std::size_t negative_pairs = 0;
};

/// Mean pair term over every unordered pair of the batch, with u computed
/// from Euclidean distances of unit-normalized embeddings.
FidiResult fidi_loss(Var embeddings, std::span<const std::int64_t> ids, const FidiConfig& cfg);

/// Elementwise pair terms for given relationships u and ground truth k (tape op).
Var fidi_terms(Var u, std::span<const int> k, const FidiConfig& cfg);

/// Plain cross-entropy averaged over every labeled location.
Var semantic_loss(Var logits, const PseudoLabelMap& labels);

}  // namespace visnet
