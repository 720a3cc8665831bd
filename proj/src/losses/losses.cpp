// SPDX-License-Identifier: Apache-2.0
#include "visnet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "visnet/error.hpp"
#include "visnet/ops.hpp"

namespace visnet {
namespace {

void check_pair_inputs(int k, double alpha) {
  if (!(alpha > 1.0)) throw ConfigError("FIDI alpha must exceed 1, got " + std::to_string(alpha));
  if (k != 0 && k != 1) throw InvalidInputError("FIDI pair label must be 0 or 1, got " + std::to_string(k));
}

constexpr double kDefaultClamp = 1e-7;

}  // namespace

Var ce_label_smoothing(Var logits, std::span<const std::size_t> targets, double eps) {
  require_rank(logits.value(), 2, "identity logits");
  const std::size_t B = logits.dim(0), N = logits.dim(1);
  if (!(eps >= 0.0 && eps < 1.0)) throw ConfigError("label smoothing eps must lie in [0,1)");
  if (targets.size() != B) {
    throw DimensionError("got " + std::to_string(targets.size()) + " targets for " + std::to_string(B) + " rows");
  }
  Tensor q(Shape{B, N}, eps / static_cast<double>(N));
  for (std::size_t b = 0; b < B; ++b) {
    if (targets[b] >= N) {
      throw InvalidInputError("target class " + std::to_string(targets[b]) + " out of range for " +
                              std::to_string(N) + " classes");
    }
    q[b * N + targets[b]] += 1.0 - eps;
  }
  return ops::soft_cross_entropy(logits, q);
}

void FidiConfig::validate() const {
  if (!(alpha > 1.0)) throw ConfigError("FIDI alpha must exceed 1, got " + std::to_string(alpha));
  if (!(scale > 0.0)) throw ConfigError("FIDI similarity scale must be positive");
  if (!(clamp_eps > 0.0 && clamp_eps < 0.5)) throw ConfigError("FIDI clamp epsilon must lie in (0, 0.5)");
}

double fidi_pair_term(double u, int k, double alpha) {
  check_pair_inputs(k, alpha);
  u = std::clamp(u, kDefaultClamp, 1.0 - kDefaultClamp);
  double term = u * std::log(alpha * u / ((alpha - 1.0) * u + k));
  if (k == 1) term += std::log(alpha / ((alpha - 1.0) + u));
  return term;
}

double fidi_pair_term_derivative(double u, int k, double alpha) {
  check_pair_inputs(k, alpha);
  const double denom = (alpha - 1.0) * u + k;
  double d = std::log(alpha * u / denom) + 1.0 - (alpha - 1.0) * u / denom;
  if (k == 1) d -= 1.0 / ((alpha - 1.0) + u);
  return d;
}

std::vector<int> pair_labels(std::span<const std::int64_t> ids) {
  std::vector<int> k;
  k.reserve(ids.size() * (ids.size() - (ids.empty() ? 0 : 1)) / 2);
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = i + 1; j < ids.size(); ++j) k.push_back(ids[i] == ids[j] ? 1 : 0);
  return k;
}

Var fidi_terms(Var u, std::span<const int> k, const FidiConfig& cfg) {
  cfg.validate();
  if (u.value().numel() != k.size()) {
    throw DimensionError("fidi_terms: " + std::to_string(u.value().numel()) + " relationships for " +
                         std::to_string(k.size()) + " labels");
  }
  const std::size_t P = k.size();
  Tensor out(Shape{P});
  auto grad = std::make_shared<std::vector<double>>(P);
  for (std::size_t p = 0; p < P; ++p) {
    check_pair_inputs(k[p], cfg.alpha);
    const double raw = u.value()[p];
    const double uc = std::clamp(raw, cfg.clamp_eps, 1.0 - cfg.clamp_eps);
    double term = uc * std::log(cfg.alpha * uc / ((cfg.alpha - 1.0) * uc + k[p]));
    if (k[p] == 1) term += std::log(cfg.alpha / ((cfg.alpha - 1.0) + uc));
    out[p] = term;
    const bool inside = raw > cfg.clamp_eps && raw < 1.0 - cfg.clamp_eps;
    (*grad)[p] = inside ? fidi_pair_term_derivative(uc, k[p], cfg.alpha) : 0.0;
  }
  return u.tape()->record(std::move(out), {u}, [grad](std::span<const double> g,
                                                      std::span<std::vector<double>* const> in) {
    for (std::size_t p = 0; p < g.size(); ++p) (*in[0])[p] += g[p] * (*grad)[p];
  });
}

FidiResult fidi_loss(Var embeddings, std::span<const std::int64_t> ids, const FidiConfig& cfg) {
  cfg.validate();
  require_rank(embeddings.value(), 2, "FIDI embeddings");
  if (embeddings.dim(0) != ids.size()) {
    throw DimensionError("FIDI: " + std::to_string(embeddings.dim(0)) + " embeddings for " +
                         std::to_string(ids.size()) + " identity labels");
  }
  if (ids.size() < 2) throw DegenerateBatchError("FIDI needs at least two samples");
  const std::vector<int> k = pair_labels(ids);

  FidiResult r;
  r.positive_pairs = static_cast<std::size_t>(std::count(k.begin(), k.end(), 1));
  r.negative_pairs = k.size() - r.positive_pairs;
  r.degenerate = r.positive_pairs == 0 || r.negative_pairs == 0;

  Var dist = ops::pairwise_distances(ops::l2_normalize_rows(embeddings));
  Var u = ops::sigmoid(ops::scale(ops::add_scalar(ops::scale(dist, -1.0), cfg.margin), 1.0 / cfg.scale));
  r.loss = ops::mean(fidi_terms(u, k, cfg));
  return r;
}

Var semantic_loss(Var logits, const PseudoLabelMap& labels) {
  require_rank(logits.value(), 2, "semantic logits");
  const std::size_t N = logits.dim(0), C = logits.dim(1);
  if (N != labels.size() || C != kNumSemanticClasses) {
    throw DimensionError("semantic logits " + shape_to_string(logits.shape()) + " do not match " +
                         std::to_string(labels.size()) + " labeled locations");
  }
  Tensor q(Shape{N, C}, 0.0);
  for (std::size_t n = 0; n < N; ++n) q[n * C + labels.labels[n]] = 1.0;
  return ops::soft_cross_entropy(logits, q);
}

}  // namespace visnet
