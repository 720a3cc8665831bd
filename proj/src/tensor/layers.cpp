// SPDX-License-Identifier: Apache-2.0
#include "visnet/layers.hpp"

#include <cmath>

namespace visnet {

Affine::Affine(std::size_t in, std::size_t out, bool with_bias, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = Tensor::uniform(Shape{out, in}, rng, -bound, bound).set_requires_grad(true);
  if (with_bias) bias = Tensor::uniform(Shape{out}, rng, -bound, bound).set_requires_grad(true);
}

Var Affine::apply_dense(Tape& tape, Var x) {
  Var w = tape.leaf(weight);
  if (bias) return ops::dense(x, w, tape.leaf(*bias));
  return ops::dense(x, w);
}

Var Affine::apply_conv(Tape& tape, Var x) {
  Var w = tape.leaf(weight);
  if (bias) return ops::conv1x1(x, w, tape.leaf(*bias));
  return ops::conv1x1(x, w);
}

void Affine::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".weight", &weight});
  if (bias) out.push_back({prefix + ".bias", &*bias});
}

BatchNorm::BatchNorm(std::size_t channels)
    : gamma(Tensor::ones(Shape{channels}).set_requires_grad(true)),
      beta(Tensor::zeros(Shape{channels}).set_requires_grad(true)),
      stats(channels) {}

Var BatchNorm::apply(Tape& tape, Var x, Mode mode) {
  beta.set_requires_grad(!frozen_beta);
  return ops::batch_norm(x, tape.leaf(gamma), tape.leaf(beta), stats, mode);
}

void BatchNorm::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".gamma", &gamma});
  if (!frozen_beta) out.push_back({prefix + ".beta", &beta});
}

}  // namespace visnet
