// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "visnet/grad_check.hpp"
#include "visnet/ops.hpp"

namespace visnet {

/// Weight [out,in] with an optional bias [out]. Used both as a dense layer
/// and as the kernel of a 1x1 convolution.
struct Affine {
  Affine() = default;
  Affine(std::size_t in, std::size_t out, bool with_bias, std::mt19937_64& rng);

  std::size_t in() const { return weight.dim(1); }
  std::size_t out() const { return weight.dim(0); }

  Var apply_dense(Tape& tape, Var x);
  Var apply_conv(Tape& tape, Var x);

  void collect(const std::string& prefix, std::vector<NamedParam>& out);

  Tensor weight;
  std::optional<Tensor> bias;
};

/// Affine batch normalization with running statistics.
struct BatchNorm {
  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels);

  std::size_t channels() const { return gamma.dim(0); }
  Var apply(Tape& tape, Var x, Mode mode);

  void collect(const std::string& prefix, std::vector<NamedParam>& out);

  Tensor gamma;
  Tensor beta;
  BatchNormStats stats;
  /// A frozen shift stays at its initial value and is excluded from training.
  bool frozen_beta = false;
};

}  // namespace visnet
