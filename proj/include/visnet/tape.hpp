// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "visnet/tensor.hpp"

namespace visnet {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  bool needs_grad() const;
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode differentiation tape.
///
/// Operations are evaluated eagerly and appended in execution order, so the
/// record is topologically sorted by construction. A tape supports exactly
/// one backward pass; record a new one for the next evaluation. A tape is
/// confined to one thread from the first record until backward returns.
class Tape {
 public:
  /// Local gradient rule: given d(root)/d(output), accumulate into the
  /// adjoints of the inputs. Entries of `input_grads` are null for inputs
  /// that do not need a gradient.
  using BackwardRule =
      std::function<void(std::span<const double> output_grad, std::span<std::vector<double>* const> input_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Binds a parameter tensor. If it requires grad, backward writes
  /// d(root)/d(tensor) into `t.grad()`. `t` must outlive the tape.
  Var leaf(Tensor& t);

  /// Records a value that never receives a gradient.
  Var constant(Tensor t);

  /// Records the output of an operation over `inputs`.
  Var record(Tensor value, std::vector<Var> inputs, BackwardRule rule);

  /// Propagates from a one-element root to every bound leaf.
  void backward(Var root);

  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Adjoint of an arbitrary recorded node; only valid after backward.
  const std::vector<double>& adjoint(Var v) const;

 private:
  friend class Var;

  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardRule rule;
    bool needs_grad = false;
    Tensor* bound = nullptr;
    std::vector<double> adjoint;
  };

  const Node& node(Var v) const;

  std::deque<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace visnet
