// SPDX-License-Identifier: Apache-2.0
#include "visnet/tape.hpp"

#include <set>

#include "visnet/error.hpp"

namespace visnet {

const Tensor& Var::value() const {
  if (!tape_) throw TapeError("use of an unbound Var");
  return tape_->node(*this).value;
}

bool Var::needs_grad() const {
  if (!tape_) throw TapeError("use of an unbound Var");
  return tape_->node(*this).needs_grad;
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw TapeError("Var does not belong to this tape");
  return nodes_[v.id_];
}

Var Tape::leaf(Tensor& t) {
  if (consumed_) throw TapeError("tape already consumed by backward; record a new one");
  Node n;
  n.value = Tensor(t.shape(), std::vector<double>(t.values()));
  n.needs_grad = t.requires_grad();
  n.bound = n.needs_grad ? &t : nullptr;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor t) {
  if (consumed_) throw TapeError("tape already consumed by backward; record a new one");
  Node n;
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardRule rule) {
  if (consumed_) throw TapeError("tape already consumed by backward; record a new one");
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.tape_ != this) throw TapeError("operation mixes Vars from different tapes");
    n.inputs.push_back(in.id_);
    n.needs_grad = n.needs_grad || nodes_[in.id_].needs_grad;
  }
  if (n.needs_grad) n.rule = std::move(rule);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw TapeError("backward root does not belong to this tape");
  if (consumed_) throw TapeError("tape reuse: backward already ran on this tape");
  const Node& r = nodes_[root.id_];
  if (r.value.numel() != 1) {
    throw TapeError("backward needs a scalar root, got shape " + shape_to_string(r.value.shape()));
  }
  consumed_ = true;

  for (std::size_t i = 0; i <= root.id_; ++i) {
    if (nodes_[i].needs_grad) nodes_[i].adjoint.assign(nodes_[i].value.numel(), 0.0);
  }
  if (!r.needs_grad) return;
  nodes_[root.id_].adjoint[0] = 1.0;

  std::vector<std::vector<double>*> input_grads;
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.rule) continue;
    input_grads.clear();
    for (auto in : n.inputs) {
      input_grads.push_back(nodes_[in].needs_grad ? &nodes_[in].adjoint : nullptr);
    }
    n.rule(n.adjoint, input_grads);
  }

  std::set<Tensor*> zeroed;
  for (std::size_t i = 0; i <= root.id_; ++i) {
    Node& n = nodes_[i];
    if (!n.bound) continue;
    if (zeroed.insert(n.bound).second) n.bound->zero_grad();
    auto& g = n.bound->mutable_grad();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.adjoint[k];
  }
}

const std::vector<double>& Tape::adjoint(Var v) const {
  const Node& n = node(v);
  if (!consumed_) throw TapeError("adjoints are available only after backward");
  if (!n.needs_grad) throw TapeError("node does not carry a gradient");
  return n.adjoint;
}

}  // namespace visnet
