// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "visnet/tape.hpp"

namespace visnet {

struct NamedParam {
  std::string name;
  Tensor* tensor = nullptr;
};

struct ParamCheck {
  std::string name;
  std::size_t numel = 0;
  std::size_t worst_index = 0;
  double max_rel_err = 0.0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::vector<ParamCheck> params;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Called on each analytic gradient before comparison; negative controls use it.
  std::function<void(std::string_view name, std::vector<double>& grad)> analytic_hook;
};

/// Scalar objective recorded on the given tape. It must bind every checked
/// parameter through `tape.leaf` and be deterministic across calls.
using ScalarObjective = std::function<Var(Tape&)>;

/// Compares tape gradients against central differences, element by element.
/// Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport grad_check(const ScalarObjective& f, std::span<const NamedParam> params,
                           const GradCheckOptions& options = {});

}  // namespace visnet
