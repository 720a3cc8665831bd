// SPDX-License-Identifier: Apache-2.0
#include "visnet/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "visnet/error.hpp"

namespace visnet {
namespace {

double evaluate(const ScalarObjective& f, const std::string& name, std::size_t index) {
  Tape tape;
  const double v = f(tape).value().item();
  if (!std::isfinite(v)) {
    throw EvaluationError("objective is not finite when perturbing " + name + "[" + std::to_string(index) + "]");
  }
  return v;
}

}  // namespace

GradCheckReport grad_check(const ScalarObjective& f, std::span<const NamedParam> params,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ConfigError("grad_check: step must be positive");
  for (const auto& p : params) {
    if (!p.tensor) throw ConfigError("grad_check: parameter " + p.name + " is null");
    p.tensor->set_requires_grad(true);
    p.tensor->clear_grad();
  }

  {
    Tape tape;
    Var root = f(tape);
    if (!std::isfinite(root.value().item())) throw EvaluationError("objective is not finite at the base point");
    tape.backward(root);
  }

  GradCheckReport report;
  for (const auto& p : params) {
    std::vector<double> analytic =
        p.tensor->has_grad() ? p.tensor->grad() : std::vector<double>(p.tensor->numel(), 0.0);
    if (options.analytic_hook) options.analytic_hook(p.name, analytic);

    ParamCheck pc;
    pc.name = p.name;
    pc.numel = p.tensor->numel();
    for (std::size_t k = 0; k < p.tensor->numel(); ++k) {
      double& slot = (*p.tensor)[k];
      const double saved = slot;
      slot = saved + options.step;
      const double up = evaluate(f, p.name, k);
      slot = saved - options.step;
      const double down = evaluate(f, p.name, k);
      slot = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (k == 0 || rel > pc.max_rel_err) {
        pc.max_rel_err = rel;
        pc.worst_index = k;
        pc.analytic = a;
        pc.numeric = numeric;
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, pc.max_rel_err);
    report.params.push_back(pc);
  }
  return report;
}

}  // namespace visnet
