// SPDX-License-Identifier: Apache-2.0
#include "visnet/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <string>

#include "visnet/error.hpp"
#include "visnet/ops.hpp"

namespace visnet {

void DWAConfig::validate() const {
  if (window < 2) throw ConfigError("DWA window must hold at least 2 batches");
  if (!(temperature > 0.0)) throw ConfigError("DWA temperature must be positive");
  if (!(ratio_eps >= 0.0)) throw ConfigError("DWA ratio epsilon must be nonnegative");
}

TaskWeights dwa_softmax(const std::array<double, kNumTasks>& ratios, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("DWA temperature must be positive");
  const double mx = *std::max_element(ratios.begin(), ratios.end()) / temperature;
  TaskWeights w;
  double z = 0.0;
  for (std::size_t i = 0; i < kNumTasks; ++i) {
    w[i] = std::exp(ratios[i] / temperature - mx);
    z += w[i];
  }
  for (auto& v : w) v /= z;
  return w;
}

DWAState::DWAState(DWAConfig config) : config_(config) {
  config_.validate();
  weights_.fill(1.0 / static_cast<double>(kNumTasks));
}

TaskWeights DWAState::update(const TaskLosses& losses) {
  if (poisoned_) throw EvaluationError("DWA state is poisoned by an earlier non-finite loss");
  for (std::size_t i = 0; i < kNumTasks; ++i) {
    if (!std::isfinite(losses[i]) || losses[i] < 0.0) {
      poisoned_ = true;
      throw EvaluationError("DWA received invalid loss " + std::to_string(losses[i]) + " for task " +
                            std::to_string(i) + " at step " + std::to_string(step_));
    }
  }
  for (std::size_t i = 0; i < kNumTasks; ++i) {
    history_[i].push_back(losses[i]);
    if (history_[i].size() > config_.window) history_[i].pop_front();
  }
  ++step_;

  const std::size_t n = history_[0].size();
  if (n < 2) {
    ratios_.fill(1.0);
    weights_.fill(1.0 / static_cast<double>(kNumTasks));
    return weights_;
  }
  for (std::size_t i = 0; i < kNumTasks; ++i) {
    const auto& h = history_[i];
    if (config_.ratio_mode == RatioMode::kOneStep) {
      ratios_[i] = h[n - 1] / (h[n - 2] + config_.ratio_eps);
    } else {
      const std::size_t older = n / 2;
      const double old_mean = std::accumulate(h.begin(), h.begin() + older, 0.0) / static_cast<double>(older);
      const double new_mean = std::accumulate(h.begin() + older, h.end(), 0.0) / static_cast<double>(n - older);
      ratios_[i] = new_mean / (old_mean + config_.ratio_eps);
    }
  }
  weights_ = dwa_softmax(ratios_, config_.temperature);
  return weights_;
}

Var total_loss(std::span<const Var> losses, const TaskWeights& weights) {
  if (losses.size() != kNumTasks) throw DimensionError("total_loss expects exactly three task losses");
  return ops::linear_combination(losses, weights);
}

void write_weight_log_line(std::ostream& out, std::size_t step, const TaskWeights& w) {
  out << "step=" << step << std::setprecision(17) << " w_fidi=" << w[0] << " w_ce=" << w[1]
      << " w_semantic=" << w[2] << '\n';
}

}  // namespace visnet
