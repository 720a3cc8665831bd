// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <iosfwd>
#include <span>

#include "visnet/tape.hpp"

namespace visnet {

inline constexpr std::size_t kNumTasks = 3;
/// Task order throughout: FIDI, identity CE, semantic.
using TaskWeights = std::array<double, kNumTasks>;
using TaskLosses = std::array<double, kNumTasks>;

enum class RatioMode {
  /// mean(recent half of window) / (mean(older half) + eps)
  kWindowed,
  /// L(t) / (L(t-1) + eps)
  kOneStep,
};

struct DWAConfig {
  std::size_t window = 50;
  double temperature = 2.0;
  double ratio_eps = 1e-8;
  RatioMode ratio_mode = RatioMode::kWindowed;

  void validate() const;
};

/// softmax(ratios / temperature).
TaskWeights dwa_softmax(const std::array<double, kNumTasks>& ratios, double temperature);

/// Dynamic weight averaging over the three task losses.
class DWAState {
 public:
  explicit DWAState(DWAConfig config = {});

  /// Appends the batch losses and returns the weights for this batch.
  /// Uniform until every buffer holds two values. Throws EvaluationError on
  /// non-finite or negative losses; the state is then poisoned.
  TaskWeights update(const TaskLosses& losses);

  const TaskWeights& weights() const noexcept { return weights_; }
  const std::array<double, kNumTasks>& ratios() const noexcept { return ratios_; }
  std::size_t step() const noexcept { return step_; }
  std::size_t history_size() const noexcept { return history_[0].size(); }
  bool poisoned() const noexcept { return poisoned_; }
  const DWAConfig& config() const noexcept { return config_; }

 private:
  DWAConfig config_;
  std::array<std::deque<double>, kNumTasks> history_;
  std::array<double, kNumTasks> ratios_{1.0, 1.0, 1.0};
  TaskWeights weights_;
  std::size_t step_ = 0;
  bool poisoned_ = false;
};

/// sum_i w_i L_i with the weights held constant.
Var total_loss(std::span<const Var> losses, const TaskWeights& weights);

/// Appends "step w_fidi w_ce w_semantic" as one key-value log line.
void write_weight_log_line(std::ostream& out, std::size_t step, const TaskWeights& w);

}  // namespace visnet
