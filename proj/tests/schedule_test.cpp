// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "visnet/error.hpp"
#include "visnet/ops.hpp"
#include "visnet/schedule.hpp"

using namespace visnet;

namespace {

double sum(const TaskWeights& w) { return w[0] + w[1] + w[2]; }

}  // namespace

TEST(DwaSoftmax, EqualRatiosAreUniform) {
  const auto w = dwa_softmax({0.7, 0.7, 0.7}, 2.0);
  for (double v : w) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(DwaSoftmax, HandEvaluatedExample) {
  const std::array<double, 3> r{1.0, 0.9, 1.1};
  const double z = std::exp(0.5) + std::exp(0.45) + std::exp(0.55);
  const auto w = dwa_softmax(r, 2.0);
  EXPECT_NEAR(w[0], std::exp(0.5) / z, 1e-15);
  EXPECT_NEAR(w[1], std::exp(0.45) / z, 1e-15);
  EXPECT_NEAR(w[2], std::exp(0.55) / z, 1e-15);
  EXPECT_NEAR(w[0], 0.33306, 5e-6);
  EXPECT_NEAR(w[1], 0.31681, 5e-6);
  EXPECT_NEAR(w[2], 0.35013, 5e-6);
}

TEST(DwaSoftmax, HighTemperatureIsNearlyUniform) {
  const auto w = dwa_softmax({1.0, 0.9, 1.1}, 1e6);
  for (double v : w) EXPECT_LT(std::abs(v - 1.0 / 3.0), 1e-6);
  EXPECT_THROW(dwa_softmax({1, 1, 1}, 0.0), ConfigError);
}

TEST(DwaState, UniformDuringWarmup) {
  DWAState s;
  const auto w = s.update({1.0, 2.0, 3.0});
  for (double v : w) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  EXPECT_EQ(s.step(), 1u);
}

TEST(DwaState, WindowedRatioUsesHalves) {
  DWAConfig cfg;
  cfg.window = 4;
  DWAState s(cfg);
  s.update({4, 1, 1});
  s.update({4, 1, 1});
  s.update({2, 1, 3});
  const auto w = s.update({2, 1, 3});
  // older half (4,4)|(1,1)|(1,1), newer half (2,2)|(1,1)|(3,3)
  const double eps = cfg.ratio_eps;
  EXPECT_NEAR(s.ratios()[0], 2.0 / (4.0 + eps), 1e-15);
  EXPECT_NEAR(s.ratios()[1], 1.0 / (1.0 + eps), 1e-15);
  EXPECT_NEAR(s.ratios()[2], 3.0 / (1.0 + eps), 1e-15);
  EXPECT_EQ(w, dwa_softmax(s.ratios(), 2.0));
  // The window drops the oldest entry.
  s.update({2, 1, 3});
  EXPECT_EQ(s.history_size(), 4u);
  EXPECT_NEAR(s.ratios()[0], 2.0 / ((4.0 + 2.0) / 2 + eps), 1e-15);
}

TEST(DwaState, OneStepRatio) {
  DWAConfig cfg;
  cfg.ratio_mode = RatioMode::kOneStep;
  DWAState s(cfg);
  s.update({2, 4, 8});
  s.update({1, 4, 10});
  EXPECT_NEAR(s.ratios()[0], 0.5, 1e-8);
  EXPECT_NEAR(s.ratios()[1], 1.0, 1e-8);
  EXPECT_NEAR(s.ratios()[2], 1.25, 1e-8);
}

TEST(DwaState, WeightsSumToOneAndArgmaxFollowsRatio) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> loss(0.0, 5.0);
  DWAConfig cfg;
  cfg.window = 10;
  DWAState s(cfg);
  for (int t = 0; t < 500; ++t) {
    const auto w = s.update({loss(rng), loss(rng), loss(rng)});
    EXPECT_NEAR(sum(w), 1.0, 1e-12);
    for (double v : w) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
    const auto& r = s.ratios();
    const auto ar = std::max_element(r.begin(), r.end()) - r.begin();
    const auto aw = std::max_element(w.begin(), w.end()) - w.begin();
    if (s.history_size() >= 2) EXPECT_EQ(ar, aw);
  }
}

TEST(DwaState, DeterministicGivenInputs) {
  std::mt19937_64 rng(2);
  DWAState a, b;
  for (int t = 0; t < 80; ++t) {
    const TaskLosses l{rng() % 100 / 10.0, rng() % 100 / 10.0, rng() % 100 / 10.0};
    EXPECT_EQ(a.update(l), b.update(l));
  }
}

TEST(DwaState, NonFiniteLossPoisonsState) {
  DWAState s;
  s.update({1, 1, 1});
  EXPECT_THROW(s.update({1, NAN, 1}), EvaluationError);
  EXPECT_TRUE(s.poisoned());
  EXPECT_THROW(s.update({1, 1, 1}), EvaluationError);
  DWAState n;
  EXPECT_THROW(n.update({-1, 1, 1}), EvaluationError);
  EXPECT_THROW(DWAState(DWAConfig{1}), ConfigError);
}

TEST(TotalLoss, SelectorAndUniform) {
  Tape tape;
  std::array<Var, 3> l{tape.constant(Tensor::scalar(1.5)), tape.constant(Tensor::scalar(2.0)),
                       tape.constant(Tensor::scalar(4.0))};
  EXPECT_EQ(total_loss(l, {1, 0, 0}).value().item(), 1.5);
  EXPECT_NEAR(total_loss(l, {1. / 3, 1. / 3, 1. / 3}).value().item(), 7.5 / 3, 1e-15);
  EXPECT_THROW(total_loss(std::span<const Var>(l.data(), 2), {1, 0, 0}), DimensionError);
}

TEST(TotalLoss, GradientIsWeightedSumOfTaskGradients) {
  std::mt19937_64 rng(3);
  Tensor x = Tensor::randn({5}, rng);
  x.set_requires_grad(true);
  const TaskWeights w{0.2, 0.5, 0.3};
  auto tasks = [](Var v) {
    return std::array<Var, 3>{ops::sum(ops::mul(v, v)), ops::sum(ops::sigmoid(v)), ops::mean(ops::relu(v))};
  };
  std::array<std::vector<double>, 3> g;
  for (std::size_t i = 0; i < 3; ++i) {
    Tape t;
    t.backward(tasks(t.leaf(x))[i]);
    g[i] = x.grad();
  }
  Tape t;
  t.backward(total_loss(tasks(t.leaf(x)), w));
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_NEAR(x.grad()[k], w[0] * g[0][k] + w[1] * g[1][k] + w[2] * g[2][k], 1e-12);
  }
}

TEST(WeightLog, OneKeyValueLinePerStep) {
  std::ostringstream os;
  write_weight_log_line(os, 7, {0.25, 0.5, 0.25});
  EXPECT_EQ(os.str(), "step=7 w_fidi=0.25 w_ce=0.5 w_semantic=0.25\n");
}
