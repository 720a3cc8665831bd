// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>

#include "visnet/error.hpp"
#include "visnet/grad_check.hpp"
#include "visnet/losses.hpp"
#include "visnet/ops.hpp"

using namespace visnet;

namespace {

// Independent scalar bilinear sampler with half-pixel centers.
double bilinear_oracle(const std::vector<std::vector<double>>& img, double H, double W, std::size_t y,
                       std::size_t x) {
  const double h = static_cast<double>(img.size()), w = static_cast<double>(img[0].size());
  double sy = (y + 0.5) * h / H - 0.5, sx = (x + 0.5) * w / W - 0.5;
  sy = std::min(std::max(sy, 0.0), h - 1);
  sx = std::min(std::max(sx, 0.0), w - 1);
  const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
  const int y1 = std::min(y0 + 1, static_cast<int>(h) - 1), x1 = std::min(x0 + 1, static_cast<int>(w) - 1);
  const double fy = sy - y0, fx = sx - x0;
  return (1 - fy) * ((1 - fx) * img[y0][x0] + fx * img[y0][x1]) + fy * ((1 - fx) * img[y1][x0] + fx * img[y1][x1]);
}

GradCheckReport check_unary(const std::function<Var(Var)>& op, Tensor& x, double step = 1e-5) {
  const NamedParam p{"x", &x};
  // A fixed random projection plus a quadratic term; sum(y*y) alone is constant for scale-invariant ops.
  return grad_check(
      [&](Tape& t) {
        Var y = op(t.leaf(x));
        std::mt19937_64 probe_rng(99);
        Var c = t.constant(Tensor::randn(y.value().shape(), probe_rng));
        const std::array<Var, 2> parts{ops::sum(ops::mul(y, c)), ops::scale(ops::sum(ops::mul(y, y)), 0.5)};
        return ops::add_n(parts);
      },
      {&p, 1}, {step, {}});
}

}  // namespace

TEST(Conv1x1, IdentityWeights) {
  Tape t;
  Var x = t.constant(Tensor({1, 2, 1, 1}, std::vector<double>{3, 5}));
  Var w = t.constant(Tensor({2, 2}, std::vector<double>{1, 0, 0, 1}));
  EXPECT_EQ(ops::conv1x1(x, w).value().values(), (std::vector<double>{3, 5}));
}

TEST(Conv1x1, ChannelSum) {
  Tape t;
  Var x = t.constant(Tensor({1, 2, 1, 2}, std::vector<double>{1, 2, 3, 4}));
  Var w = t.constant(Tensor({1, 2}, std::vector<double>{1, 1}));
  const auto out = ops::conv1x1(x, w).value();
  EXPECT_EQ(out.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_EQ(out.values(), (std::vector<double>{4, 6}));
}

TEST(Conv1x1, MatchesMatmulOracle) {
  std::mt19937_64 rng(3);
  const std::size_t B = 2, C = 5, O = 3, H = 3, W = 4;
  Tensor x = Tensor::randn({B, C, H, W}, rng), w = Tensor::randn({O, C}, rng), b = Tensor::randn({O}, rng);
  Tape t;
  const auto out = ops::conv1x1(t.constant(x), t.constant(w), t.constant(b)).value();
  for (std::size_t bi = 0; bi < B; ++bi) {
    for (std::size_t o = 0; o < O; ++o) {
      for (std::size_t s = 0; s < H * W; ++s) {
        double ref = b[o];
        for (std::size_t c = 0; c < C; ++c) ref += w[o * C + c] * x[(bi * C + c) * H * W + s];
        EXPECT_NEAR(out[(bi * O + o) * H * W + s], ref, 1e-12);
      }
    }
  }
}

TEST(Conv1x1, ShapeMismatchNamesExtents) {
  Tape t;
  Var x = t.constant(Tensor({1, 3, 2, 2}));
  Var w = t.constant(Tensor({2, 4}));
  try {
    ops::conv1x1(x, w);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find('3'), std::string::npos);
    EXPECT_NE(std::string(e.what()).find('4'), std::string::npos);
  }
}

TEST(BatchNorm, ConstantChannelGivesBeta) {
  Tape t;
  Tensor x({4, 2, 1, 1}, std::vector<double>{1, 7, 1, 7, 1, 7, 1, 7});
  BatchNormStats stats(2);
  const auto out = ops::batch_norm(t.constant(x), t.constant(Tensor({2}, std::vector<double>{2.0, 3.0})),
                                   t.constant(Tensor({2}, std::vector<double>{0.5, -1.0})), stats, Mode::kTrain)
                       .value();
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(out[i * 2], 0.5);
    EXPECT_DOUBLE_EQ(out[i * 2 + 1], -1.0);
  }
}

TEST(BatchNorm, EvalWithIdentityStats) {
  std::mt19937_64 rng(1);
  Tensor x = Tensor::randn({3, 2, 2, 2}, rng);
  BatchNormStats stats(2);
  Tape t;
  const auto out =
      ops::batch_norm(t.constant(x), t.constant(Tensor::ones({2})), t.constant(Tensor::zeros({2})), stats, Mode::kEval)
          .value();
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(out[i], x[i] / std::sqrt(1.0 + 1e-5), 1e-15);
}

TEST(BatchNorm, TrainStatisticsMatchAffine) {
  std::mt19937_64 rng(2);
  const std::size_t N = 64, C = 3;
  Tensor x = Tensor::randn({N, C}, rng, 3.0);
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] += 5.0;
  const std::vector<double> gamma{2.0, -0.5, 1.0}, beta{0.3, 1.0, -2.0};
  BatchNormStats stats(C);
  Tape t;
  const auto out = ops::batch_norm(t.constant(x), t.constant(Tensor({C}, gamma)), t.constant(Tensor({C}, beta)),
                                   stats, Mode::kTrain)
                       .value();
  for (std::size_t c = 0; c < C; ++c) {
    double m = 0, v = 0;
    for (std::size_t n = 0; n < N; ++n) m += out[n * C + c];
    m /= N;
    for (std::size_t n = 0; n < N; ++n) v += (out[n * C + c] - m) * (out[n * C + c] - m);
    v /= N;
    EXPECT_NEAR(m, beta[c], 1e-6);
    // eps inflates the denominator slightly.
    EXPECT_NEAR(std::sqrt(v), std::abs(gamma[c]), 1e-5 * std::abs(gamma[c]) + 1e-6);
  }
}

TEST(BatchNorm, RunningStatsUseMomentumAndUnbiasedVariance) {
  Tensor x({4, 1}, std::vector<double>{1, 2, 3, 6});
  BatchNormStats stats(1);
  Tape t;
  ops::batch_norm(t.constant(x), t.constant(Tensor::ones({1})), t.constant(Tensor::zeros({1})), stats, Mode::kTrain);
  // mean 3, unbiased variance (4+1+0+9)/3
  EXPECT_NEAR(stats.running_mean[0], 0.1 * 3.0, 1e-15);
  EXPECT_NEAR(stats.running_var[0], 0.9 + 0.1 * 14.0 / 3.0, 1e-15);
}

TEST(BatchNorm, SingleValuePerChannelIsDegenerate) {
  BatchNormStats stats(2);
  Tape t;
  EXPECT_THROW(ops::batch_norm(t.constant(Tensor({1, 2})), t.constant(Tensor::ones({2})),
                               t.constant(Tensor::zeros({2})), stats, Mode::kTrain),
               DegenerateBatchError);
}

TEST(Bilinear, ConstantField) {
  Tape t;
  const auto out = ops::bilinear_upsample(t.constant(Tensor({1, 1, 1, 1}, 7.0)), 3, 5).value();
  for (double v : out.values()) EXPECT_EQ(v, 7.0);
}

TEST(Bilinear, SameSizeIsBitwisePassthrough) {
  std::mt19937_64 rng(4);
  Tensor x = Tensor::randn({2, 3, 4, 5}, rng);
  Tape t;
  EXPECT_EQ(ops::bilinear_upsample(t.constant(x), 4, 5).value().values(), x.values());
  Tape t2;
  EXPECT_EQ(ops::bilinear_resize(t2.constant(x), 4, 5).value().values(), x.values());
}

TEST(Bilinear, MatchesPointwiseOracle) {
  Tape t;
  const auto out = ops::bilinear_upsample(t.constant(Tensor({1, 1, 2, 2}, std::vector<double>{0, 1, 2, 3})), 4, 4)
                       .value();
  const std::vector<std::vector<double>> img{{0, 1}, {2, 3}};
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) EXPECT_NEAR(out[y * 4 + x], bilinear_oracle(img, 4, 4, y, x), 1e-12);
  }
}

TEST(Bilinear, ResizeDownMatchesOracle) {
  std::mt19937_64 rng(9);
  Tensor x = Tensor::randn({1, 1, 8, 6}, rng);
  Tape t;
  const auto out = ops::bilinear_resize(t.constant(x), 3, 2).value();
  std::vector<std::vector<double>> img(8, std::vector<double>(6));
  for (std::size_t y = 0; y < 8; ++y) {
    for (std::size_t xx = 0; xx < 6; ++xx) img[y][xx] = x[y * 6 + xx];
  }
  for (std::size_t y = 0; y < 3; ++y) {
    for (std::size_t xx = 0; xx < 2; ++xx) EXPECT_NEAR(out[y * 2 + xx], bilinear_oracle(img, 3, 2, y, xx), 1e-12);
  }
}

TEST(Bilinear, UpsampleRefusesToShrink) {
  Tape t;
  EXPECT_THROW(ops::bilinear_upsample(t.constant(Tensor({1, 1, 4, 4})), 2, 4), DimensionError);
}

TEST(GlobalAvgPool, MeanAndLinearity) {
  Tape t;
  EXPECT_EQ(ops::global_avg_pool(t.constant(Tensor({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4}))).value()[0], 2.5);
  EXPECT_EQ(ops::global_avg_pool(t.constant(Tensor({1, 1, 3, 3}, 4.25))).value()[0], 4.25);
  std::mt19937_64 rng(5);
  Var a = t.constant(Tensor::randn({2, 3, 4, 4}, rng));
  Var b = t.constant(Tensor::randn({2, 3, 4, 4}, rng));
  const auto lhs = ops::global_avg_pool(ops::add(a, b)).value();
  const auto ga = ops::global_avg_pool(a).value(), gb = ops::global_avg_pool(b).value();
  for (std::size_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs[i], ga[i] + gb[i], 1e-12);
}

TEST(Ops, LogSoftmaxRowsNormalize) {
  Tape t;
  const auto out = ops::log_softmax(t.constant(Tensor({2, 3}, std::vector<double>{1000, 1001, 1002, -5, 0, 5})))
                       .value();
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 3; ++c) s += std::exp(out[r * 3 + c]);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Ops, SigmoidIsStableAtExtremes) {
  Tape t;
  const auto out = ops::sigmoid(t.constant(Tensor({3}, std::vector<double>{-800, 0, 800}))).value();
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 0.5);
  EXPECT_EQ(out[2], 1.0);
}

TEST(Ops, DropoutIsIdentityInEvalAndScaledInTrain) {
  std::mt19937_64 rng(6);
  Tensor x({1000}, 1.0);
  Tape t;
  EXPECT_EQ(ops::dropout(t.constant(x), 0.3, Mode::kEval, rng).value().values(), x.values());
  const auto out = ops::dropout(t.constant(x), 0.25, Mode::kTrain, rng).value();
  for (double v : out.values()) EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-15);
}

TEST(Ops, PairwiseDistancesLexicographic) {
  Tape t;
  const auto d = ops::pairwise_distances(t.constant(Tensor({3, 2}, std::vector<double>{0, 0, 3, 4, 0, 1}))).value();
  ASSERT_EQ(d.numel(), 3u);
  EXPECT_DOUBLE_EQ(d[0], 5.0);
  EXPECT_DOUBLE_EQ(d[1], 1.0);
  EXPECT_DOUBLE_EQ(d[2], std::sqrt(9.0 + 9.0));
}

TEST(Ops, PairwiseDistanceGradientIsZeroAtCoincidence) {
  Tensor x({2, 2}, std::vector<double>{1, 1, 1, 1});
  x.set_requires_grad(true);
  Tape t;
  t.backward(ops::sum(ops::pairwise_distances(t.leaf(x))));
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Ops, PairwiseSumIsDeterministic) {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / (1.0 + i);
  EXPECT_EQ(pairwise_sum(v), pairwise_sum(v));
  double naive = 0;
  for (double d : v) naive += d;
  EXPECT_NEAR(pairwise_sum(v), naive, 1e-12);
}

TEST(Ops, ForwardIsBitIdenticalAcrossRuns) {
  std::mt19937_64 rng(8);
  Tensor x = Tensor::randn({2, 3, 4, 2}, rng), w = Tensor::randn({5, 3}, rng);
  auto run = [&] {
    Tape t;
    BatchNormStats s(5);
    Var y = ops::conv1x1(t.constant(x), t.constant(w));
    y = ops::batch_norm(y, t.constant(Tensor::ones({5})), t.constant(Tensor::zeros({5})), s, Mode::kTrain);
    return ops::bilinear_resize(ops::relu(y), 2, 1).value().values();
  };
  EXPECT_EQ(run(), run());
}

// Gradient checks of each op in isolation.

TEST(GradCheck, QuadraticBowl) {
  std::mt19937_64 rng(0);
  Tensor x = Tensor::randn({10}, rng);
  const NamedParam p{"x", &x};
  const auto r = grad_check([&](Tape& t) { Var v = t.leaf(x); return ops::scale(ops::sum(ops::mul(v, v)), 0.5); },
                            {&p, 1});
  EXPECT_LE(r.max_rel_err, 1e-9);
}

TEST(GradCheck, ElementwiseOps) {
  std::mt19937_64 rng(1);
  Tensor x = Tensor::randn({3, 4}, rng);
  EXPECT_LE(check_unary([](Var v) { return ops::sigmoid(v); }, x).max_rel_err, 1e-7);
  EXPECT_LE(check_unary([](Var v) { return ops::log_softmax(v); }, x).max_rel_err, 1e-7);
  EXPECT_LE(check_unary([](Var v) { return ops::l2_normalize_rows(v); }, x).max_rel_err, 1e-7);
  EXPECT_LE(check_unary([](Var v) { return ops::add_scalar(ops::scale(v, 2.5), 1.0); }, x).max_rel_err, 1e-7);
  EXPECT_LE(check_unary([](Var v) { return ops::pairwise_distances(v); }, x).max_rel_err, 1e-7);
  EXPECT_LE(check_unary([](Var v) { return ops::sub(v, ops::relu(v)); }, x).max_rel_err, 1e-7);
}

TEST(GradCheck, SpatialOps) {
  std::mt19937_64 rng(2);
  Tensor x = Tensor::randn({2, 3, 4, 3}, rng);
  EXPECT_LE(check_unary([](Var v) { return ops::bilinear_upsample(v, 7, 5); }, x).max_rel_err, 1e-7);
  EXPECT_LE(check_unary([](Var v) { return ops::bilinear_resize(v, 2, 2); }, x).max_rel_err, 1e-7);
  EXPECT_LE(check_unary([](Var v) { return ops::global_avg_pool(v); }, x).max_rel_err, 1e-7);
  EXPECT_LE(check_unary([](Var v) { return ops::nchw_to_rows(v); }, x).max_rel_err, 1e-7);
}

TEST(GradCheck, ParameterisedOps) {
  std::mt19937_64 rng(3);
  Tensor x = Tensor::randn({3, 4, 2, 2}, rng), w = Tensor::randn({5, 4}, rng), b = Tensor::randn({5}, rng);
  Tensor gamma = Tensor::uniform({5}, rng, 0.5, 1.5), beta = Tensor::randn({5}, rng);
  Tensor rows = Tensor::randn({6, 4}, rng), dw = Tensor::randn({3, 4}, rng);
  Tensor mw = Tensor::uniform({3, 2}, rng, 0.1, 0.9);
  Tensor m0 = Tensor::randn({3, 2, 2, 2}, rng), m1 = Tensor::randn({3, 2, 2, 2}, rng);
  const Tensor target = Tensor({6, 3}, 1.0 / 3.0);
  const Tensor probe = Tensor::randn({3, 5, 2, 2}, rng);
  // b feeds a train-mode BN, so its gradient is identically zero; it is covered by ConvBiasEvalMode.
  const std::vector<NamedParam> params{{"x", &x},         {"w", &w},   {"gamma", &gamma},
                                       {"beta", &beta},   {"rows", &rows}, {"dw", &dw}, {"mw", &mw},
                                       {"m0", &m0},       {"m1", &m1}};
  BatchNormStats stats(5);
  const auto r = grad_check(
      [&](Tape& t) {
        Var y = ops::conv1x1(t.leaf(x), t.leaf(w), t.constant(b));
        y = ops::batch_norm(y, t.leaf(gamma), t.leaf(beta), stats, Mode::kTrain);
        // mean(y*y) alone is nearly independent of x and w after train-mode BN; weight it per element.
        Var a = ops::mean(ops::mul(ops::mul(y, y), t.constant(probe)));
        Var d = ops::dense(t.leaf(rows), t.leaf(dw));
        Var ce = ops::soft_cross_entropy(d, target);
        const std::array<Var, 2> maps{t.leaf(m0), t.leaf(m1)};
        Var ws = ops::weighted_sum(maps, t.leaf(mw));
        Var s = ops::sum(ops::mul(ws, ws));
        const std::array<Var, 3> parts{a, ce, s};
        const std::array<double, 3> coeff{1.0, 0.5, 0.25};
        const std::array<Var, 2> n{ops::linear_combination(parts, coeff), ops::scale(a, 0.1)};
        return ops::add_n(n);
      },
      params);
  for (const auto& pc : r.params) EXPECT_LE(pc.max_rel_err, 1e-6) << pc.name << " a=" << pc.analytic << " n=" << pc.numeric;
}

TEST(GradCheck, ConvBiasEvalMode) {
  std::mt19937_64 rng(5);
  Tensor x = Tensor::randn({2, 3, 2, 2}, rng), w = Tensor::randn({4, 3}, rng), b = Tensor::randn({4}, rng);
  Tensor gamma = Tensor::uniform({4}, rng, 0.5, 1.5), beta = Tensor::randn({4}, rng);
  BatchNormStats stats(4);
  stats.running_mean = Tensor::randn({4}, rng);
  stats.running_var = Tensor::uniform({4}, rng, 0.5, 2.0);
  const std::vector<NamedParam> params{{"x", &x}, {"w", &w}, {"b", &b}, {"gamma", &gamma}, {"beta", &beta}};
  const auto r = grad_check(
      [&](Tape& t) {
        Var y = ops::conv1x1(t.leaf(x), t.leaf(w), t.leaf(b));
        y = ops::batch_norm(y, t.leaf(gamma), t.leaf(beta), stats, Mode::kEval);
        return ops::sum(ops::mul(y, y));
      },
      params);
  EXPECT_LE(r.max_rel_err, 1e-6);
}

TEST(GradCheck, ComposedConvPoolCrossEntropy) {
  std::mt19937_64 rng(4);
  Tensor x = Tensor::randn({4, 3, 4, 2}, rng), w = Tensor::randn({5, 3}, rng), fc = Tensor::randn({4, 5}, rng);
  const std::vector<std::size_t> targets{0, 1, 2, 3};
  const std::vector<NamedParam> params{{"w", &w}, {"fc", &fc}};
  const auto r = grad_check(
      [&](Tape& t) {
        Var pooled = ops::global_avg_pool(ops::relu(ops::conv1x1(t.constant(x), t.leaf(w))));
        return ce_label_smoothing(ops::dense(pooled, t.leaf(fc)), targets, 0.1);
      },
      params);
  EXPECT_LE(r.max_rel_err, 1e-5);
}

TEST(GradCheck, CorruptedGradientIsDetected) {
  std::mt19937_64 rng(0);
  Tensor x = Tensor::randn({5}, rng);
  const NamedParam p{"x", &x};
  visnet::GradCheckOptions o;
  o.analytic_hook = [](std::string_view, std::vector<double>& g) { g[2] += 1e-3; };
  const auto r = grad_check([&](Tape& t) { Var v = t.leaf(x); return ops::sum(ops::mul(v, v)); }, {&p, 1}, o);
  EXPECT_GT(r.max_rel_err, 1e-4);
  EXPECT_EQ(r.params[0].worst_index, 2u);
}

TEST(GradCheck, NonFiniteObjectiveNamesParameter) {
  Tensor x({2}, std::vector<double>{1.0, 0.0});
  const NamedParam p{"weights", &x};
  // Finite at the base point, NaN once x[0] is pushed above 1.
  auto f = [&](Tape& t) {
    Var v = t.leaf(x);
    return ops::sum(ops::add_scalar(v, x[0] > 1.0 ? std::nan("") : 0.0));
  };
  try {
    grad_check(f, {&p, 1});
    FAIL() << "expected EvaluationError";
  } catch (const EvaluationError& e) {
    EXPECT_NE(std::string(e.what()).find("weights[0]"), std::string::npos);
  }
}

TEST(GradCheck, RejectsNonPositiveStep) {
  Tensor x({1}, 1.0);
  const NamedParam p{"x", &x};
  EXPECT_THROW(grad_check([&](Tape& t) { return ops::sum(t.leaf(x)); }, {&p, 1}, {0.0, {}}), ConfigError);
}
