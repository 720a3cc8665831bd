// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "visnet/error.hpp"
#include "visnet/fusion.hpp"
#include "visnet/grad_check.hpp"
#include "visnet/ops.hpp"

using namespace visnet;

namespace {

FusionConfig small_config(std::size_t dim = 4) {
  FusionConfig c;
  c.stage_channels = {2, 3, 4, 5};
  c.dim = dim;
  c.attention_hidden = 3;
  return c;
}

FeaturePyramid random_pyramid(std::mt19937_64& rng, std::size_t batch, const FusionConfig& c, std::size_t h = 16,
                              std::size_t w = 8) {
  FeaturePyramid p;
  for (std::size_t i = 0; i < kNumScales; ++i) {
    p.stages[i] = Tensor::randn({batch, c.stage_channels[i], h, w}, rng);
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
  return p;
}

void zero_attention(FusionParams& p) {
  for (auto* a : {&p.attention_hidden, &p.attention_out}) {
    for (auto& v : a->weight.data()) v = 0.0;
    for (auto& v : a->bias->data()) v = 0.0;
  }
}

}  // namespace

TEST(Pyramid, ValidateRequiresHalving) {
  std::mt19937_64 rng(0);
  auto p = random_pyramid(rng, 2, small_config());
  EXPECT_NO_THROW(p.validate());
  p.stages[2] = Tensor({2, 4, 3, 2});
  EXPECT_THROW(p.validate(), DimensionError);
}

TEST(ProjectScales, ZeroInputGivesZeroOutput) {
  std::mt19937_64 rng(1);
  const auto cfg = small_config();
  FusionParams params(cfg, rng);
  FeaturePyramid pyr;
  std::size_t h = 16, w = 8;
  for (std::size_t i = 0; i < kNumScales; ++i) {
    pyr.stages[i] = Tensor({2, cfg.stage_channels[i], h, w}, 0.0);
    h /= 2;
    w /= 2;
  }
  Tape tape;
  const auto out = project_scales(tape, bind_pyramid(tape, pyr), params, Mode::kTrain);
  for (const auto& v : out) {
    // The conv bias cancels against the batch mean up to rounding scaled by 1/sqrt(eps).
    for (double x : v.value().values()) EXPECT_NEAR(x, 0.0, 1e-12);
  }
}

TEST(ProjectScales, IdentityWeightsEvalStats) {
  std::mt19937_64 rng(2);
  FusionConfig cfg;
  cfg.stage_channels = {3, 3, 3, 3};
  cfg.dim = 3;
  cfg.attention_hidden = 2;
  FusionParams params(cfg, rng);
  for (auto& pr : params.projections) {
    for (std::size_t o = 0; o < 3; ++o) {
      for (std::size_t c = 0; c < 3; ++c) pr.conv.weight[o * 3 + c] = o == c ? 1.0 : 0.0;
    }
    for (auto& b : pr.conv.bias->data()) b = 0.0;
  }
  auto pyr = random_pyramid(rng, 2, cfg, 4, 4);
  Tape tape;
  const auto out = project_scales(tape, bind_pyramid(tape, pyr), params, Mode::kEval);
  for (std::size_t i = 0; i < kNumScales; ++i) {
    const auto& in = pyr.stages[i];
    for (std::size_t k = 0; k < in.numel(); ++k) {
      EXPECT_NEAR(out[i].value()[k], std::max(in[k], 0.0) / std::sqrt(1.0 + 1e-5), 1e-15);
    }
  }
}

TEST(ProjectScales, CommonDimensionAndNonnegative) {
  std::mt19937_64 rng(3);
  const auto cfg = small_config(6);
  FusionParams params(cfg, rng);
  auto pyr = random_pyramid(rng, 3, cfg);
  Tape tape;
  const auto out = project_scales(tape, bind_pyramid(tape, pyr), params, Mode::kTrain);
  for (const auto& v : out) {
    EXPECT_EQ(v.dim(1), 6u);
    for (double x : v.value().values()) EXPECT_GE(x, 0.0);
  }
  EXPECT_EQ(FusionConfig{}.dim, 2048u);
}

TEST(ProjectScales, ChannelMismatchIsRejected) {
  std::mt19937_64 rng(4);
  const auto cfg = small_config();
  FusionParams params(cfg, rng);
  auto pyr = random_pyramid(rng, 2, cfg);
  pyr.stages[1] = Tensor::randn({2, 7, 8, 4}, rng);
  Tape tape;
  EXPECT_THROW(project_scales(tape, bind_pyramid(tape, pyr), params, Mode::kTrain), DimensionError);
}

TEST(AlignScales, Stage4PassesThroughAndFullSizeIs8x4) {
  std::mt19937_64 rng(5);
  FeaturePyramid pyr;
  const std::array<std::size_t, 4> hs{64, 32, 16, 8}, ws{32, 16, 8, 4};  // 256x128 input at strides 4..32
  Tape tape;
  std::array<Var, kNumScales> maps;
  for (std::size_t i = 0; i < kNumScales; ++i) maps[i] = tape.constant(Tensor::randn({1, 2, hs[i], ws[i]}, rng));
  const auto aligned = align_scales(maps);
  for (const auto& a : aligned) EXPECT_EQ(a.shape(), (Shape{1, 2, 8, 4}));
  EXPECT_EQ(aligned[3].value().values(), maps[3].value().values());
}

TEST(AlignScales, ConstantsStayConstant) {
  Tape tape;
  std::array<Var, kNumScales> maps;
  std::size_t h = 16, w = 8;
  for (std::size_t i = 0; i < kNumScales; ++i) {
    maps[i] = tape.constant(Tensor({2, 3, h, w}, 1.5 + i));
    h /= 2;
    w /= 2;
  }
  const auto aligned = align_scales(maps);
  for (std::size_t i = 0; i < kNumScales; ++i) {
    for (double v : aligned[i].value().values()) EXPECT_DOUBLE_EQ(v, 1.5 + i);
  }
}

TEST(ScaleAttention, ZeroParamsGiveOneHalf) {
  std::mt19937_64 rng(6);
  const auto cfg = small_config();
  FusionParams params(cfg, rng);
  zero_attention(params);
  auto pyr = random_pyramid(rng, 2, cfg);
  Tape tape;
  const auto out = fusion_forward(tape, pyr, params, Mode::kTrain);
  EXPECT_EQ(out.attention.shape(), (Shape{2, 4}));
  for (double w : out.attention.value().values()) EXPECT_EQ(w, 0.5);
}

TEST(ScaleAttention, WeightsStrictlyInsideUnitInterval) {
  std::mt19937_64 rng(7);
  const auto cfg = small_config();
  for (int trial = 0; trial < 50; ++trial) {
    FusionParams params(cfg, rng);
    for (auto& v : params.attention_out.weight.data()) v *= 5.0;
    auto pyr = random_pyramid(rng, 2, cfg);
    Tape tape;
    for (double w : fusion_forward(tape, pyr, params, Mode::kTrain).attention.value().values()) {
      EXPECT_GT(w, 0.0);
      EXPECT_LT(w, 1.0);
    }
  }
}

TEST(ScaleAttention, SwappingIdenticalMapsLeavesWeightsUnchanged) {
  std::mt19937_64 rng(8);
  const auto cfg = small_config();
  FusionParams params(cfg, rng);
  Tape tape;
  Var a = tape.constant(Tensor::randn({2, 4, 2, 1}, rng));
  Var b = tape.constant(Tensor::randn({2, 4, 2, 1}, rng));
  const auto w1 = scale_attention(tape, {a, a, b, b}, params).value().values();
  const auto w2 = scale_attention(tape, {a, b, a, b}, params).value().values();
  const auto w3 = scale_attention(tape, {b, a, b, a}, params).value().values();
  for (std::size_t i = 0; i < w1.size(); ++i) {
    EXPECT_NEAR(w1[i], w2[i], 1e-15);
    EXPECT_NEAR(w1[i], w3[i], 1e-15);
  }
}

TEST(ScaleAttention, WrongOutputExtentIsConfigError) {
  std::mt19937_64 rng(9);
  auto cfg = small_config();
  cfg.attention_outputs = 3;
  FusionParams params(cfg, rng);
  auto pyr = random_pyramid(rng, 2, cfg);
  Tape tape;
  EXPECT_THROW(fusion_forward(tape, pyr, params, Mode::kTrain), ConfigError);
}

TEST(Fuse, SelectorAndUnnormalizedSum) {
  std::mt19937_64 rng(10);
  Tape tape;
  std::array<Var, kNumScales> maps;
  for (auto& m : maps) m = tape.constant(Tensor::randn({2, 3, 2, 1}, rng));
  Tensor sel({2, 4}, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0});
  EXPECT_EQ(fuse(maps, tape.constant(sel)).value().values(), maps[0].value().values());

  Var m = tape.constant(Tensor::randn({2, 3, 2, 1}, rng));
  const auto doubled = fuse({m, m, m, m}, tape.constant(Tensor({2, 4}, 0.5))).value();
  for (std::size_t i = 0; i < doubled.numel(); ++i) EXPECT_DOUBLE_EQ(doubled[i], 2.0 * m.value()[i]);
}

TEST(Fuse, SuperpositionInMapsAndWeights) {
  std::mt19937_64 rng(11);
  Tape tape;
  std::array<Var, kNumScales> a, b, sum;
  for (std::size_t i = 0; i < kNumScales; ++i) {
    a[i] = tape.constant(Tensor::randn({1, 2, 2, 2}, rng));
    b[i] = tape.constant(Tensor::randn({1, 2, 2, 2}, rng));
    sum[i] = ops::add(a[i], b[i]);
  }
  Var w = tape.constant(Tensor::uniform({1, 4}, rng, 0, 1));
  Var v = tape.constant(Tensor::uniform({1, 4}, rng, 0, 1));
  const auto lhs = fuse(sum, w).value(), fa = fuse(a, w).value(), fb = fuse(b, w).value();
  for (std::size_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs[i], fa[i] + fb[i], 1e-12);
  const auto lw = fuse(a, ops::add(w, v)).value(), fv = fuse(a, v).value();
  for (std::size_t i = 0; i < lw.numel(); ++i) EXPECT_NEAR(lw[i], fa[i] + fv[i], 1e-12);
}

TEST(Fuse, WeightGradientIsInnerProductWithMap) {
  std::mt19937_64 rng(12);
  std::array<Tensor, kNumScales> maps;
  for (auto& m : maps) m = Tensor::randn({2, 3, 2, 1}, rng);
  Tensor w = Tensor::uniform({2, 4}, rng, 0.1, 0.9);
  const Tensor probe = Tensor::randn({2, 3, 2, 1}, rng);
  auto f = [&](Tape& t) {
    std::array<Var, kNumScales> vs;
    for (std::size_t i = 0; i < kNumScales; ++i) vs[i] = t.constant(maps[i]);
    return ops::sum(ops::mul(fuse(vs, t.leaf(w)), t.constant(probe)));
  };
  const NamedParam p{"w", &w};
  EXPECT_LE(grad_check(f, {&p, 1}).max_rel_err, 1e-5);
  // Analytic: d/dw[b,i] = <probe[b], maps[i][b]>.
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < kNumScales; ++i) {
      double ip = 0;
      for (std::size_t k = 0; k < 6; ++k) ip += probe[b * 6 + k] * maps[i][b * 6 + k];
      EXPECT_NEAR(w.grad()[b * 4 + i], ip, 1e-12);
    }
  }
}

TEST(IdentityHead, ConstantMapGivesChannelConstantEmbedding) {
  std::mt19937_64 rng(13);
  IdentityHeadParams head(3, 5, rng);
  Tensor fused({4, 3, 2, 1});
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t c = 0; c < 3; ++c) {
      fused[(b * 3 + c) * 2] = fused[(b * 3 + c) * 2 + 1] = static_cast<double>(c + 1);
    }
  }
  Tape tape;
  const auto out = identity_head(tape, tape.constant(fused), head, Mode::kEval);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t b = 1; b < 4; ++b) EXPECT_EQ(out.embedding.value()[b * 3 + c], out.embedding.value()[c]);
  }
  EXPECT_EQ(out.logits.shape(), (Shape{4, 5}));
}

TEST(IdentityHead, LogitsAreHomogeneous) {
  std::mt19937_64 rng(14);
  IdentityHeadParams head(4, kMarketTrainIdentities, rng);
  EXPECT_EQ(head.classifier.dim(0), 751u);
  const Tensor e = Tensor::randn({2, 4}, rng);
  Tape tape;
  Var w = tape.constant(head.classifier);
  const auto l1 = ops::dense(tape.constant(e), w).value();
  const auto l2 = ops::dense(ops::scale(tape.constant(e), 3.0), w).value();
  for (std::size_t i = 0; i < l1.numel(); ++i) EXPECT_NEAR(l2[i], 3.0 * l1[i], 1e-12);
}

TEST(IdentityHead, NeckShiftIsFrozenAndBiasRejected) {
  std::mt19937_64 rng(15);
  IdentityHeadParams head(4, 3, rng);
  for (const auto& p : head.named()) EXPECT_EQ(p.name.find("beta"), std::string::npos);
  head.classifier_bias = Tensor({3});
  Tape tape;
  EXPECT_THROW(identity_head(tape, tape.constant(Tensor({2, 4, 1, 1})), head, Mode::kTrain), ConfigError);
}

TEST(IdentityHead, FrozenBetaStaysZeroAfterBackward) {
  std::mt19937_64 rng(16);
  IdentityHeadParams head(3, 2, rng);
  Tape tape;
  auto out = identity_head(tape, tape.constant(Tensor::randn({4, 3, 2, 1}, rng)), head, Mode::kTrain);
  tape.backward(ops::sum(ops::mul(out.logits, out.logits)));
  EXPECT_FALSE(head.neck.beta.has_grad());
  for (double v : head.neck.beta.values()) EXPECT_EQ(v, 0.0);
}

TEST(FusionGradients, EndToEndFiniteDifferences) {
  std::mt19937_64 rng(17);
  const auto cfg = small_config();
  FusionParams params(cfg, rng);
  IdentityHeadParams head(cfg.dim, 3, rng);
  auto pyr = random_pyramid(rng, 4, cfg);
  const Tensor probe = Tensor::randn({4, 3}, rng);
  auto names = params.named();
  std::erase_if(names, [](const NamedParam& p) { return p.name.ends_with("conv.bias"); });
  for (auto& p : head.named()) names.push_back(p);
  const auto r = grad_check(
      [&](Tape& t) {
        auto fo = fusion_forward(t, pyr, params, Mode::kTrain);
        auto id = identity_head(t, fo.fused, head, Mode::kTrain);
        return ops::sum(ops::mul(id.logits, t.constant(probe)));
      },
      names);
  EXPECT_LE(r.max_rel_err, 1e-5);
}
