#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "jras/errors.hpp"
#include "jras/fusion.hpp"
#include "test_support.hpp"

namespace jras {
namespace {

TEST(FusionWeights, HandValues) {
  const auto w = fusion_weights(std::vector<double>{0.9, 0.7}, 0.1);
  EXPECT_NEAR(w[0], 0.8808, 1e-4);
  EXPECT_NEAR(w[1], 0.1192, 1e-4);
  const auto eq = fusion_weights(std::vector<double>{0.8, 0.8}, 3.0);
  EXPECT_DOUBLE_EQ(eq[0], 0.5);
  EXPECT_DOUBLE_EQ(eq[1], 0.5);
  EXPECT_EQ(fusion_weights(std::vector<double>{0.3}, 0.1), std::vector<double>{1.0});
  EXPECT_THROW(fusion_weights(std::vector<double>{}, 0.1), ArgumentError);
  EXPECT_THROW(fusion_weights(std::vector<double>{0.1}, 0.0), ArgumentError);
}

TEST(FusionWeights, StableForLargeArguments) {
  const auto w = fusion_weights(std::vector<double>{1000.0, 999.0}, 0.01);
  EXPECT_TRUE(std::isfinite(w[0]) && std::isfinite(w[1]));
  EXPECT_NEAR(w[0] + w[1], 1.0, 1e-12);
}

TEST(FusionWeights, SimplexAndOrderOnRandomInputs) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> len(1, 10);
  std::uniform_real_distribution<double> sim(-1, 1), logtau(std::log(0.05), std::log(10.0));
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> s(static_cast<std::size_t>(len(rng)));
    for (auto& v : s) v = sim(rng);
    const double tau = std::exp(logtau(rng));
    const auto w = fusion_weights(s, tau);
    double total = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      ASSERT_GE(w[i], 0.0);
      total += w[i];
      for (std::size_t j = 0; j < w.size(); ++j)
        if (s[i] > s[j]) ASSERT_GT(w[i], w[j]);
    }
    ASSERT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(FusionWeights, VarMatchesDoubleVersionAndDifferentiates) {
  auto s = ag::parameter(Tensor({3}, std::vector<double>{0.2, 0.9, 0.5}));
  const auto w = fusion_weights(s, 0.3);
  const auto ref = fusion_weights(std::vector<double>{0.2, 0.9, 0.5}, 0.3);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(w.value()[i], ref[static_cast<std::size_t>(i)], 1e-15);
  const Tensor proj({3}, std::vector<double>{1.0, -2.0, 0.5});
  auto loss = [&] { return ag::sum(ag::mul(fusion_weights(s, 0.3), ag::constant(proj))); };
  EXPECT_LT(testing::check_gradients(loss, {s}).relative_error, 1e-7);
}

TEST(FuseGuides, SingleGuideIsIdentity) {
  std::mt19937_64 rng(3);
  const Tensor img = testing::random_tensor({3, 4, 4}, rng, 0, 1);
  const LabelMap m = testing::random_mask(4, 4, 4, rng);
  const FusedGuide g = fuse_guides({img}, {m}, ag::constant(Tensor({1}, 1.0)), 4);
  EXPECT_EQ(g.image.value(), img);
  EXPECT_EQ(g.mask.value(), scaled_mask(m, 4));
}

TEST(FuseGuides, DuplicatesAreIdempotent) {
  std::mt19937_64 rng(4);
  const Tensor img = testing::random_tensor({3, 4, 4}, rng, 0, 1);
  const LabelMap m = testing::random_mask(4, 4, 4, rng);
  const FusedGuide g = fuse_guides({img, img}, {m, m}, ag::constant(Tensor({2}, 0.5)), 4);
  EXPECT_LT(max_abs_diff(g.image.value(), img), 1e-15);
  EXPECT_LT(max_abs_diff(g.mask.value(), scaled_mask(m, 4)), 1e-15);
}

TEST(FuseGuides, MaskMixesScaledLabels) {
  const LabelMap zeros(3, 3, 0), top(3, 3, 3);
  const FusedGuide g = fuse_guides({Tensor({3, 3, 3}), Tensor({3, 3, 3})}, {zeros, top},
                                   ag::constant(Tensor({2}, std::vector<double>{0.25, 0.75})), 4);
  for (std::int64_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(g.mask.value()[i], 0.75);
}

TEST(FuseGuides, MaskStaysInUnitRange) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 200; ++t) {
    const int k = 1 + t % 5;
    std::vector<Tensor> imgs;
    std::vector<LabelMap> masks;
    std::vector<double> sims;
    for (int i = 0; i < k; ++i) {
      imgs.push_back(testing::random_tensor({3, 5, 5}, rng, 0, 1));
      masks.push_back(testing::random_mask(5, 5, 4, rng));
      sims.push_back(std::uniform_real_distribution<double>(-1, 1)(rng));
    }
    const auto w = fusion_weights(sims, 0.1);
    const FusedGuide g = fuse_guides(imgs, masks, ag::constant(Tensor({k}, w)), 4);
    for (std::int64_t i = 0; i < g.mask.numel(); ++i) {
      ASSERT_GE(g.mask.value()[i], 0.0);
      ASSERT_LE(g.mask.value()[i], 1.0 + 1e-12);
    }
  }
}

FusedGuide random_guide(std::mt19937_64& rng, int h = 4, int w = 4) {
  return {ag::constant(testing::random_tensor({3, h, w}, rng, 0, 1)),
          ag::constant(testing::random_tensor({1, h, w}, rng, 0, 1))};
}

TEST(EarlyFuse, SevenChannelsAndIdentityAtInit) {
  std::mt19937_64 rng(6);
  const Adapter adapter;
  const ag::Var q = ag::constant(testing::random_tensor({3, 4, 4}, rng, 0, 1));
  const FusedGuide g = random_guide(rng);
  const FusedInput in = early_fuse(q, g, adapter);
  EXPECT_EQ(in.raw.shape()[0], kFusedChannels);
  EXPECT_EQ(in.projected.value(), q.value());
  // Guide channels carry no weight at init.
  const FusedGuide zero{ag::constant(Tensor({3, 4, 4})), ag::constant(Tensor({1, 4, 4}))};
  EXPECT_EQ(early_fuse(q, zero, adapter).projected.value(), in.projected.value());
}

TEST(EarlyFuse, GradientReachesSimilarities) {
  std::mt19937_64 rng(7);
  Adapter adapter;
  // Move the adapter off the identity so the guide channels matter.
  Tensor& w = adapter.conv().weight.mutable_value();
  for (std::int64_t i = 0; i < w.numel(); ++i) w[i] += 0.3 * std::sin(2.0 + i);
  const ag::Var q = ag::constant(testing::random_tensor({3, 4, 4}, rng, 0, 1));
  const std::vector<Tensor> imgs{testing::random_tensor({3, 4, 4}, rng, 0, 1),
                                 testing::random_tensor({3, 4, 4}, rng, 0, 1)};
  const std::vector<LabelMap> masks{testing::random_mask(4, 4, 4, rng), testing::random_mask(4, 4, 4, rng)};
  auto s = ag::parameter(Tensor({2}, std::vector<double>{0.8, 0.6}));
  const Tensor proj = testing::random_tensor({3, 4, 4}, rng);
  auto loss = [&] {
    const FusedGuide g = fuse_guides(imgs, masks, fusion_weights(s, 0.1), 4);
    return ag::sum(ag::mul(early_fuse(q, g, adapter).projected, ag::constant(proj)));
  };
  const auto r = testing::check_gradients(loss, {s});
  EXPECT_GT(r.analytic_norm, 0.0);
  EXPECT_LT(r.relative_error, 1e-3);
}

TEST(CrossAttention, ZeroOutputProjectionIsIdentity) {
  std::mt19937_64 rng(8);
  const CrossAttention xa(6, rng);
  const ag::Var q = ag::constant(testing::random_tensor({6, 3, 3}, rng));
  const ag::Var g = ag::constant(testing::random_tensor({6, 2, 2}, rng));
  EXPECT_EQ(xa(q, g).value(), q.value());
  EXPECT_EQ(xa(q, q).value(), q.value());
}

TEST(CrossAttention, RowsAreDistributions) {
  std::mt19937_64 rng(9);
  const CrossAttention xa(4, rng);
  const Tensor q = testing::random_tensor({4, 3, 3}, rng), g = testing::random_tensor({4, 2, 3}, rng);
  const Tensor a = xa.attention_weights(q, g);
  ASSERT_EQ(a.shape(), (Shape{9, 6}));
  for (std::int64_t i = 0; i < 9; ++i) {
    double s = 0;
    for (std::int64_t j = 0; j < 6; ++j) s += a.at(i, j);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  const Tensor single = xa.attention_weights(q, testing::random_tensor({4, 1, 1}, rng));
  for (std::int64_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(single.at(i, 0), 1.0);
}

TEST(CrossAttention, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  CrossAttention xa(3, rng);
  Tensor& wo = xa.wo.weight.mutable_value();
  for (std::int64_t i = 0; i < wo.numel(); ++i) wo[i] = 0.2 * std::cos(1.0 + i);
  const ag::Var q = ag::parameter(testing::random_tensor({3, 2, 2}, rng));
  const ag::Var g = ag::parameter(testing::random_tensor({3, 2, 1}, rng));
  const Tensor proj = testing::random_tensor({3, 2, 2}, rng);
  auto loss = [&] { return ag::sum(ag::mul(xa(q, g), ag::constant(proj))); };
  std::vector<ag::Var> leaves{q, g};
  for (auto& p : xa.parameters("x.")) leaves.push_back(p.param->var());
  EXPECT_LT(testing::check_gradients(loss, leaves).relative_error, 1e-6);
}

TEST(DualEncoderFuse, MaskModulatesGuideBlockLinearly) {
  std::mt19937_64 rng(11);
  const ag::Var qf = ag::constant(testing::random_tensor({2, 2, 2}, rng));
  const ag::Var gf = ag::constant(testing::random_tensor({2, 2, 2}, rng));
  const ag::Var zeros = ag::constant(Tensor({1, 4, 4}, 0.0));
  const ag::Var ones = ag::constant(Tensor({1, 4, 4}, 1.0));
  const Tensor m = testing::random_tensor({1, 4, 4}, rng, 0, 1);
  const Tensor out0 = dual_encoder_fuse(qf, gf, zeros).value();
  const Tensor out1 = dual_encoder_fuse(qf, gf, ones).value();
  ASSERT_EQ(out0.shape(), (Shape{4, 2, 2}));
  for (std::int64_t i = 0; i < 8; ++i) {
    EXPECT_EQ(out0[i], qf.value()[i]);
    EXPECT_EQ(out0[8 + i], 0.0);
    EXPECT_EQ(out1[8 + i], gf.value()[i]);
  }
  Tensor half = m;
  half *= 0.5;
  const Tensor full_m = dual_encoder_fuse(qf, gf, ag::constant(m)).value();
  const Tensor half_m = dual_encoder_fuse(qf, gf, ag::constant(half)).value();
  for (std::int64_t i = 0; i < 8; ++i) EXPECT_NEAR(half_m[8 + i], 0.5 * full_m[8 + i], 1e-15);
}

TEST(FusionStrategy, NamesRoundTrip) {
  for (auto s : {FusionStrategy::Early, FusionStrategy::CrossAttention, FusionStrategy::DualEncoder}) {
    EXPECT_EQ(parse_fusion_strategy(fusion_strategy_name(s)), s);
  }
  EXPECT_THROW(parse_fusion_strategy("late"), ArgumentError);
}

}  // namespace
}  // namespace jras
