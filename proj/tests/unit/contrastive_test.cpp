#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "jras/contrastive.hpp"
#include "jras/errors.hpp"
#include "jras/phantom.hpp"
#include "test_support.hpp"

namespace jras {
namespace {

// Per-anchor NT-Xent from the definition: -log softmax over candidates.
double anchor_loss(double s_pos, const std::vector<double>& s_neg, double tau) {
  double z = std::exp(s_pos / tau);
  for (double s : s_neg) z += std::exp(s / tau);
  return -std::log(std::exp(s_pos / tau) / z);
}

double nt_xent_oracle(const Tensor& e, const std::vector<std::size_t>& pos, double tau) {
  const auto n = e.shape()[0], d = e.shape()[1];
  auto sim = [&](std::int64_t i, std::int64_t j) {
    double s = 0;
    for (std::int64_t k = 0; k < d; ++k) s += e.at(i, k) * e.at(j, k);
    return s;
  };
  double total = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    std::vector<double> neg;
    for (std::int64_t j = 0; j < n; ++j)
      if (j != i && j != static_cast<std::int64_t>(pos[i])) neg.push_back(sim(i, j));
    total += anchor_loss(sim(i, static_cast<std::int64_t>(pos[i])), neg, tau);
  }
  return total / static_cast<double>(n);
}

std::vector<std::size_t> pairs(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i ^ 1u;
  return p;
}

Tensor unit_rows(std::int64_t n, std::int64_t d, std::mt19937_64& rng) {
  Tensor e = testing::random_tensor({n, d}, rng);
  for (std::int64_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::int64_t k = 0; k < d; ++k) s += e.at(i, k) * e.at(i, k);
    for (std::int64_t k = 0; k < d; ++k) e.at(i, k) /= std::sqrt(s);
  }
  return e;
}

TEST(NtXentOracle, HandValue) {
  EXPECT_NEAR(anchor_loss(1.0, {0.0}, 0.5), std::log(1 + std::exp(-2.0)), 1e-12);
  EXPECT_NEAR(anchor_loss(1.0, {0.0}, 0.5), 0.1269, 1e-4);
}

TEST(NtXent, SingletonCandidateGivesZero) {
  const Tensor e({2, 2}, std::vector<double>{1, 0, 0, 1});
  EXPECT_NEAR(nt_xent_loss(ag::constant(e), pairs(2), 0.1).item(), 0.0, 1e-12);
}

TEST(NtXent, TwoClustersHandValue) {
  const Tensor e({4, 2}, std::vector<double>{1, 0, 1, 0, 0, 1, 0, 1});
  EXPECT_NEAR(nt_xent_loss(ag::constant(e), pairs(4), 0.5).item(), std::log(1 + 2 * std::exp(-2.0)), 1e-12);
}

TEST(NtXent, MatchesOracleOnRandomBatches) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::int64_t n = 2 * (1 + trial % 6);
    const Tensor e = unit_rows(n, 5, rng);
    const double tau = 0.05 + 0.1 * (trial % 4);
    EXPECT_NEAR(nt_xent_loss(ag::constant(e), pairs(n), tau).item(), nt_xent_oracle(e, pairs(n), tau), 1e-10);
  }
}

TEST(NtXent, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  std::vector<ag::Var> rows;
  for (int i = 0; i < 6; ++i) rows.push_back(ag::parameter(testing::random_tensor({4}, rng)));
  auto loss = [&] {
    std::vector<ag::Var> unit;
    for (const auto& r : rows) unit.push_back(ag::reshape(ag::l2_normalize(r), {1, 4}));
    return nt_xent_loss(ag::concat(unit), pairs(6), 0.2);
  };
  EXPECT_LT(testing::check_gradients(loss, rows).relative_error, 1e-6);
}

TEST(NtXent, LossFallsAsPositiveSimilarityRises) {
  // Rotate view 1 towards view 0; everything else fixed.
  double last = INFINITY;
  for (double angle : {1.2, 0.9, 0.6, 0.3, 0.0}) {
    const Tensor e({4, 2}, std::vector<double>{1, 0, std::cos(angle), std::sin(angle), 0, 1, -1, 0});
    std::vector<std::size_t> pos{1, 0, 3, 2};
    const double l = nt_xent_loss(ag::constant(e), pos, 0.5).item();
    EXPECT_LT(l, last);
    last = l;
  }
}

TEST(NtXent, RejectsBadPairing) {
  const Tensor e({4, 2});
  EXPECT_THROW(nt_xent_loss(ag::constant(e), {1, 0, 2, 3}, 0.1), ArgumentError);
  EXPECT_THROW(nt_xent_loss(ag::constant(e), {1, 2, 3, 0}, 0.1), ArgumentError);
  EXPECT_THROW(nt_xent_loss(ag::constant(e), pairs(4), 0.0), ArgumentError);
}

Dataset toy(int patients, int slices) {
  ToySpec s;
  s.num_patients = patients;
  s.slices_per_phase = slices;
  s.height = s.width = 16;
  return generate_toy_dataset(s);
}

bool consecutive(const SliceRef& a, const SliceRef& b) {
  return a.patient_id == b.patient_id && a.phase == b.phase && std::abs(a.slice_index - b.slice_index) == 1;
}

TEST(ContrastivePairs, ShapeAndPositiveContract) {
  const Dataset d = toy(4, 3);
  const ContrastiveBatch b = make_contrastive_pairs(d, 4, 17);
  ASSERT_EQ(b.size(), 8u);
  ASSERT_EQ(b.refs.size(), 8u);
  for (std::size_t i = 0; i < b.size(); ++i) {
    EXPECT_EQ(b.positive[i], i ^ 1u);
    EXPECT_TRUE(consecutive(b.refs[i], b.refs[b.positive[i]])) << b.refs[i].str();
    EXPECT_EQ(b.views[i].shape(), (Shape{3, 16, 16}));
  }
}

TEST(ContrastivePairs, NegativesAreNeverConsecutiveOrIdenticalSlices) {
  const Dataset d = toy(6, 4);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const ContrastiveBatch b = make_contrastive_pairs(d, 5, seed);
    for (std::size_t i = 0; i < b.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) {
        if (i == j || b.positive[i] == j) continue;
        EXPECT_FALSE(consecutive(b.refs[i], b.refs[j]) || b.refs[i] == b.refs[j])
            << b.refs[i].str() << " vs " << b.refs[j].str() << " seed " << seed;
      }
  }
}

TEST(ContrastivePairs, DeterministicGivenSeed) {
  const Dataset d = toy(4, 3);
  const auto a = make_contrastive_pairs(d, 3, 5), b = make_contrastive_pairs(d, 3, 5);
  EXPECT_EQ(a.refs, b.refs);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.views[i], b.views[i]);
}

TEST(ContrastivePairs, ErrorsWhenPairsCannotBeFormed) {
  EXPECT_THROW(make_contrastive_pairs(toy(3, 1), 1, 0), ArgumentError);
  EXPECT_THROW(make_contrastive_pairs(toy(2, 2), 50, 0), ArgumentError);
  EXPECT_THROW(make_contrastive_pairs(toy(2, 2), 0, 0), ArgumentError);
}

TEST(Augment, PreservesRangeAndIsIdentityWhenDisabled) {
  std::mt19937_64 rng(1);
  const Tensor x = testing::random_tensor({3, 8, 8}, rng, 0, 1);
  AugmentConfig off{false, false, 1.0, 1.0};
  std::mt19937_64 r2(2);
  EXPECT_EQ(augment(x, r2, off), x);
  for (int i = 0; i < 20; ++i) {
    const Tensor y = augment(x, r2, {});
    for (std::int64_t k = 0; k < y.numel(); ++k) {
      EXPECT_GE(y[k], 0.0);
      EXPECT_LE(y[k], 1.0);
    }
  }
}

}  // namespace
}  // namespace jras
