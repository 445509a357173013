#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "jras/errors.hpp"
#include "jras/metrics.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace jras {
namespace {

using testing::dice_oracle;
using testing::from_rows;
using testing::hd_oracle;

TEST(Dice, HandFixtures) {
  const LabelMap a = from_rows({"1100", "1100"});
  EXPECT_EQ(dice_score(a, a, 1), 1.0);
  const LabelMap zero(2, 4);
  EXPECT_EQ(dice_score(zero, zero, 1), 1.0);
  // |P| = 4, |G| = 4, overlap 2.
  const LabelMap b = from_rows({"0110", "0110"});
  EXPECT_DOUBLE_EQ(dice_score(a, b, 1), 0.5);
  EXPECT_EQ(dice_score(a, zero, 1), 0.0);
  EXPECT_THROW(dice_score(a, LabelMap(3, 3), 1), ArgumentError);
}

TEST(Hausdorff, HandFixtures) {
  const LabelMap a = from_rows({"1100", "1100"});
  EXPECT_EQ(*hausdorff(a, a, 1), 0.0);
  LabelMap p(8, 8), g(8, 8);
  p.at(0, 0) = 1;
  g.at(3, 4) = 1;
  EXPECT_EQ(*hausdorff(p, g, 1), 5.0);
  LabelMap empty(64, 64), full(64, 64);
  full.at(10, 10) = 1;
  EXPECT_NEAR(*hausdorff(empty, full, 1), 90.5097, 1e-4);
  EXPECT_FALSE(hausdorff(empty, full, 1, HdEmptyPolicy::Missing).has_value());
  EXPECT_EQ(*hausdorff(empty, empty, 1, HdEmptyPolicy::Missing), 0.0);
}

TEST(Hausdorff, BoundaryExcludesInteriorPixels) {
  const LabelMap m = from_rows({"00000", "01110", "01110", "01110", "00000"});
  const auto b = boundary_pixels(m, 1);
  EXPECT_EQ(b.size(), 8u);
  for (auto [y, x] : b) EXPECT_FALSE(y == 2 && x == 2);
  // Pixels on the image border are boundary even inside a full region.
  EXPECT_EQ(boundary_pixels(from_rows({"111", "111", "111"}), 1).size(), 8u);
}

TEST(Hausdorff, InteriorHoleCountsAsOuterDistance) {
  // HD is measured between boundaries, so a filled square vs a ring differ
  // only through the hole's rim.
  const LabelMap filled = from_rows({"11111", "11111", "11111", "11111", "11111"});
  const LabelMap ring = from_rows({"11111", "11111", "11011", "11111", "11111"});
  EXPECT_EQ(*hausdorff(filled, ring, 1), *hd_oracle(filled, ring, 1, HdEmptyPolicy::Penalty));
  EXPECT_EQ(*hausdorff(filled, ring, 1), 1.0);
}

TEST(Hausdorff, MatchesOracleOnRandomSparseMasks) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const int h = 5 + static_cast<int>(rng() % 20), w = 5 + static_cast<int>(rng() % 20);
    LabelMap p(h, w), g(h, w);
    std::bernoulli_distribution pick(0.05 + 0.4 * (trial % 5) / 4.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = pick(rng);
      g[i] = pick(rng);
    }
    for (auto policy : {HdEmptyPolicy::Penalty, HdEmptyPolicy::Missing}) {
      const auto fast = hausdorff(p, g, 1, policy);
      const auto ref = hd_oracle(p, g, 1, policy);
      ASSERT_EQ(fast.has_value(), ref.has_value());
      if (fast) ASSERT_EQ(*fast, *ref) << "trial " << trial;
      const auto brute = hausdorff_brute_force(p, g, 1, policy);
      if (brute) ASSERT_EQ(*brute, *ref);
    }
    ASSERT_NEAR(dice_score(p, g, 1), dice_oracle(p, g, 1), 1e-12);
  }
}

TEST(ClassName, CardiacAndGeneric) {
  EXPECT_EQ(class_name(1, 4), "RV");
  EXPECT_EQ(class_name(3, 4), "LV");
  EXPECT_EQ(class_name(1, 2), "class1");
}

CaseResult case_with(const std::string& id, double d) {
  CaseResult c;
  c.case_id = {id, Phase::ED};
  c.per_class_dice = {{1, d}};
  c.per_class_hd = {{1, 2.0}};
  c.mean_dice = d;
  c.mean_hd = 2.0;
  c.num_slices = 1;
  return c;
}

TEST(Aggregate, PopulationStatistics) {
  const auto single = aggregate({case_with("A", 0.7)});
  EXPECT_DOUBLE_EQ(single.mean_dice.mean, 0.7);
  EXPECT_EQ(single.mean_dice.std, 0.0);
  const auto two = aggregate({case_with("A", 0.8), case_with("B", 0.9)});
  EXPECT_NEAR(two.mean_dice.mean, 0.85, 1e-12);
  EXPECT_NEAR(two.mean_dice.std, 0.05, 1e-12);
  EXPECT_THROW(aggregate({}), ArgumentError);
}

TEST(Aggregate, MissingHdIsCountedNotAveraged) {
  CaseResult a = case_with("A", 0.5), b = case_with("B", 0.5);
  b.per_class_hd[1] = std::nullopt;
  b.mean_hd = std::nullopt;
  const auto r = aggregate({a, b});
  EXPECT_EQ(r.hd.at(1).count, 1);
  EXPECT_EQ(r.hd.at(1).missing, 1);
  EXPECT_EQ(r.mean_hd.mean, 2.0);
}

TEST(CaseAnalysis, CountsAndOrdering) {
  const auto jr = {case_with("A", 0.6), case_with("B", 0.45), case_with("C", 0.5)};
  const auto base = {case_with("A", 0.5), case_with("B", 0.5), case_with("C", 0.5)};
  const auto a = case_analysis(jr, base);
  EXPECT_EQ(a.improved, 1);
  EXPECT_EQ(a.degraded, 1);
  EXPECT_EQ(a.unchanged, 1);
  ASSERT_EQ(a.top_improved.size(), 1u);
  EXPECT_EQ(a.top_improved[0].case_id.patient_id, "A");
  ASSERT_EQ(a.top_degraded.size(), 1u);
  EXPECT_EQ(a.top_degraded[0].case_id.patient_id, "B");
  EXPECT_EQ(a.deltas.front().case_id.patient_id, "A");
  const auto same = case_analysis(base, base);
  EXPECT_EQ(same.unchanged, 3);
  EXPECT_THROW(case_analysis({case_with("A", 0.5)}, base), ArgumentError);
}

TEST(FormatDelta, SignedFourDecimals) {
  EXPECT_EQ(format_delta(0.1462), "+0.1462");
  EXPECT_EQ(format_delta(-0.0078), "-0.0078");
  EXPECT_EQ(format_delta(-1e-9), "+0.0000");
}

TEST(Report, CaseDicePoolsSlicesAndRowsMatchShape) {
  // Two slices of one case: pooled Dice is 2*2/(3+3), not the slice mean.
  const LabelMap g1 = from_rows({"11", "00"}), p1 = from_rows({"10", "00"});
  const LabelMap g2 = from_rows({"10", "00"}), p2 = from_rows({"11", "00"});
  std::vector<SliceEval> s = {{{"A", Phase::ED, 0}, p1, g1}, {{"A", Phase::ED, 1}, p2, g2}};
  const EvalReport r = make_report("x", s, 2);
  ASSERT_EQ(r.cases.size(), 1u);
  EXPECT_NEAR(r.cases[0].per_class_dice.at(1), 4.0 / 6.0, 1e-12);
  EXPECT_EQ(r.cases[0].num_slices, 2);
  // header + slices x foreground classes
  const std::string csv = report_slices_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2);
}

TEST(Report, JsonRoundTripPreservesEverything) {
  std::mt19937_64 rng(2);
  std::vector<SliceEval> s;
  for (int p = 0; p < 3; ++p)
    for (int i = 0; i < 2; ++i)
      s.push_back({{"P" + std::to_string(p), Phase::ES, i}, testing::random_mask(8, 8, 4, rng),
                   testing::random_mask(8, 8, 4, rng)});
  EvalReport r = make_report("jras", s, 4, HdEmptyPolicy::Missing);
  r.baseline_comparison = case_analysis(r.cases, r.cases);
  const EvalReport back = report_from_json(report_to_json(r));
  EXPECT_EQ(report_to_json(back).dump(), report_to_json(r).dump());
  EXPECT_EQ(report_cases_csv(back), report_cases_csv(r));
  nlohmann::json broken = report_to_json(r);
  broken.erase("cases");
  EXPECT_THROW(report_from_json(broken), ValidationError);
}

}  // namespace
}  // namespace jras
