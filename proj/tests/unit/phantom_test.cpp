#include <gtest/gtest.h>

#include <queue>

#include "jras/errors.hpp"
#include "jras/phantom.hpp"

namespace jras {
namespace {

// Number of 4-connected components of `label`, by breadth-first flood fill.
int components(const LabelMap& m, int label) {
  const int h = m.height(), w = m.width();
  std::vector<char> seen(m.size(), 0);
  int count = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (m.at(y, x) != label || seen[y * w + x]) continue;
      ++count;
      std::queue<std::pair<int, int>> q;
      q.push({y, x});
      seen[y * w + x] = 1;
      while (!q.empty()) {
        auto [cy, cx] = q.front();
        q.pop();
        const int dy[] = {1, -1, 0, 0}, dx[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int ny = cy + dy[k], nx = cx + dx[k];
          if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
          if (m.at(ny, nx) != label || seen[ny * w + nx]) continue;
          seen[ny * w + nx] = 1;
          q.push({ny, nx});
        }
      }
    }
  return count;
}

int area(const LabelMap& m, int label) {
  int n = 0;
  for (std::size_t i = 0; i < m.size(); ++i) n += m[i] == label;
  return n;
}

TEST(Phantom, DefaultCounts) {
  const Dataset d = generate_toy_dataset({});
  EXPECT_EQ(d.size(), 24u);
  EXPECT_EQ(d.num_classes(), kToyNumClasses);
  EXPECT_EQ(d.height(), 64);
  EXPECT_EQ(d.patient_ids(), (std::vector<std::string>{"P001", "P002", "P003", "P004"}));
}

TEST(Phantom, SameSeedSameData) {
  ToySpec s;
  s.height = s.width = 32;
  const Dataset a = generate_toy_dataset(s), b = generate_toy_dataset(s);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(a[i].image == b[i].image);
    EXPECT_TRUE(a[i].mask == b[i].mask);
  }
  s.seed = 8;
  const Dataset c = generate_toy_dataset(s);
  EXPECT_FALSE(a[0].image == c[0].image);
}

class PhantomSizes : public ::testing::TestWithParam<int> {};

TEST_P(PhantomSizes, EveryLabelPresentAndConnected) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    ToySpec s;
    s.height = s.width = GetParam();
    s.slices_per_phase = 4;
    s.seed = seed;
    for (const auto& rec : generate_toy_dataset(s)) {
      for (int label = 0; label < kToyNumClasses; ++label) {
        EXPECT_EQ(components(rec.mask, label), 1) << rec.ref.str() << " label " << label << " seed " << seed;
      }
      double lo = 1, hi = 0;
      for (std::int64_t i = 0; i < rec.image.numel(); ++i) {
        lo = std::min(lo, rec.image[i]);
        hi = std::max(hi, rec.image[i]);
        EXPECT_EQ(static_cast<double>(static_cast<float>(rec.image[i])), rec.image[i]);
      }
      EXPECT_EQ(lo, 0.0);
      EXPECT_EQ(hi, 1.0);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Sizes, PhantomSizes, ::testing::Values(16, 24, 48, 64));

TEST(Phantom, SystoleContractsTheLeftVentricle) {
  ToySpec s;
  s.num_patients = 3;
  const Dataset d = generate_toy_dataset(s);
  int contracted = 0, total = 0;
  for (const auto& rec : d) {
    if (rec.ref.phase != Phase::ED) continue;
    const SliceRecord* es = d.find({rec.ref.patient_id, Phase::ES, rec.ref.slice_index});
    ASSERT_NE(es, nullptr);
    ++total;
    contracted += area(es->mask, kLabelLV) < area(rec.mask, kLabelLV);
  }
  EXPECT_EQ(contracted, total);
}

TEST(Phantom, IdPrefixAndOffsetGiveDisjointSets) {
  ToySpec s;
  s.num_patients = 2;
  s.id_prefix = "X";
  s.id_offset = 40;
  EXPECT_EQ(generate_toy_dataset(s).patient_ids(), (std::vector<std::string>{"X040", "X041"}));
}

TEST(Phantom, RejectsBadSpecs) {
  ToySpec s;
  s.num_patients = 1;
  EXPECT_THROW(generate_toy_dataset(s), ArgumentError);
  s = {};
  s.height = 8;
  EXPECT_THROW(generate_toy_dataset(s), ArgumentError);
  s = {};
  s.slices_per_phase = 0;
  EXPECT_THROW(generate_toy_dataset(s), ArgumentError);
}

}  // namespace
}  // namespace jras
