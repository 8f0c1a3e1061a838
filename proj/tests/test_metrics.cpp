#include <gtest/gtest.h>

#include <vector>

#include "oracles.hpp"
#include "synthmorph/metrics.hpp"
#include "synthmorph/shapegen.hpp"

using namespace synthmorph;

namespace {

LabelMap square(std::size_t n, std::size_t y0, std::size_t x0, std::size_t side, Label l = 1) {
  std::vector<Label> d(n * n, 0);
  for (std::size_t y = y0; y < y0 + side; ++y)
    for (std::size_t x = x0; x < x0 + side; ++x) d[y * n + x] = l;
  return LabelMap(GridMeta({n, n}), d);
}

LabelMap random_map(std::uint64_t seed, std::size_t n, int J) {
  GenParams p = default_params({n, n});
  p.J = J;
  return generate_shape_labels(RngStream(seed), p);
}

}  // namespace

TEST(HardDice, Examples) {
  const LabelMap a = random_map(1, 32, 5);
  const auto labels = a.label_set();
  for (const auto& [l, d] : hard_dice(a, a, labels)) EXPECT_EQ(d.value, 1.0);

  const LabelMap x(GridMeta({4}), {1, 1, 0, 0}), y(GridMeta({4}), {0, 0, 1, 1}), z(GridMeta({4}), {0, 1, 1, 0});
  const std::vector<Label> one{1};
  EXPECT_EQ(hard_dice(x, y, one).at(1).value, 0.0);
  EXPECT_EQ(hard_dice(x, z, one).at(1).value, 0.5);
}

TEST(HardDice, AbsentLabelFlagged) {
  const LabelMap x(GridMeta({3}), {1, 1, 1});
  const std::vector<Label> labels{1, 7};
  const auto d = hard_dice(x, x, labels);
  EXPECT_EQ(d.at(7).value, 1.0);
  EXPECT_TRUE(d.at(7).absent);
  EXPECT_FALSE(d.at(1).absent);
  EXPECT_EQ(mean_dice(d), 1.0);
}

TEST(HardDice, SymmetricAndIdentityWarp) {
  const LabelMap a = random_map(2, 32, 6), b = random_map(3, 32, 6);
  const std::vector<Label> labels{1, 2, 3, 4, 5, 6};
  const auto ab = hard_dice(a, b, labels), ba = hard_dice(b, a, labels);
  for (Label l : labels) EXPECT_EQ(ab.at(l).value, ba.at(l).value);
  const LabelMap same = warp_nearest(a, VectorField(a.meta()), 0);
  for (const auto& [l, d] : hard_dice(same, a, labels)) EXPECT_EQ(d.value, 1.0);
  EXPECT_THROW(hard_dice(a, random_map(2, 16, 6), labels), std::invalid_argument);
}

TEST(SurfaceDistance, Identical) {
  const LabelMap a = random_map(4, 32, 4);
  for (Label l : a.label_set()) EXPECT_EQ(mean_surface_distance(a, a, l, a.meta().spacing), 0.0);
}

TEST(SurfaceDistance, TwoPoints) {
  std::vector<Label> da(10 * 10, 0), db(10 * 10, 0);
  da[5 * 10 + 2] = 1;
  db[5 * 10 + 5] = 1;
  const LabelMap a(GridMeta({10, 10}), da), b(GridMeta({10, 10}), db);
  const std::vector<double> mm{1.0, 1.0};
  EXPECT_DOUBLE_EQ(mean_surface_distance(a, b, 1, mm), 3.0);
}

TEST(SurfaceDistance, ShiftedSquareFrozen) {
  const LabelMap a = square(16, 4, 4, 6), b = square(16, 4, 5, 6);
  const std::vector<double> mm{1.0, 1.0};
  const double expect = oracle::msd_all_pairs(a, b, 1, 1.0, 1.0);
  EXPECT_EQ(mean_surface_distance(a, b, 1, mm), expect);
  // 20 boundary voxels per square, half of them one voxel off the other
  // square's boundary and the rest on it.
  EXPECT_DOUBLE_EQ(expect, 0.5);
}

TEST(SurfaceDistance, AgreesWithOracleAndIsSymmetric) {
  for (int k = 0; k < 10; ++k) {
    const LabelMap a = random_map(50 + k, 32, 4), b = random_map(80 + k, 32, 4);
    for (Label l : a.label_set()) {
      if (!std::binary_search(b.label_set().begin(), b.label_set().end(), l)) continue;
      const std::vector<double> mm{0.8, 1.3};
      const double got = mean_surface_distance(a, b, l, mm);
      EXPECT_EQ(got, oracle::msd_all_pairs(a, b, l, 0.8, 1.3));
      EXPECT_EQ(got, mean_surface_distance(b, a, l, mm));
      EXPECT_GE(got, 0.0);
    }
  }
}

TEST(SurfaceDistance, Errors) {
  const LabelMap a = square(8, 1, 1, 3);
  const std::vector<double> mm{1.0, 1.0};
  EXPECT_THROW(mean_surface_distance(a, a, 5, mm), std::invalid_argument);
  EXPECT_THROW(mean_surface_distance(a, square(9, 1, 1, 3), 1, mm), std::invalid_argument);
}

TEST(FeatureRmsd, Examples) {
  RngStream rng(6);
  ScalarField ref(GridMeta({8, 8}), 3);
  for (auto& v : ref.data()) v = float(sample_normal(rng, 0.0, 1.0));
  const std::vector<ScalarField> same{ref, ref};
  EXPECT_EQ(feature_rmsd(ref, same), 0.0);

  double ss = 0.0;
  for (float v : ref.data()) ss += double(v) * v;
  const double rho = std::sqrt(ss / double(ref.data().size()));
  ScalarField plus = ref;
  for (auto& v : plus.data()) v += 0.5f;
  EXPECT_NEAR(feature_rmsd(ref, std::vector<ScalarField>{plus}), 0.5 / rho, 1e-6);

  ScalarField plus2 = ref;
  for (auto& v : plus2.data()) v += 1.5f;
  EXPECT_NEAR(feature_rmsd(ref, std::vector<ScalarField>{plus, plus2}), (0.5 + 1.5) / 2 / rho, 1e-6);

  EXPECT_THROW(feature_rmsd(ref, std::vector<ScalarField>{}), std::invalid_argument);
  EXPECT_THROW(feature_rmsd(ref, std::vector<ScalarField>{ScalarField(GridMeta({8, 8}), 2)}),
               std::invalid_argument);
}

TEST(MetricReport, CsvAndJson) {
  const LabelMap a = square(12, 2, 2, 5, 1);
  const std::vector<Label> labels{1, 2};
  const MetricReport r = evaluate_maps(a, a, labels, 0.0);
  EXPECT_EQ(r.mean_dice, 1.0);
  EXPECT_EQ(to_csv(r), "label,dice,msd_mm,absent_flag\n1,1,0,0\n2,1,,1\n");
  const auto j = to_json(r);
  EXPECT_EQ(j["labels"][0]["dice"], 1.0);
  EXPECT_TRUE(j["labels"][1]["msd_mm"].is_null());
  EXPECT_EQ(j["labels"][1]["absent_flag"], true);
}
