#include <gtest/gtest.h>

#include <vector>

#include "synthmorph/deform.hpp"
#include "synthmorph/loss.hpp"
#include "synthmorph/shapegen.hpp"

using namespace synthmorph;

namespace {

ScalarField channels1d(std::size_t n, std::vector<std::vector<float>> ch) {
  ScalarField f(GridMeta({n}), ch.size());
  for (std::size_t c = 0; c < ch.size(); ++c)
    for (std::size_t v = 0; v < n; ++v) f.at(v, c) = ch[c][v];
  return f;
}

}  // namespace

TEST(SoftDice, Identical) {
  const LabelMap s = generate_shape_labels(RngStream(1), [] {
    GenParams p = default_params({32, 32});
    p.J = 5;
    return p;
  }());
  const ScalarField oh = one_hot(s, s.label_set());
  EXPECT_EQ(soft_dice_loss(oh, oh), -1.0);
}

TEST(SoftDice, Disjoint) {
  const ScalarField a = channels1d(4, {{1, 1, 0, 0}, {0, 0, 1, 1}});
  const ScalarField b = channels1d(4, {{0, 0, 1, 1}, {1, 1, 0, 0}});
  EXPECT_EQ(soft_dice_loss(a, b), 0.0);
}

TEST(SoftDice, HandExample) {
  const ScalarField a = channels1d(3, {{1, 1, 0}});
  const ScalarField b = channels1d(3, {{0, 1, 1}});
  EXPECT_DOUBLE_EQ(soft_dice_loss(a, b), -0.5);
}

TEST(SoftDice, EmptyChannelContributesZero) {
  const ScalarField a = channels1d(2, {{1, 1}, {0, 0}});
  EXPECT_DOUBLE_EQ(soft_dice_loss(a, a), -1.0 * 2.0 / 2.0 * 0.5);
}

TEST(SoftDice, SymmetricAndBounded) {
  RngStream rng(2);
  ScalarField a(GridMeta({6, 6}), 3), b(GridMeta({6, 6}), 3);
  for (auto& v : a.data()) v = float(sample_uniform(rng, 0, 1));
  for (auto& v : b.data()) v = float(sample_uniform(rng, 0, 1));
  const double l = soft_dice_loss(a, b);
  EXPECT_DOUBLE_EQ(l, soft_dice_loss(b, a));
  EXPECT_GE(l, -1.0);
  EXPECT_LE(l, 0.0);
}

TEST(SoftDice, Mismatch) {
  EXPECT_THROW(soft_dice_loss(ScalarField(GridMeta({3}), 2), ScalarField(GridMeta({3}), 1)),
               std::invalid_argument);
  EXPECT_THROW(soft_dice_loss(ScalarField(GridMeta({3}), 1), ScalarField(GridMeta({4}), 1)),
               std::invalid_argument);
}

TEST(Smoothness, Examples) {
  EXPECT_EQ(smoothness_loss(zero_displacement(GridMeta({5, 5}))), 0.0);
  const DisplacementField shift{VectorField(GridMeta({4, 4}), 2.5f)};
  EXPECT_EQ(smoothness_loss(shift), 0.0);
  const DisplacementField ramp{VectorField(GridMeta({4}), std::vector<float>{0, 1, 2, 3})};
  EXPECT_DOUBLE_EQ(smoothness_loss(ramp), 0.5);
}

TEST(Smoothness, InvariantToConstantOffset) {
  RngStream rng(3);
  const DisplacementField u = integrate_svf(sample_svf(rng, {16, 16}, 0.25, 2.0), 5);
  VectorField shifted = u.field;
  for (std::size_t v = 0; v < shifted.voxels(); ++v) shifted.at(v, 0) += 0.75f, shifted.at(v, 1) -= 1.25f;
  EXPECT_NEAR(smoothness_loss(DisplacementField{shifted}), smoothness_loss(u), 1e-6);
}

TEST(TotalLoss, Examples) {
  EXPECT_EQ(total_loss(-0.8, 0.3, 0.0).total, -0.8);
  const LossReport r = total_loss(-0.8, 0.1, 1.0);
  EXPECT_DOUBLE_EQ(r.total, -0.7);
  EXPECT_EQ(r.dice_term, -0.8);
  EXPECT_EQ(r.reg_term, 0.1);
  EXPECT_EQ(r.lambda_reg, 1.0);
  EXPECT_EQ(default_params({8, 8}).lambda_reg, 1.0);
}

TEST(MseField, Examples) {
  const VectorField a(GridMeta({3, 3}), 1.0f), b(GridMeta({3, 3}), 3.0f);
  EXPECT_EQ(mse_field_loss(a, a), 0.0);
  EXPECT_EQ(mse_field_loss(a, b), 4.0);
  EXPECT_EQ(mse_field_loss(b, a), mse_field_loss(a, b));
  EXPECT_THROW(mse_field_loss(a, VectorField(GridMeta({3, 4}))), std::invalid_argument);
}

TEST(ImageMse, Examples) {
  const ScalarField a(GridMeta({4, 4}), 1, 0.2f), b(GridMeta({4, 4}), 1, 0.7f);
  EXPECT_EQ(image_mse_loss(a, a), 0.0);
  EXPECT_NEAR(image_mse_loss(a, b), 0.25, 1e-7);
  EXPECT_GE(image_mse_loss(b, a), 0.0);
  EXPECT_THROW(image_mse_loss(a, ScalarField(GridMeta({4, 5}), 1)), std::invalid_argument);
}
