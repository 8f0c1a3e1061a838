#include <gtest/gtest.h>

#include <vector>

#include "gradcheck.hpp"
#include "synthmorph/deform.hpp"
#include "synthmorph/loss.hpp"
#include "synthmorph/network.hpp"

using namespace synthmorph;

namespace {

ad::Var<double> tensor(ad::Shape shape, std::vector<double> v) { return ad::constant<double>(shape, v); }

}  // namespace

TEST(Autodiff, GradientBeforeBackwardIsEmpty) {
  auto a = ad::parameter<double>({2}, {1.0, 2.0});
  auto y = ad::mse(a, tensor({2}, {0.0, 0.0}));
  EXPECT_TRUE(a->gradient.empty());
  ad::backward(y);
  EXPECT_EQ(a->gradient, (std::vector<double>{1.0, 2.0}));
}

TEST(Autodiff, SharedNodeAccumulates) {
  auto a = ad::parameter<double>({1}, {3.0});
  auto y = ad::mse(ad::add(a, a), tensor({1}, {0.0}));  // (2a)^2
  ad::backward(y);
  EXPECT_DOUBLE_EQ(a->gradient[0], 24.0);
}

TEST(Autodiff, ForwardValues) {
  auto x = tensor({1, 1, 3}, {-1.0, 0.0, 2.0});
  EXPECT_EQ(ad::leaky_relu(x, 0.2)->values, (std::vector<double>{-0.2, 0.0, 2.0}));
  EXPECT_EQ(ad::concat(x, x)->shape, (ad::Shape{2, 1, 3}));
  EXPECT_EQ(ad::scale(x, 2.0)->values, (std::vector<double>{-2.0, 0.0, 4.0}));

  // 3x3 box kernel with "same" zero padding
  auto img = tensor({1, 3, 3}, {1, 1, 1, 1, 1, 1, 1, 1, 1});
  auto box = tensor({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  auto y = ad::conv2d(img, box, tensor({1}, {0.5}), 1);
  EXPECT_EQ(y->values, (std::vector<double>{4.5, 6.5, 4.5, 6.5, 9.5, 6.5, 4.5, 6.5, 4.5}));
  EXPECT_EQ(ad::conv2d(img, box, tensor({1}, {0.0}), 2)->shape, (ad::Shape{1, 2, 2}));
  EXPECT_EQ(ad::resize_linear(tensor({1, 1, 2}, {0.0, 2.0}), 1, 3)->values, (std::vector<double>{0.0, 1.0, 2.0}));
}

TEST(Autodiff, MatchesFieldOperations) {
  RngStream rng(1);
  const Svf v = sample_svf(rng, {12, 12}, 0.25, 2.0);
  const auto vf = ad::constant<float>({2, 12, 12}, to_channel_first<float>(v.field));
  const DisplacementField u = integrate_svf(v, 4);
  const auto ug = ad::integrate(vf, 4);
  const ScalarField back = from_channel_first(ug->values, 2, v.field.meta());
  for (std::size_t i = 0; i < back.data().size(); ++i) EXPECT_NEAR(back.data()[i], u.field.data()[i], 1e-5);

  EXPECT_NEAR(ad::smoothness(ug)->item(), smoothness_loss(u), 1e-6);

  ScalarField img(GridMeta({12, 12}), 1);
  for (auto& e : img.data()) e = float(sample_uniform(rng, 0, 1));
  const auto moved = ad::warp(ad::constant<float>({1, 12, 12}, to_channel_first<float>(img)), ug);
  const ScalarField ref = warp_linear(img, u.field);
  for (std::size_t i = 0; i < ref.data().size(); ++i) EXPECT_NEAR(moved->values[i], ref.data()[i], 1e-5);

  ScalarField a(GridMeta({6, 6}), 2), b(GridMeta({6, 6}), 2);
  for (auto& e : a.data()) e = float(sample_uniform(rng, 0, 1));
  for (auto& e : b.data()) e = float(sample_uniform(rng, 0, 1));
  const auto da = ad::constant<double>({2, 6, 6}, to_channel_first<double>(a));
  const auto db = ad::constant<double>({2, 6, 6}, to_channel_first<double>(b));
  EXPECT_NEAR(ad::soft_dice(da, db)->item(), soft_dice_loss(a, b), 1e-12);
  EXPECT_NEAR(ad::mse(da, db)->item(), image_mse_loss(a, b), 1e-12);
}

TEST(Autodiff, ShapeErrors) {
  auto a = tensor({1, 2, 2}, {0, 0, 0, 0});
  EXPECT_THROW(ad::add(a, tensor({1, 2, 3}, std::vector<double>(6))), std::invalid_argument);
  EXPECT_THROW(ad::concat(a, tensor({1, 3, 2}, std::vector<double>(6))), std::invalid_argument);
  EXPECT_THROW(ad::warp(a, tensor({1, 2, 2}, std::vector<double>(4))), std::invalid_argument);
  EXPECT_THROW(ad::conv2d(a, tensor({1, 2, 3, 3}, std::vector<double>(18)), tensor({1}, {0}), 1),
               std::invalid_argument);
  EXPECT_THROW(ad::constant<double>({3}, {1.0}), std::invalid_argument);
}

TEST(GradientCheck, EveryPrimitiveAndLoss) {
  gradcheck::for_each_case([](const std::string& name, auto f, const std::vector<gradcheck::Input>& in) {
    SCOPED_TRACE(name);
    const auto d = gradcheck::check<double>(f, in, 60, 7);
    EXPECT_LT(d.max_rel_error, 1e-6);
    EXPECT_GE(d.compared, 50u);
    const auto s = gradcheck::check<float>(f, in, 60, 7);
    EXPECT_LT(s.max_rel_error, 1e-3);
    EXPECT_GE(s.compared, 50u);
  });
}

TEST(GradientCheck, LinearConvThroughWarpWithDice) {
  // one conv, no activation, producing a displacement that warps a soft
  // label map, scored by soft Dice; weights keep every displacement inside
  // (0, 1) so no sample crosses a voxel boundary
  RngStream rng(3);
  std::vector<gradcheck::Input> in{gradcheck::random_input(rng, {2, 8, 8}, 0.0, 1.0),
                                   gradcheck::random_input(rng, {2, 2, 3, 3}, -0.02, 0.02),
                                   gradcheck::random_input(rng, {2}, 0.45, 0.55)};
  auto labels = gradcheck::random_input(rng, {3, 8, 8}, 0.0, 1.0);
  auto fixed = gradcheck::random_input(rng, {3, 8, 8}, 0.0, 1.0);
  auto f = [labels, fixed](const auto& v) {
    using T = gradcheck::value_t<decltype(v[0])>;
    auto disp = ad::conv2d(v[0], v[1], v[2], 1);
    auto moving = ad::constant<T>(labels.shape, std::vector<T>(labels.values.begin(), labels.values.end()));
    auto target = ad::constant<T>(fixed.shape, std::vector<T>(fixed.values.begin(), fixed.values.end()));
    return ad::soft_dice(ad::warp(moving, disp), target);
  };
  const auto r = gradcheck::check<double>(f, in, 80, 11);
  EXPECT_LT(r.max_rel_error, 1e-6);
  EXPECT_GE(r.compared, 50u);
}
