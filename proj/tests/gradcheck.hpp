#pragma once

// Central-difference gradient checks for autodiff expressions. The
// expression is a generic callable taking std::vector<ad::Var<T>> and
// returning a scalar Var<T>; the numeric side always runs in double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "synthmorph/autodiff.hpp"
#include "synthmorph/sampling.hpp"

namespace gradcheck {

namespace ad = synthmorph::ad;

struct Input {
  ad::Shape shape;
  std::vector<double> values;
};

struct Report {
  double max_rel_error = 0.0;
  std::size_t compared = 0;
  std::size_t skipped_zero = 0;
};

/// Values that are exactly representable in float, so both precisions see
/// the same point.
inline Input random_input(synthmorph::RngStream& rng, ad::Shape shape, double lo, double hi) {
  Input in{shape, std::vector<double>(ad::numel(shape))};
  for (auto& v : in.values) v = double(float(synthmorph::sample_uniform(rng, lo, hi)));
  return in;
}

template <typename F>
double value_at(F& f, const std::vector<Input>& in) {
  std::vector<ad::Var<double>> vars;
  for (const auto& i : in) vars.push_back(ad::constant<double>(i.shape, i.values));
  return f(vars)->item();
}

template <typename T, typename F>
std::vector<std::vector<double>> backprop(F& f, const std::vector<Input>& in) {
  std::vector<ad::Var<T>> vars;
  for (const auto& i : in) vars.push_back(ad::parameter<T>(i.shape, std::vector<T>(i.values.begin(), i.values.end())));
  ad::backward(f(vars));
  std::vector<std::vector<double>> out;
  for (const auto& v : vars) {
    std::vector<double> g(v->size(), 0.0);
    if (v->gradient.size() == v->size()) std::copy(v->gradient.begin(), v->gradient.end(), g.begin());
    out.push_back(std::move(g));
  }
  return out;
}

/// Backprop in precision T against double central differences until
/// `samples` randomly drawn input elements with a nonzero gradient have been
/// compared (at most 20x that many draws).
template <typename T, typename F>
Report check(F f, std::vector<Input> in, std::size_t samples, std::uint64_t seed, double eps = 1e-4) {
  const auto grads = backprop<T>(f, in);
  std::size_t total = 0;
  for (const auto& i : in) total += i.values.size();
  synthmorph::RngStream rng(seed);
  Report r;
  for (std::size_t n = 0; r.compared < samples && n < 20 * samples; ++n) {
    std::size_t flat = static_cast<std::size_t>(rng.next_u64() % total), t = 0;
    while (flat >= in[t].values.size()) flat -= in[t++].values.size();
    const double x0 = in[t].values[flat];
    in[t].values[flat] = x0 + eps;
    const double up = value_at(f, in);
    in[t].values[flat] = x0 - eps;
    const double down = value_at(f, in);
    in[t].values[flat] = x0;
    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = grads[t][flat];
    const double mag = std::max(std::abs(analytic), std::abs(numeric));
    if (mag < 1e-8) {
      ++r.skipped_zero;
      continue;
    }
    r.max_rel_error = std::max(r.max_rel_error, std::abs(analytic - numeric) / mag);
    ++r.compared;
  }
  return r;
}

template <typename Var>
using value_t = typename std::decay_t<decltype(std::declval<Var>()->values)>::value_type;

/// Calls visit(name, expression, inputs) for every differentiable primitive
/// and every loss. Inputs avoid the kinks of LeakyReLU.
template <typename Visit>
void for_each_case(Visit&& visit) {
  synthmorph::RngStream rng(2024);
  auto in = [&](ad::Shape shape, double lo = -1.0, double hi = 1.0) { return random_input(rng, shape, lo, hi); };
  auto mse_to_last = [](auto body) {
    return [body](const auto& v) { return ad::mse(body(v), v.back()); };
  };

  visit("add", mse_to_last([](const auto& v) { return ad::add(v[0], v[1]); }),
        std::vector<Input>{in({2, 4, 5}), in({2, 4, 5}), in({2, 4, 5})});
  visit("scale", mse_to_last([](const auto& v) { return ad::scale(v[0], value_t<decltype(v[0])>(1.7)); }),
        std::vector<Input>{in({3, 4, 4}), in({3, 4, 4})});
  {
    Input x = in({2, 6, 6});
    for (auto& e : x.values) e = double(float(e < 0 ? e - 0.05 : e + 0.05));
    visit("leaky_relu",
          mse_to_last([](const auto& v) { return ad::leaky_relu(v[0], value_t<decltype(v[0])>(0.2)); }),
          std::vector<Input>{x, in({2, 6, 6})});
  }
  visit("concat", mse_to_last([](const auto& v) { return ad::concat(v[0], v[1]); }),
        std::vector<Input>{in({2, 3, 4}), in({1, 3, 4}), in({3, 3, 4})});
  visit("conv2d_stride1", mse_to_last([](const auto& v) { return ad::conv2d(v[0], v[1], v[2], 1); }),
        std::vector<Input>{in({3, 6, 7}), in({4, 3, 3, 3}), in({4}), in({4, 6, 7})});
  visit("conv2d_stride2", mse_to_last([](const auto& v) { return ad::conv2d(v[0], v[1], v[2], 2); }),
        std::vector<Input>{in({3, 6, 7}), in({4, 3, 3, 3}), in({4}), in({4, 3, 4})});
  visit("upsample", mse_to_last([](const auto& v) { return ad::resize_linear(v[0], 8, 10); }),
        std::vector<Input>{in({2, 4, 5}), in({2, 8, 10})});
  visit("warp", mse_to_last([](const auto& v) { return ad::warp(v[0], v[1]); }),
        std::vector<Input>{in({2, 6, 6}), in({2, 6, 6}, -1.9, 1.9), in({2, 6, 6})});
  visit("integrate", mse_to_last([](const auto& v) { return ad::integrate(v[0], 3); }),
        std::vector<Input>{in({2, 6, 6}, -1.5, 1.5), in({2, 6, 6})});
  visit("soft_dice", [](const auto& v) { return ad::soft_dice(v[0], v[1]); },
        std::vector<Input>{in({3, 5, 5}, 0.05, 1.0), in({3, 5, 5}, 0.05, 1.0)});
  visit("smoothness", [](const auto& v) { return ad::smoothness(v[0]); }, std::vector<Input>{in({2, 5, 6})});
  visit("mse", [](const auto& v) { return ad::mse(v[0], v[1]); }, std::vector<Input>{in({2, 5, 5}), in({2, 5, 5})});
}

}  // namespace gradcheck
