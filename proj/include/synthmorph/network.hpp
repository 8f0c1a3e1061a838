#pragma once

// 2D registration U-Net: a stride-2 encoder, a decoder with skip
// concatenations, three convolutions at half resolution and a final layer
// emitting the velocity field at half resolution.

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "autodiff.hpp"
#include "deform.hpp"
#include "grid.hpp"
#include "sampling.hpp"

namespace synthmorph {

struct UNetConfig {
  int levels = 4;
  int width = 16;
  int kernel = 3;
  double leaky_slope = 0.2;
  int final_channels = 2;

  /// 2D desk-scale default.
  static UNetConfig desk() { return {}; }
  /// Full-size 3D configuration, kept for reference. forward() only runs 2D.
  static UNetConfig full_3d() { return {4, 256, 3, 0.2, 3}; }

  void validate() const {
    if (levels < 1) throw std::invalid_argument("UNetConfig: levels must be >= 1");
    if (width < final_channels) throw std::invalid_argument("UNetConfig: width must be >= final_channels");
    if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("UNetConfig: kernel must be odd");
    if (final_channels < 1) throw std::invalid_argument("UNetConfig: final_channels must be >= 1");
  }
  bool operator==(const UNetConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  ad::Shape shape;
  std::vector<float> values;
  bool operator==(const NamedTensor&) const = default;
};

/// Per-layer description used to lay out and name the weights.
struct LayerSpec {
  std::string name;
  std::size_t in_channels;
  std::size_t out_channels;
};

/// Layers in execution order: enc1..encL, dec1..dec(L-1), conv1..conv3, flow.
inline std::vector<LayerSpec> layer_specs(const UNetConfig& c) {
  c.validate();
  const auto w = static_cast<std::size_t>(c.width);
  std::vector<LayerSpec> specs;
  std::size_t ch = 2;
  for (int i = 1; i <= c.levels; ++i) {
    specs.push_back({"enc" + std::to_string(i), ch, w});
    ch = w;
  }
  for (int i = 1; i < c.levels; ++i) {
    specs.push_back({"dec" + std::to_string(i), ch, w});
    ch = 2 * w;  // after the skip concatenation
  }
  for (int i = 1; i <= 3; ++i) {
    specs.push_back({"conv" + std::to_string(i), ch, w});
    ch = w;
  }
  specs.push_back({"flow", ch, static_cast<std::size_t>(c.final_channels)});
  return specs;
}

/// Weights [Cout, Cin, K, K] drawn from U(-a, a) with a = sqrt(6 / fan_in);
/// biases zero. Ordered "<layer>.weight", "<layer>.bias" per layer.
inline std::vector<NamedTensor> init_weights(const UNetConfig& c, RngStream rng) {
  std::vector<NamedTensor> out;
  const auto k = static_cast<std::size_t>(c.kernel);
  for (const auto& spec : layer_specs(c)) {
    NamedTensor w{spec.name + ".weight", {spec.out_channels, spec.in_channels, k, k}, {}};
    const double fan_in = double(spec.in_channels * k * k);
    const double a = std::sqrt(6.0 / fan_in);
    w.values.resize(ad::numel(w.shape));
    for (auto& v : w.values) v = static_cast<float>(sample_uniform(rng, -a, a));
    out.push_back(std::move(w));
    out.push_back({spec.name + ".bias", {spec.out_channels}, std::vector<float>(spec.out_channels, 0.0f)});
  }
  return out;
}

template <typename T>
struct UNetGraph {
  ad::Var<T> velocity;  // [final_channels, H/2, W/2]
  std::vector<std::pair<std::string, ad::Var<T>>> activations;
};

/// Builds the network graph. `params` follows init_weights order; `input` is
/// [2, H, W] with the moving image in channel 0 and the fixed in channel 1.
template <typename T>
UNetGraph<T> run_unet(const UNetConfig& c, const std::vector<ad::Var<T>>& params,
                      const ad::Var<T>& input) {
  const auto specs = layer_specs(c);
  if (params.size() != 2 * specs.size()) throw std::invalid_argument("run_unet: wrong parameter count");
  if (input->shape.size() != 3 || input->shape[0] != 2)
    throw std::invalid_argument("run_unet: input must be [2, H, W]");
  const std::size_t div = std::size_t{1} << c.levels;
  if (input->shape[1] % div != 0 || input->shape[2] % div != 0)
    throw std::invalid_argument("run_unet: spatial dims must be divisible by 2^levels");

  const T slope = static_cast<T>(c.leaky_slope);
  UNetGraph<T> g;
  std::size_t layer = 0;
  auto conv = [&](const ad::Var<T>& x, std::size_t stride, bool activate) {
    auto y = ad::conv2d(x, params[2 * layer], params[2 * layer + 1], stride);
    if (activate) y = ad::leaky_relu(y, slope);
    g.activations.emplace_back(specs[layer].name, y);
    ++layer;
    return y;
  };

  std::vector<ad::Var<T>> skips;
  ad::Var<T> x = input;
  for (int i = 0; i < c.levels; ++i) {
    x = conv(x, 2, true);
    skips.push_back(x);
  }
  for (int i = 0; i + 1 < c.levels; ++i) {
    x = conv(x, 1, true);
    const auto& skip = skips[skips.size() - 2 - i];
    x = ad::resize_linear(x, skip->shape[1], skip->shape[2]);
    x = ad::concat(x, skip);
  }
  for (int i = 0; i < 3; ++i) x = conv(x, 1, true);
  g.velocity = conv(x, 1, false);
  return g;
}

// ------------------------------------------------------------ field <-> tensor

/// Channel-last 2D field to a channel-first tensor.
template <typename T>
std::vector<T> to_channel_first(const ScalarField& f) {
  if (f.rank() != 2) throw std::invalid_argument("network tensors are 2D");
  const std::size_t c = f.channels(), n = f.voxels();
  std::vector<T> out(c * n);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t ch = 0; ch < c; ++ch) out[ch * n + v] = static_cast<T>(f.at(v, ch));
  return out;
}

template <typename T>
ScalarField from_channel_first(const std::vector<T>& values, std::size_t channels, const GridMeta& meta) {
  const std::size_t n = meta.voxels();
  if (values.size() != channels * n) throw std::invalid_argument("from_channel_first: size mismatch");
  ScalarField out(meta, channels);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t ch = 0; ch < channels; ++ch) out.at(v, ch) = static_cast<float>(values[ch * n + v]);
  return out;
}

template <typename T>
ad::Var<T> pair_input(const ScalarField& m, const ScalarField& f) {
  if (!m.meta().same_grid(f.meta()) || m.channels() != 1 || f.channels() != 1)
    throw std::invalid_argument("moving and fixed images must be single-channel on one grid");
  if (m.rank() != 2) throw std::invalid_argument("the registration network is 2D");
  std::vector<T> values = to_channel_first<T>(m);
  const auto fv = to_channel_first<T>(f);
  values.insert(values.end(), fv.begin(), fv.end());
  return ad::constant<T>({2, m.dims()[0], m.dims()[1]}, std::move(values));
}

template <typename T>
std::vector<ad::Var<T>> weight_vars(const std::vector<NamedTensor>& weights, bool trainable) {
  std::vector<ad::Var<T>> out;
  out.reserve(weights.size());
  for (const auto& w : weights) {
    std::vector<T> v(w.values.begin(), w.values.end());
    out.push_back(trainable ? ad::parameter<T>(w.shape, std::move(v)) : ad::constant<T>(w.shape, std::move(v)));
  }
  return out;
}

}  // namespace synthmorph
