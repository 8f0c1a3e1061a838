#pragma once

// Gray-scale image synthesis from label maps.

#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "grid.hpp"
#include "sampling.hpp"

namespace synthmorph {

/// Per-label Gaussian intensity model, keyed by label.
struct GmmDraw {
  std::map<Label, double> mean;
  std::map<Label, double> sd;
  bool operator==(const GmmDraw&) const = default;
};

struct SynthRecord {
  ScalarField image;
  GmmDraw gmm;
  std::vector<double> blur_sigmas;
  double bias_sd = 0.0;
  double gamma = 0.0;
  bool operator==(const SynthRecord&) const = default;
};

struct GmmImage {
  ScalarField image;
  GmmDraw gmm;
};

/// mu_j ~ U(a_mu, b_mu), sigma_j ~ U(a_sigma, b_sigma) for every label in
/// the map (ascending label order), then one normal draw per voxel.
inline GmmImage sample_gmm_image(RngStream& rng, const LabelMap& s, const GenParams& params) {
  GmmDraw gmm;
  for (Label l : s.label_set()) {
    gmm.mean[l] = sample_uniform(rng, params.a_mu, params.b_mu);
    gmm.sd[l] = sample_uniform(rng, params.a_sigma, params.b_sigma);
  }
  ScalarField img(s.meta(), 1);
  for (std::size_t v = 0; v < s.voxels(); ++v) {
    const Label l = s.at(v);
    img.at(v) = static_cast<float>(sample_normal(rng, gmm.mean[l], gmm.sd[l]));
  }
  return {std::move(img), std::move(gmm)};
}

struct BiasDraw {
  ScalarField field;
  double sd = 0.0;
};

/// exp of N(0, sigma_B^2) noise drawn at r_B and upsampled, sigma_B ~ U(0, b_B).
inline BiasDraw sample_bias_draw(RngStream& rng, const GridMeta& meta, const GenParams& params) {
  const double sd = sample_uniform(rng, 0.0, params.b_B);
  const GridMeta low(low_res_dims(meta.dims, params.r_B));
  ScalarField log_bias(low, 1);
  for (auto& v : log_bias.data()) v = static_cast<float>(sample_normal(rng, 0.0, sd));
  ScalarField full = resample_linear(log_bias, meta);
  for (auto& v : full.data()) v = static_cast<float>(std::exp(double(v)));
  return {std::move(full), sd};
}

inline ScalarField sample_bias_field(RngStream& rng, const Dims& dims, const GenParams& params) {
  return sample_bias_draw(rng, GridMeta(dims), params).field;
}

/// out = in^exp(gamma) on [0, 1] data.
inline ScalarField apply_gamma(const ScalarField& img, double gamma) {
  ScalarField out = img;
  if (gamma == 0.0) return out;
  const double exponent = std::exp(gamma);
  for (auto& v : out.data()) v = static_cast<float>(std::pow(double(v), exponent));
  return out;
}

namespace detail {
inline void require_unit_range(const ScalarField& img, const char* who) {
  for (float v : img.data())
    if (!(v >= 0.0f && v <= 1.0f))
      throw std::invalid_argument(std::string(who) + ": image values must lie in [0, 1]");
}
}  // namespace detail

struct GammaResult {
  ScalarField image;
  double gamma = 0.0;
};

/// gamma ~ N(0, sigma_gamma^2); out = in^exp(gamma).
inline GammaResult gamma_augment(RngStream& rng, const ScalarField& img_norm, double sigma_gamma) {
  detail::require_unit_range(img_norm, "gamma_augment");
  const double gamma = sample_normal(rng, 0.0, sigma_gamma);
  return {apply_gamma(img_norm, gamma), gamma};
}

/// GMM intensities, partial-volume blur, bias field, min-max normalization
/// and gamma augmentation, in that order.
inline SynthRecord synthesize_image(RngStream& rng, const LabelMap& s, const GenParams& params) {
  SynthRecord rec;
  auto [img, gmm] = sample_gmm_image(rng, s, params);
  rec.gmm = std::move(gmm);

  rec.blur_sigmas.resize(s.rank());
  for (auto& sigma : rec.blur_sigmas) sigma = sample_uniform(rng, 0.0, params.b_K);
  img = gaussian_blur_separable(img, rec.blur_sigmas);

  BiasDraw bias = sample_bias_draw(rng, s.meta(), params);
  rec.bias_sd = bias.sd;
  auto pixels = img.data();
  auto gain = bias.field.data();
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] *= gain[i];

  img = minmax_normalize(img);
  auto g = gamma_augment(rng, img, params.sigma_gamma);
  rec.image = std::move(g.image);
  rec.gamma = g.gamma;
  return rec;
}

using Lut = std::array<double, 256>;

/// 256 entries drawn from U(0, 255), smoothed with a Gaussian of SD sigma_L
/// (entries), replicate borders.
inline Lut sample_lut(RngStream& rng, double sigma_L) {
  if (!(sigma_L >= 0.0)) throw std::invalid_argument("sample_lut: negative sigma");
  Lut raw{};
  for (auto& v : raw) v = sample_uniform(rng, 0.0, 255.0);
  const auto kernel = gaussian_kernel(sigma_L);
  Lut smooth{};
  convolve_line_replicate(raw.data(), smooth.data(), raw.size(), 1, kernel);
  return smooth;
}

inline Lut identity_lut() {
  Lut lut{};
  for (std::size_t i = 0; i < lut.size(); ++i) lut[i] = double(i);
  return lut;
}

/// Quantizes a [0, 1] image to 256 bins, maps each bin through `lut`, and
/// min-max normalizes the result back to [0, 1].
inline ScalarField apply_lut(const ScalarField& img, const Lut& lut) {
  detail::require_unit_range(img, "apply_lut");
  ScalarField out(img.meta(), img.channels());
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto bin = static_cast<std::size_t>(std::lround(double(src[i]) * 255.0));
    dst[i] = static_cast<float>(lut[std::min<std::size_t>(bin, 255)]);
  }
  return minmax_normalize(out);
}

inline ScalarField lut_augment(RngStream& rng, const ScalarField& img, double sigma_L = 64.0) {
  detail::require_unit_range(img, "lut_augment");
  return apply_lut(img, sample_lut(rng, sigma_L));
}

inline bool is_monotonic(const Lut& lut) {
  bool up = true, down = true;
  for (std::size_t i = 1; i < lut.size(); ++i) {
    up = up && lut[i] >= lut[i - 1];
    down = down && lut[i] <= lut[i - 1];
  }
  return up || down;
}

}  // namespace synthmorph
