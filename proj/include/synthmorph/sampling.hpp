#pragma once

// Generator hyperparameters and deterministic random streams.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grid.hpp"

namespace synthmorph {

/// Philox4x32-10 counter-based generator. The 128-bit counter is split into a
/// 64-bit draw index (low half) and a 64-bit stream id (high half); the seed is
/// the key. Identical (seed, stream) pairs give identical sequences everywhere.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  /// Independent child stream. Splitting is a pure function of
  /// (stream id, child id) and does not advance this stream.
  RngStream split(std::uint64_t child) const {
    return RngStream(seed_, mix64(stream_ ^ mix64(child + 0x632BE59BD9B4E019ULL)));
  }

  std::uint32_t next_u32() {
    if (buffered_ == 0) refill();
    return buffer_[4 - buffered_--];
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  /// Uniform in [0, 1) with 53 random bits.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Raw Philox4x32-10 block, exposed for known-answer tests.
  static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> ctr,
                                             std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t(kM0) * ctr[0];
      const std::uint64_t p1 = std::uint64_t(kM1) * ctr[2];
      ctr = {std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], std::uint32_t(p1),
             std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], std::uint32_t(p0)};
      key[0] += kW0;
      key[1] += kW1;
    }
    return ctr;
  }

  static std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  void refill() {
    buffer_ = philox({std::uint32_t(counter_), std::uint32_t(counter_ >> 32),
                      std::uint32_t(stream_), std::uint32_t(stream_ >> 32)},
                     {std::uint32_t(seed_), std::uint32_t(seed_ >> 32)});
    ++counter_;
    buffered_ = 4;
  }

  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;
};

inline double sample_uniform(RngStream& rng, double a, double b) {
  if (!(a <= b)) throw std::invalid_argument("sample_uniform: need a <= b");
  const double u = rng.next_double();
  if (a == b) return a;
  return a + (b - a) * u;
}

/// Box-Muller on two uniform draws; always consumes exactly two draws.
inline double sample_normal(RngStream& rng, double mu, double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("sample_normal: negative sigma");
  const double u1 = 1.0 - rng.next_double();  // (0, 1]
  const double u2 = rng.next_double();
  if (sigma == 0.0) return mu;
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return mu + sigma * z;
}

/// Hyperparameters of the generative model. Spatial quantities are in voxels.
struct GenParams {
  double lambda_reg = 1.0;
  double r_p = 1.0 / 32;
  double r_B = 1.0 / 40;
  double r_v = 1.0 / 16;
  double b_p = 100.0;
  double b_v = 3.0;
  double a_mu = 25.0;
  double b_mu = 225.0;
  double a_sigma = 5.0;
  double b_sigma = 25.0;
  double b_B = 0.3;
  double b_K = 1.0;
  double sigma_gamma = 0.25;
  int J = 26;
  std::vector<double> multires_rv = {1.0 / 8, 1.0 / 16, 1.0 / 32};
  int int_steps = 5;
  Dims dims = {160, 160, 192};

  void validate() const {
    auto ratio_ok = [](double r) { return r > 0.0 && r <= 1.0; };
    if (!ratio_ok(r_p) || !ratio_ok(r_B) || !ratio_ok(r_v))
      throw std::invalid_argument("GenParams: ratios must lie in (0, 1]");
    if (multires_rv.empty())
      throw std::invalid_argument("GenParams: multires_rv must not be empty");
    for (double r : multires_rv)
      if (!ratio_ok(r)) throw std::invalid_argument("GenParams: ratios must lie in (0, 1]");
    if (!(a_mu <= b_mu) || !(a_sigma <= b_sigma))
      throw std::invalid_argument("GenParams: ranges need a <= b");
    if (a_sigma < 0.0 || b_p < 0.0 || b_v < 0.0 || b_B < 0.0 || b_K < 0.0 ||
        sigma_gamma < 0.0 || lambda_reg < 0.0)
      throw std::invalid_argument("GenParams: spreads and caps must be non-negative");
    if (J < 1) throw std::invalid_argument("GenParams: J must be at least 1");
    if (int_steps < 0) throw std::invalid_argument("GenParams: int_steps must be >= 0");
    GridMeta{dims}.validate();
  }

  bool operator==(const GenParams&) const = default;
};

inline GenParams default_params(const Dims& dims) {
  GenParams p;
  p.dims = dims;
  p.validate();
  return p;
}

namespace detail {

// Ratios may be written as numbers or as "1:N" strings.
inline double parse_ratio(const nlohmann::json& j, const char* key) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    const auto colon = s.find(':');
    if (colon != std::string::npos) {
      try {
        const double num = std::stod(s.substr(0, colon));
        const double den = std::stod(s.substr(colon + 1));
        if (den > 0.0) return num / den;
      } catch (const std::exception&) {
      }
    }
  }
  throw std::invalid_argument(std::string("GenParams: bad ratio for key ") + key);
}

}  // namespace detail

inline nlohmann::json to_json(const GenParams& p) {
  return nlohmann::json{
      {"lambda_reg", p.lambda_reg}, {"r_p", p.r_p},       {"r_B", p.r_B},
      {"r_v", p.r_v},               {"b_p", p.b_p},       {"b_v", p.b_v},
      {"a_mu", p.a_mu},             {"b_mu", p.b_mu},     {"a_sigma", p.a_sigma},
      {"b_sigma", p.b_sigma},       {"b_B", p.b_B},       {"b_K", p.b_K},
      {"sigma_gamma", p.sigma_gamma}, {"J", p.J},         {"multires_rv", p.multires_rv},
      {"int_steps", p.int_steps},   {"dims", p.dims}};
}

/// Parses a GenParams document. Missing keys keep the values of `base`;
/// unknown keys are rejected.
inline GenParams params_from_json(const nlohmann::json& j, GenParams base = {}) {
  if (!j.is_object()) throw std::invalid_argument("GenParams: expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const auto& v = it.value();
    try {
      if (k == "lambda_reg") base.lambda_reg = v.get<double>();
      else if (k == "r_p") base.r_p = detail::parse_ratio(v, "r_p");
      else if (k == "r_B") base.r_B = detail::parse_ratio(v, "r_B");
      else if (k == "r_v") base.r_v = detail::parse_ratio(v, "r_v");
      else if (k == "b_p") base.b_p = v.get<double>();
      else if (k == "b_v") base.b_v = v.get<double>();
      else if (k == "a_mu") base.a_mu = v.get<double>();
      else if (k == "b_mu") base.b_mu = v.get<double>();
      else if (k == "a_sigma") base.a_sigma = v.get<double>();
      else if (k == "b_sigma") base.b_sigma = v.get<double>();
      else if (k == "b_B") base.b_B = v.get<double>();
      else if (k == "b_K") base.b_K = v.get<double>();
      else if (k == "sigma_gamma") base.sigma_gamma = v.get<double>();
      else if (k == "J") base.J = v.get<int>();
      else if (k == "int_steps") base.int_steps = v.get<int>();
      else if (k == "dims") base.dims = v.get<Dims>();
      else if (k == "multires_rv") {
        if (!v.is_array()) throw std::invalid_argument("GenParams: multires_rv must be a list");
        base.multires_rv.clear();
        for (const auto& r : v) base.multires_rv.push_back(detail::parse_ratio(r, "multires_rv"));
      } else {
        throw std::invalid_argument("GenParams: unknown key '" + k + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("GenParams: bad value for '" + k + "': " + e.what());
    }
  }
  base.validate();
  return base;
}

/// I.i.d. standard-normal voxels at low_res_dims(full_dims, r), upsampled
/// to full size. Single channel.
inline ScalarField sample_noise_field(RngStream& rng, const Dims& full_dims, double ratio) {
  const GridMeta low(low_res_dims(full_dims, ratio));
  ScalarField noise(low, 1);
  for (auto& v : noise.data()) v = static_cast<float>(sample_normal(rng, 0.0, 1.0));
  return resample_linear(noise, GridMeta(full_dims));
}

}  // namespace synthmorph
