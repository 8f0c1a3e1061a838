#pragma once

// Random geometric label maps and moving/fixed label-map pairs.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "deform.hpp"
#include "grid.hpp"
#include "sampling.hpp"

namespace synthmorph {

struct ShapePair {
  LabelMap s_m;
  LabelMap s_f;
  Svf truth_v_m;
  Svf truth_v_f;
  /// Net moving-to-fixed displacement, present only when it is known exactly
  /// (see supervised_pair).
  std::optional<DisplacementField> truth_u_net;
};

/// Argmax over candidate images of |p|, ties to the lowest index. Labels
/// are 1-based in candidate order.
inline LabelMap argmax_abs_labels(std::span<const ScalarField> candidates) {
  if (candidates.empty()) throw std::invalid_argument("argmax_abs_labels: no candidates");
  const GridMeta& meta = candidates[0].meta();
  std::vector<Label> labels(meta.voxels(), 1);
  std::vector<float> best(meta.voxels());
  for (std::size_t v = 0; v < meta.voxels(); ++v) best[v] = std::abs(candidates[0].at(v));
  for (std::size_t j = 1; j < candidates.size(); ++j) {
    if (!candidates[j].meta().same_grid(meta))
      throw std::invalid_argument("argmax_abs_labels: grid mismatch");
    for (std::size_t v = 0; v < meta.voxels(); ++v) {
      const float a = std::abs(candidates[j].at(v));
      if (a > best[v]) {
        best[v] = a;
        labels[v] = static_cast<Label>(j + 1);
      }
    }
  }
  return LabelMap(meta, std::move(labels));
}

/// J smooth noise images, each warped by its own random diffeomorphism;
/// every voxel takes the label of the image with the largest magnitude.
inline LabelMap generate_shape_labels(const RngStream& rng, const GenParams& params) {
  params.validate();
  const GridMeta meta(params.dims);
  std::vector<ScalarField> warped;
  warped.reserve(params.J);
  for (int j = 0; j < params.J; ++j) {
    RngStream stream = rng.split(static_cast<std::uint64_t>(j));
    ScalarField noise = sample_noise_field(stream, params.dims, params.r_p);
    const Svf v = sample_svf(stream, params.dims, params.r_p, params.b_p);
    const DisplacementField phi = integrate_svf(v, params.int_steps);
    warped.push_back(warp_linear(noise, phi.field, 0.0f));
  }
  return argmax_abs_labels(warped);
}

/// Two independent multi-resolution deformations of one source map
/// (nearest-neighbor, label 0 outside the grid). The moving and fixed sides
/// draw from the given streams.
inline ShapePair pair_from_single_map(RngStream moving_stream, RngStream fixed_stream,
                                      const LabelMap& s, const GenParams& params) {
  params.validate();
  if (s.dims() != params.dims)
    throw std::invalid_argument("pair_from_single_map: label map dims differ from params");
  Svf v_m = sample_multires_svf(moving_stream, s.dims(), params.multires_rv, params.b_v);
  Svf v_f = sample_multires_svf(fixed_stream, s.dims(), params.multires_rv, params.b_v);
  ShapePair pair;
  pair.s_m = warp_nearest(s, integrate_svf(v_m, params.int_steps).field, 0);
  pair.s_f = warp_nearest(s, integrate_svf(v_f, params.int_steps).field, 0);
  pair.truth_v_m = std::move(v_m);
  pair.truth_v_f = std::move(v_f);
  return pair;
}

inline ShapePair pair_from_single_map(const RngStream& rng, const LabelMap& s,
                                      const GenParams& params) {
  return pair_from_single_map(rng.split(1), rng.split(2), s, params);
}

/// Separate source maps, each deformed by a single-resolution SVF at r_v.
inline ShapePair pair_from_two_maps(const RngStream& rng, const LabelMap& s1,
                                    const LabelMap& s2, const GenParams& params) {
  params.validate();
  if (!s1.meta().same_grid(s2.meta()))
    throw std::invalid_argument("pair_from_two_maps: grid mismatch");
  RngStream ms = rng.split(1), fs = rng.split(2);
  Svf v_m = sample_svf(ms, s1.dims(), params.r_v, params.b_v);
  Svf v_f = sample_svf(fs, s2.dims(), params.r_v, params.b_v);
  ShapePair pair;
  pair.s_m = warp_nearest(s1, integrate_svf(v_m, params.int_steps).field, 0);
  pair.s_f = warp_nearest(s2, integrate_svf(v_f, params.int_steps).field, 0);
  pair.truth_v_m = std::move(v_m);
  pair.truth_v_f = std::move(v_f);
  return pair;
}

/// Pair for supervised training: the moving map is the undeformed source, so
/// the fixed-side deformation is exactly the moving-to-fixed warp and is
/// stored in truth_u_net.
inline ShapePair supervised_pair(const RngStream& rng, const LabelMap& s,
                                 const GenParams& params) {
  params.validate();
  RngStream fs = rng.split(2);
  Svf v_f = sample_multires_svf(fs, s.dims(), params.multires_rv, params.b_v);
  DisplacementField u_f = integrate_svf(v_f, params.int_steps);
  ShapePair pair;
  pair.s_m = s;
  pair.s_f = warp_nearest(s, u_f.field, 0);
  pair.truth_v_m = zero_svf(s.meta());
  pair.truth_v_f = std::move(v_f);
  pair.truth_u_net = std::move(u_f);
  return pair;
}

}  // namespace synthmorph
