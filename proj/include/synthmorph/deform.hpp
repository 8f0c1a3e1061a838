#pragma once

// Stationary velocity fields, scaling-and-squaring integration, warp
// composition and Jacobian analysis. All displacements are in voxels.

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "grid.hpp"
#include "sampling.hpp"

namespace synthmorph {

/// Stationary velocity field, voxels per unit flow time.
struct Svf {
  VectorField field;
  const GridMeta& meta() const { return field.meta(); }
  bool operator==(const Svf&) const = default;
};

/// Displacement u of the map x -> x + u(x), in voxels.
struct DisplacementField {
  VectorField field;
  const GridMeta& meta() const { return field.meta(); }
  bool operator==(const DisplacementField&) const = default;
};

inline VectorField scaled(const VectorField& f, double factor) {
  VectorField out = f;
  for (auto& v : out.data()) v = static_cast<float>(double(v) * factor);
  return out;
}

inline VectorField added(const VectorField& a, const VectorField& b) {
  if (!a.meta().same_grid(b.meta()))
    throw std::invalid_argument("vector field grids do not match");
  VectorField out = a;
  auto dst = out.data();
  auto rhs = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += rhs[i];
  return out;
}

inline Svf zero_svf(const GridMeta& meta) { return Svf{VectorField(meta)}; }
inline DisplacementField zero_displacement(const GridMeta& meta) {
  return DisplacementField{VectorField(meta)};
}

/// Scaling and squaring: u = v / 2^steps, then `steps` times u <- u + u o (Id + u).
/// Samples falling outside the grid during squaring read zero displacement.
inline DisplacementField integrate_svf(const Svf& v, int steps) {
  if (steps < 0) throw std::invalid_argument("integrate_svf: steps must be >= 0");
  VectorField u = scaled(v.field, std::ldexp(1.0, -steps));
  for (int i = 0; i < steps; ++i)
    u = added(u, VectorField(warp_linear(u, u, 0.0f)));
  return DisplacementField{std::move(u)};
}

/// Displacement of phi1 o phi2: u(x) = u2(x) + u1(x + u2(x)).
inline DisplacementField compose(const DisplacementField& u1, const DisplacementField& u2) {
  if (!u1.meta().same_grid(u2.meta()))
    throw std::invalid_argument("compose: grids do not match");
  return DisplacementField{added(u2.field, VectorField(warp_linear(u1.field, u2.field, 0.0f)))};
}

/// An SVF draw together with its low-resolution samples and drawn SD.
struct SvfDraw {
  Svf svf;
  VectorField low_res;
  double sigma = 0.0;
};

/// sigma ~ U(0, b); D channels of N(0, sigma^2) at low_res_dims(full, r),
/// upsampled to full size.
inline SvfDraw sample_svf_draw(RngStream& rng, const Dims& full_dims, double ratio, double b) {
  if (!(b >= 0.0)) throw std::invalid_argument("sample_svf: cap must be non-negative");
  const double sigma = sample_uniform(rng, 0.0, b);
  const GridMeta low(low_res_dims(full_dims, ratio));
  VectorField low_field(low);
  for (auto& x : low_field.data()) x = static_cast<float>(sample_normal(rng, 0.0, sigma));
  VectorField full(resample_linear(low_field, GridMeta(full_dims)));
  return SvfDraw{Svf{std::move(full)}, std::move(low_field), sigma};
}

inline Svf sample_svf(RngStream& rng, const Dims& full_dims, double ratio, double b) {
  return sample_svf_draw(rng, full_dims, ratio, b).svf;
}

/// Sum of independent single-resolution draws, one sigma per ratio.
inline Svf sample_multires_svf(RngStream& rng, const Dims& full_dims,
                               std::span<const double> ratios, double b) {
  if (ratios.empty()) throw std::invalid_argument("sample_multires_svf: no ratios");
  Svf total = sample_svf(rng, full_dims, ratios[0], b);
  for (std::size_t i = 1; i < ratios.size(); ++i)
    total.field = added(total.field, sample_svf(rng, full_dims, ratios[i], b).field);
  return total;
}

/// det(I + grad u) per voxel; forward differences, backward on the last
/// sample of each axis, zero derivative along singleton axes.
inline ScalarField jacobian_det(const DisplacementField& u) {
  const GridMeta& meta = u.meta();
  const std::size_t rank = meta.rank();
  const Dims& dims = meta.dims;
  const Dims stride = detail::strides(dims);
  ScalarField out(meta, 1);
  std::vector<std::size_t> coord(rank, 0);
  std::size_t voxel = 0;
  double jac[3][3];
  do {
    for (std::size_t a = 0; a < rank; ++a) {
      std::size_t lo = voxel, hi = voxel;
      if (dims[a] > 1) {
        if (coord[a] + 1 < dims[a]) hi = voxel + stride[a];
        else lo = voxel - stride[a];
      }
      for (std::size_t c = 0; c < rank; ++c) {
        const double d = dims[a] > 1 ? double(u.field.at(hi, c)) - double(u.field.at(lo, c)) : 0.0;
        jac[c][a] = (c == a ? 1.0 : 0.0) + d;
      }
    }
    double det;
    if (rank == 1) det = jac[0][0];
    else if (rank == 2) det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    else
      det = jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1]) -
            jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0]) +
            jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0]);
    out.at(voxel) = static_cast<float>(det);
    ++voxel;
  } while (detail::next_coord(coord, dims));
  return out;
}

/// Fraction of voxels with det(J) <= 0.
inline double folding_fraction(const DisplacementField& u) {
  const ScalarField det = jacobian_det(u);
  std::size_t folded = 0;
  for (float d : det.data()) folded += d <= 0.0f;
  return double(folded) / double(det.voxels());
}

inline double mean_jacobian_det(const DisplacementField& u) {
  const ScalarField det = jacobian_det(u);
  double sum = 0.0;
  for (float d : det.data()) sum += d;
  return sum / double(det.voxels());
}

}  // namespace synthmorph
