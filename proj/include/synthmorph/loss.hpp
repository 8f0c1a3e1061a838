#pragma once

// Training objectives evaluated on plain fields. The differentiable
// counterparts used during training live in autodiff.hpp and are tested
// against these.

#include <stdexcept>

#include "deform.hpp"
#include "grid.hpp"

namespace synthmorph {

struct LossReport {
  double dice_term = 0.0;
  double reg_term = 0.0;
  double total = 0.0;
  double lambda_reg = 0.0;
};

inline LossReport total_loss(double dice, double reg, double lambda_reg) {
  return LossReport{dice, reg, dice + lambda_reg * reg, lambda_reg};
}

/// -(2/J) sum_j |a_j * b_j| / |a_j + b_j| over J channels; a channel whose
/// denominator is zero contributes nothing.
inline double soft_dice_loss(const ScalarField& moved, const ScalarField& fixed) {
  if (!moved.meta().same_grid(fixed.meta()) || moved.channels() != fixed.channels())
    throw std::invalid_argument("soft_dice_loss: shape mismatch");
  const std::size_t channels = moved.channels();
  std::vector<double> inter(channels, 0.0), sum(channels, 0.0);
  auto a = moved.data();
  auto b = fixed.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::size_t c = i % channels;
    inter[c] += double(a[i]) * double(b[i]);
    sum[c] += double(a[i]) + double(b[i]);
  }
  double acc = 0.0;
  for (std::size_t c = 0; c < channels; ++c)
    if (sum[c] != 0.0) acc += inter[c] / sum[c];
  return -2.0 / double(channels) * acc;
}

/// 1/2 mean of squared forward differences over voxels, components and axes
/// (backward difference on the last sample of an axis).
inline double smoothness_loss(const DisplacementField& u) {
  const Dims& dims = u.meta().dims;
  const std::size_t rank = dims.size();
  const Dims stride = detail::strides(dims);
  std::vector<std::size_t> coord(rank, 0);
  std::size_t voxel = 0;
  double acc = 0.0;
  do {
    for (std::size_t a = 0; a < rank; ++a) {
      if (dims[a] == 1) continue;
      const std::size_t lo = coord[a] + 1 < dims[a] ? voxel : voxel - stride[a];
      const std::size_t hi = lo + stride[a];
      for (std::size_t c = 0; c < rank; ++c) {
        const double d = double(u.field.at(hi, c)) - double(u.field.at(lo, c));
        acc += d * d;
      }
    }
    ++voxel;
  } while (detail::next_coord(coord, dims));
  return 0.5 * acc / double(u.field.voxels() * rank * rank);
}

inline double mse_field_loss(const VectorField& pred, const VectorField& target) {
  if (!pred.meta().same_grid(target.meta()) || pred.channels() != target.channels())
    throw std::invalid_argument("mse_field_loss: shape mismatch");
  auto a = pred.data();
  auto b = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    acc += d * d;
  }
  return acc / double(a.size());
}

inline double image_mse_loss(const ScalarField& moved, const ScalarField& fixed) {
  if (!moved.meta().same_grid(fixed.meta()) || moved.channels() != fixed.channels())
    throw std::invalid_argument("image_mse_loss: shape mismatch");
  auto a = moved.data();
  auto b = fixed.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    acc += d * d;
  }
  return acc / double(a.size());
}

}  // namespace synthmorph
