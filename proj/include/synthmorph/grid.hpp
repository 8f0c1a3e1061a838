#pragma once

// Voxel-grid value types and the interpolation, resampling, normalization and
// smoothing primitives shared by every other module.
//
// Storage is row-major with the last axis fastest and channels innermost
// (channel-last), which is also the on-disk payload order of SMVF files.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace synthmorph {

using Dims = std::vector<std::size_t>;
using Label = std::int32_t;

inline std::size_t product(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string dims_to_string(const Dims& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(dims[i]);
  }
  return out;
}

/// Grid geometry. Spacing (mm) is metadata only; interpolation works in voxels.
/// Rank 1 is accepted in addition to 2 and 3 so that profiles along a single
/// axis can be represented without a singleton padding axis.
struct GridMeta {
  Dims dims;
  std::vector<double> spacing;

  GridMeta() = default;
  explicit GridMeta(Dims d) : dims(std::move(d)), spacing(dims.size(), 1.0) {
    validate();
  }
  GridMeta(Dims d, std::vector<double> s)
      : dims(std::move(d)), spacing(std::move(s)) {
    validate();
  }

  std::size_t rank() const { return dims.size(); }
  std::size_t voxels() const { return product(dims); }

  void validate() const {
    if (dims.empty() || dims.size() > 3)
      throw std::invalid_argument("grid rank must be 1, 2 or 3");
    if (spacing.size() != dims.size())
      throw std::invalid_argument("spacing must have one entry per axis");
    for (auto d : dims)
      if (d == 0) throw std::invalid_argument("grid dims must be positive");
    for (auto s : spacing)
      if (!(s > 0.0) || !std::isfinite(s))
        throw std::invalid_argument("grid spacing must be positive");
  }

  bool same_grid(const GridMeta& other) const { return dims == other.dims; }
  bool operator==(const GridMeta&) const = default;
};

namespace detail {

// Row-major strides (in voxels) with the last axis fastest.
inline Dims strides(const Dims& dims) {
  Dims s(dims.size(), 1);
  for (std::size_t a = dims.size(); a-- > 1;) s[a - 1] = s[a] * dims[a];
  return s;
}

// Odometer over all voxel coordinates, last axis fastest.
inline bool next_coord(std::vector<std::size_t>& coord, const Dims& dims) {
  for (std::size_t a = dims.size(); a-- > 0;) {
    if (++coord[a] < dims[a]) return true;
    coord[a] = 0;
  }
  return false;
}

}  // namespace detail

/// Multi-channel real-valued field (images, noise, bias, one-hot channels).
class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(GridMeta meta, std::size_t channels, float value = 0.0f)
      : meta_(std::move(meta)), channels_(channels) {
    meta_.validate();
    if (channels_ == 0) throw std::invalid_argument("channel count must be positive");
    data_.assign(meta_.voxels() * channels_, value);
  }
  ScalarField(GridMeta meta, std::size_t channels, std::vector<float> data)
      : meta_(std::move(meta)), channels_(channels), data_(std::move(data)) {
    meta_.validate();
    if (channels_ == 0) throw std::invalid_argument("channel count must be positive");
    if (data_.size() != meta_.voxels() * channels_)
      throw std::invalid_argument("field data length does not match dims x channels");
    for (float v : data_)
      if (!std::isfinite(v)) throw std::invalid_argument("field values must be finite");
  }

  const GridMeta& meta() const { return meta_; }
  const Dims& dims() const { return meta_.dims; }
  std::size_t rank() const { return meta_.rank(); }
  std::size_t channels() const { return channels_; }
  std::size_t voxels() const { return meta_.voxels(); }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  float at(std::size_t voxel, std::size_t channel = 0) const {
    return data_[voxel * channels_ + channel];
  }
  float& at(std::size_t voxel, std::size_t channel = 0) {
    return data_[voxel * channels_ + channel];
  }

  /// Copy of a single channel as a one-channel field.
  ScalarField channel(std::size_t c) const {
    ScalarField out(meta_, 1);
    for (std::size_t v = 0; v < voxels(); ++v) out.data_[v] = at(v, c);
    return out;
  }

  bool operator==(const ScalarField&) const = default;

 private:
  GridMeta meta_;
  std::size_t channels_ = 0;
  std::vector<float> data_;
};

/// A field with exactly one channel per spatial axis, in voxel units.
/// Channel a is the component along axis a.
class VectorField : public ScalarField {
 public:
  VectorField() = default;
  explicit VectorField(GridMeta meta, float value = 0.0f)
      : ScalarField(meta, meta.rank(), value) {}
  VectorField(GridMeta meta, std::vector<float> data)
      : ScalarField(meta, meta.rank(), std::move(data)) {}
  explicit VectorField(ScalarField field) : ScalarField(std::move(field)) {
    if (channels() != rank())
      throw std::invalid_argument("vector field needs one channel per axis");
  }
};

/// Integer label per voxel.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(GridMeta meta, std::vector<Label> data)
      : meta_(std::move(meta)), data_(std::move(data)) {
    meta_.validate();
    if (data_.size() != meta_.voxels())
      throw std::invalid_argument("label data length does not match dims");
    for (Label l : data_)
      if (l < 0) throw std::invalid_argument("labels must be non-negative");
    label_set_ = data_;
    std::sort(label_set_.begin(), label_set_.end());
    label_set_.erase(std::unique(label_set_.begin(), label_set_.end()),
                     label_set_.end());
  }

  const GridMeta& meta() const { return meta_; }
  const Dims& dims() const { return meta_.dims; }
  std::size_t rank() const { return meta_.rank(); }
  std::size_t voxels() const { return meta_.voxels(); }
  std::span<const Label> data() const { return data_; }
  Label at(std::size_t voxel) const { return data_[voxel]; }
  const std::vector<Label>& label_set() const { return label_set_; }

  bool operator==(const LabelMap& o) const {
    return meta_ == o.meta_ && data_ == o.data_;
  }

 private:
  GridMeta meta_;
  std::vector<Label> data_;
  std::vector<Label> label_set_;
};

/// ceil(dim * r) per axis, at least 1.
inline Dims low_res_dims(const Dims& full_dims, double ratio) {
  if (!(ratio > 0.0) || ratio > 1.0)
    throw std::invalid_argument("resolution ratio must lie in (0, 1]");
  Dims out(full_dims.size());
  for (std::size_t a = 0; a < full_dims.size(); ++a) {
    // Guard against products like 160 * (1/40) landing a hair above 4.
    const double scaled = static_cast<double>(full_dims[a]) * ratio;
    const double rounded = std::round(scaled);
    const double value = std::abs(scaled - rounded) < 1e-9 ? rounded : std::ceil(scaled);
    out[a] = std::max<std::size_t>(1, static_cast<std::size_t>(value));
  }
  return out;
}

/// Corner-aligned multilinear resampling onto the grid `target`: the first
/// and last samples of every axis map onto each other.
inline ScalarField resample_linear(const ScalarField& src, const GridMeta& target) {
  const Dims& target_dims = target.dims;
  if (target_dims.size() != src.rank())
    throw std::invalid_argument("resample_linear: rank mismatch");
  for (auto d : target_dims)
    if (d == 0) throw std::invalid_argument("resample_linear: zero-sized target");
  if (target_dims == src.dims()) {
    ScalarField same(target, src.channels(),
                     std::vector<float>(src.data().begin(), src.data().end()));
    return same;
  }

  const std::size_t rank = src.rank();
  const std::size_t channels = src.channels();
  ScalarField out(target, channels);

  // Separable: interpolate along one axis at a time.
  std::vector<double> cur(src.data().begin(), src.data().end());
  Dims cur_dims = src.dims();
  for (std::size_t axis = 0; axis < rank; ++axis) {
    const std::size_t n_src = cur_dims[axis], n_dst = target_dims[axis];
    if (n_src == n_dst) continue;
    Dims next_dims = cur_dims;
    next_dims[axis] = n_dst;
    std::size_t outer = 1, inner = channels;
    for (std::size_t a = 0; a < axis; ++a) outer *= cur_dims[a];
    for (std::size_t a = axis + 1; a < rank; ++a) inner *= cur_dims[a];
    std::vector<double> next(outer * n_dst * inner);
    for (std::size_t j = 0; j < n_dst; ++j) {
      double pos = (n_dst > 1 && n_src > 1)
                       ? double(j) * double(n_src - 1) / double(n_dst - 1)
                       : 0.0;
      std::size_t lo = static_cast<std::size_t>(std::floor(pos));
      if (n_src > 1 && lo >= n_src - 1) lo = n_src - 2;
      if (n_src == 1) lo = 0;
      const double t = pos - double(lo);
      const std::size_t hi = n_src > 1 ? lo + 1 : lo;
      for (std::size_t o = 0; o < outer; ++o) {
        const double* a = &cur[(o * n_src + lo) * inner];
        const double* b = &cur[(o * n_src + hi) * inner];
        double* d = &next[(o * n_dst + j) * inner];
        for (std::size_t i = 0; i < inner; ++i)
          d[i] = t == 0.0 ? a[i] : (1.0 - t) * a[i] + t * b[i];
      }
    }
    cur = std::move(next);
    cur_dims = std::move(next_dims);
  }
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(cur[i]);
  return out;
}

/// Resampling to new dims; spacing is rescaled so the physical extent between
/// corner samples is preserved.
inline ScalarField resample_linear(const ScalarField& src, const Dims& target_dims) {
  if (target_dims.size() != src.rank())
    throw std::invalid_argument("resample_linear: rank mismatch");
  if (target_dims == src.dims()) return src;
  std::vector<double> spacing(src.rank());
  for (std::size_t a = 0; a < src.rank(); ++a) {
    const auto n_src = src.dims()[a], n_dst = target_dims[a];
    spacing[a] = (n_src > 1 && n_dst > 1)
                     ? src.meta().spacing[a] * double(n_src - 1) / double(n_dst - 1)
                     : src.meta().spacing[a];
  }
  for (auto d : target_dims)
    if (d == 0) throw std::invalid_argument("resample_linear: zero-sized target");
  return resample_linear(src, GridMeta(target_dims, spacing));
}

/// Samples src at x + u(x) with multilinear interpolation. Corners that fall
/// outside the grid contribute `fill`.
inline ScalarField warp_linear(const ScalarField& src, const VectorField& u,
                               float fill = 0.0f) {
  if (!src.meta().same_grid(u.meta()))
    throw std::invalid_argument("warp_linear: displacement grid does not match source");
  const std::size_t rank = src.rank();
  const std::size_t channels = src.channels();
  const Dims& dims = src.dims();
  const Dims stride = detail::strides(dims);
  ScalarField out(src.meta(), channels);
  auto in = src.data();
  auto dst = out.data();

  std::vector<std::size_t> coord(rank, 0);
  std::vector<double> acc(channels);
  std::int64_t base[3];
  double frac[3];
  std::size_t voxel = 0;
  do {
    for (std::size_t a = 0; a < rank; ++a) {
      const double p = double(coord[a]) + double(u.at(voxel, a));
      const double f = std::floor(p);
      base[a] = static_cast<std::int64_t>(f);
      frac[a] = p - f;
    }
    std::fill(acc.begin(), acc.end(), 0.0);
    for (unsigned corner = 0; corner < (1u << rank); ++corner) {
      double w = 1.0;
      bool inside = true;
      std::size_t offset = 0;
      for (std::size_t a = 0; a < rank; ++a) {
        const bool upper = (corner >> a) & 1u;
        w *= upper ? frac[a] : 1.0 - frac[a];
        const std::int64_t idx = base[a] + (upper ? 1 : 0);
        if (idx < 0 || idx >= static_cast<std::int64_t>(dims[a]))
          inside = false;
        else
          offset += static_cast<std::size_t>(idx) * stride[a];
      }
      if (w == 0.0) continue;
      if (inside) {
        const float* s = &in[offset * channels];
        for (std::size_t c = 0; c < channels; ++c) acc[c] += w * double(s[c]);
      } else {
        for (std::size_t c = 0; c < channels; ++c) acc[c] += w * double(fill);
      }
    }
    for (std::size_t c = 0; c < channels; ++c)
      dst[voxel * channels + c] = static_cast<float>(acc[c]);
    ++voxel;
  } while (detail::next_coord(coord, dims));
  return out;
}

/// Nearest-neighbor label warp; rounding ties go to the lower coordinate.
inline LabelMap warp_nearest(const LabelMap& src, const VectorField& u,
                             Label fill_label = 0) {
  if (!src.meta().same_grid(u.meta()))
    throw std::invalid_argument("warp_nearest: displacement grid does not match source");
  const std::size_t rank = src.rank();
  const Dims& dims = src.dims();
  const Dims stride = detail::strides(dims);
  std::vector<Label> out(src.voxels());
  std::vector<std::size_t> coord(rank, 0);
  std::size_t voxel = 0;
  do {
    bool inside = true;
    std::size_t offset = 0;
    for (std::size_t a = 0; a < rank; ++a) {
      const double p = double(coord[a]) + double(u.at(voxel, a));
      const double r = std::ceil(p - 0.5);
      if (r < 0.0 || r >= double(dims[a])) {
        inside = false;
        break;
      }
      offset += static_cast<std::size_t>(r) * stride[a];
    }
    out[voxel] = inside ? src.at(offset) : fill_label;
    ++voxel;
  } while (detail::next_coord(coord, dims));
  return LabelMap(src.meta(), std::move(out));
}

/// One channel per entry of `labels`; 1 where the map equals that label.
inline ScalarField one_hot(const LabelMap& s, std::span<const Label> labels) {
  if (labels.empty()) throw std::invalid_argument("one_hot: empty label list");
  ScalarField out(s.meta(), labels.size());
  for (std::size_t v = 0; v < s.voxels(); ++v)
    for (std::size_t j = 0; j < labels.size(); ++j)
      if (s.at(v) == labels[j]) out.at(v, j) = 1.0f;
  return out;
}

/// Maps [min, max] to [0, 1]. A constant field maps to zeros.
inline ScalarField minmax_normalize(const ScalarField& img) {
  auto in = img.data();
  ScalarField out(img.meta(), img.channels());
  if (in.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(in.begin(), in.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return out;
  auto dst = out.data();
  const double range = hi - lo;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] == *lo_it) dst[i] = 0.0f;
    else if (in[i] == *hi_it) dst[i] = 1.0f;
    else dst[i] = static_cast<float>((double(in[i]) - lo) / range);
  }
  return out;
}

/// Normalized discrete Gaussian truncated at radius ceil(3 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
  if (sigma < 0.0 || !std::isfinite(sigma))
    throw std::invalid_argument("gaussian sigma must be non-negative");
  if (sigma == 0.0) return {1.0};
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double x = double(i) / sigma;
    k[i + radius] = std::exp(-0.5 * x * x);
    sum += k[i + radius];
  }
  for (auto& w : k) w /= sum;
  return k;
}

/// 1D convolution of a strided line with replicate borders.
inline void convolve_line_replicate(const double* in, double* out, std::size_t n,
                                    std::size_t step, std::span<const double> kernel) {
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  for (std::ptrdiff_t i = 0; i <= last; ++i) {
    double acc = 0.0;
    for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
      const std::ptrdiff_t j = std::clamp<std::ptrdiff_t>(i + k, 0, last);
      acc += kernel[k + radius] * in[j * step];
    }
    out[i * step] = acc;
  }
}

/// Sequential 1D Gaussian convolutions, one per axis (sigma in voxels).
inline ScalarField gaussian_blur_separable(const ScalarField& img,
                                           std::span<const double> sigmas) {
  if (sigmas.size() != img.rank())
    throw std::invalid_argument("gaussian_blur_separable: need one sigma per axis");
  for (double s : sigmas)
    if (s < 0.0 || !std::isfinite(s))
      throw std::invalid_argument("gaussian_blur_separable: negative sigma");

  const Dims& dims = img.dims();
  const std::size_t channels = img.channels();
  std::vector<double> cur(img.data().begin(), img.data().end());
  std::vector<double> next(cur.size());
  bool touched = false;
  for (std::size_t axis = 0; axis < img.rank(); ++axis) {
    if (sigmas[axis] == 0.0 || dims[axis] == 1) continue;
    const auto kernel = gaussian_kernel(sigmas[axis]);
    std::size_t outer = 1, inner = channels;
    for (std::size_t a = 0; a < axis; ++a) outer *= dims[a];
    for (std::size_t a = axis + 1; a < img.rank(); ++a) inner *= dims[a];
    const std::size_t n = dims[axis];
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t start = o * n * inner + i;
        convolve_line_replicate(&cur[start], &next[start], n, inner, kernel);
      }
    std::swap(cur, next);
    touched = true;
  }
  if (!touched) return img;
  ScalarField out(img.meta(), channels);
  auto dst = out.data();
  for (std::size_t i = 0; i < cur.size(); ++i) dst[i] = static_cast<float>(cur[i]);
  return out;
}

inline ScalarField gaussian_blur_separable(const ScalarField& img,
                                           std::initializer_list<double> sigmas) {
  return gaussian_blur_separable(img, std::span<const double>(sigmas.begin(), sigmas.size()));
}

}  // namespace synthmorph
