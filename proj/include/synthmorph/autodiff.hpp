#pragma once

// Minimal reverse-mode automatic differentiation over dense tensors.
//
// Each operation allocates a node holding its value and a closure that
// propagates the node's gradient into its parents. Spatial tensors are
// channel-first [C, H, W] (2D only); displacement tensors carry the row
// component in channel 0 and the column component in channel 1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace synthmorph::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

/// A value in the graph. `gradient` is empty until a backward pass reaches it.
template <typename T>
struct DiffTensor {
  Shape shape;
  std::vector<T> values;
  std::vector<T> gradient;
  bool requires_grad = false;
  std::vector<std::shared_ptr<DiffTensor>> parents;
  std::function<void(DiffTensor&)> backward_fn;

  std::size_t size() const { return values.size(); }
  T item() const { return values.at(0); }

  std::vector<T>& grad() {
    if (gradient.size() != values.size()) gradient.assign(values.size(), T(0));
    return gradient;
  }
};

template <typename T>
using Var = std::shared_ptr<DiffTensor<T>>;

template <typename T>
Var<T> constant(Shape shape, std::vector<T> values) {
  if (numel(shape) != values.size()) throw std::invalid_argument("constant: size mismatch");
  auto n = std::make_shared<DiffTensor<T>>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  return n;
}

template <typename T>
Var<T> parameter(Shape shape, std::vector<T> values) {
  auto n = constant<T>(std::move(shape), std::move(values));
  n->requires_grad = true;
  return n;
}

namespace detail {

template <typename T>
Var<T> make_node(Shape shape, std::vector<Var<T>> parents,
                 std::function<void(DiffTensor<T>&)> backward) {
  auto n = std::make_shared<DiffTensor<T>>();
  n->values.assign(numel(shape), T(0));
  n->shape = std::move(shape);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward);
  }
  return n;
}

inline void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace detail

/// Reverse pass from a scalar output; seeds d(out)/d(out) = 1.
template <typename T>
void backward(const Var<T>& out) {
  detail::require(out->size() == 1, "backward: output must be a scalar");
  std::vector<DiffTensor<T>*> order;
  std::unordered_set<DiffTensor<T>*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<DiffTensor<T>*, std::size_t>> stack{{out.get(), 0}};
  seen.insert(out.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      DiffTensor<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  out->grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    DiffTensor<T>* n = *it;
    if (n->backward_fn && n->gradient.size() == n->values.size()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------- elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require(a->shape == b->shape, "add: shape mismatch");
  auto out = detail::make_node<T>(a->shape, {a, b}, [](DiffTensor<T>& n) {
    for (auto& p : n.parents)
      if (p->requires_grad) {
        auto& g = p->grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.gradient[i];
      }
  });
  for (std::size_t i = 0; i < out->size(); ++i) out->values[i] = a->values[i] + b->values[i];
  return out;
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  auto out = detail::make_node<T>(a->shape, {a}, [factor](DiffTensor<T>& n) {
    auto& g = n.parents[0]->grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * n.gradient[i];
  });
  for (std::size_t i = 0; i < out->size(); ++i) out->values[i] = factor * a->values[i];
  return out;
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  auto out = detail::make_node<T>(x->shape, {x}, [slope](DiffTensor<T>& n) {
    const auto& in = n.parents[0]->values;
    auto& g = n.parents[0]->grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += in[i] >= T(0) ? n.gradient[i] : slope * n.gradient[i];
  });
  for (std::size_t i = 0; i < out->size(); ++i) {
    const T v = x->values[i];
    out->values[i] = v >= T(0) ? v : slope * v;
  }
  return out;
}

/// Channel concatenation of [Ca, H, W] and [Cb, H, W].
template <typename T>
Var<T> concat(const Var<T>& a, const Var<T>& b) {
  detail::require(a->shape.size() == 3 && b->shape.size() == 3 && a->shape[1] == b->shape[1] &&
                      a->shape[2] == b->shape[2],
                  "concat: spatial shapes differ");
  const std::size_t na = a->size();
  auto out = detail::make_node<T>({a->shape[0] + b->shape[0], a->shape[1], a->shape[2]}, {a, b},
                                  [na](DiffTensor<T>& n) {
                                    if (n.parents[0]->requires_grad) {
                                      auto& g = n.parents[0]->grad();
                                      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.gradient[i];
                                    }
                                    if (n.parents[1]->requires_grad) {
                                      auto& g = n.parents[1]->grad();
                                      for (std::size_t i = 0; i < g.size(); ++i)
                                        g[i] += n.gradient[na + i];
                                    }
                                  });
  std::copy(a->values.begin(), a->values.end(), out->values.begin());
  std::copy(b->values.begin(), b->values.end(), out->values.begin() + na);
  return out;
}

// ---------------------------------------------------------------- convolution

/// 2D convolution with zero "same" padding (K/2) and stride 1 or 2.
/// x: [Cin, H, W], w: [Cout, Cin, K, K], b: [Cout] -> [Cout, ceil(H/s), ceil(W/s)].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride) {
  detail::require(x->shape.size() == 3 && w->shape.size() == 4, "conv2d: bad ranks");
  detail::require(w->shape[1] == x->shape[0], "conv2d: input channel mismatch");
  detail::require(w->shape[2] == w->shape[3] && w->shape[2] % 2 == 1, "conv2d: kernel must be odd square");
  detail::require(b->size() == w->shape[0], "conv2d: bias size mismatch");
  detail::require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");

  const std::size_t cin = x->shape[0], h = x->shape[1], wd = x->shape[2];
  const std::size_t cout = w->shape[0], k = w->shape[2];
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t ho = (h + stride - 1) / stride, wo = (wd + stride - 1) / stride;
  const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(stride);

  // Output column range [lo, hi) for which the input column ox*s + kx - pad is valid.
  auto col_range = [=](std::ptrdiff_t kx, std::ptrdiff_t n_in, std::ptrdiff_t n_out) {
    const std::ptrdiff_t off = kx - pad;
    std::ptrdiff_t lo = off >= 0 ? 0 : (-off + s - 1) / s;
    std::ptrdiff_t hi = (n_in - 1 - off) >= 0 ? (n_in - 1 - off) / s + 1 : 0;
    hi = std::min(hi, n_out);
    return std::pair{lo, std::max(lo, hi)};
  };

  auto backward = [=](DiffTensor<T>& n) {
    const auto& xv = n.parents[0]->values;
    const auto& wv = n.parents[1]->values;
    const auto& go = n.gradient;
    const bool gx = n.parents[0]->requires_grad;
    const bool gw = n.parents[1]->requires_grad;
    const bool gb = n.parents[2]->requires_grad;
    if (gb) {
      auto& bg = n.parents[2]->grad();
      for (std::size_t oc = 0; oc < cout; ++oc) {
        double acc = 0.0;
        const T* g = &go[oc * ho * wo];
        for (std::size_t i = 0; i < ho * wo; ++i) acc += g[i];
        bg[oc] += static_cast<T>(acc);
      }
    }
    std::vector<T>* xg = gx ? &n.parents[0]->grad() : nullptr;
    std::vector<T>* wg = gw ? &n.parents[1]->grad() : nullptr;
    for (std::size_t oc = 0; oc < cout; ++oc)
      for (std::size_t ic = 0; ic < cin; ++ic)
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::size_t widx = ((oc * cin + ic) * k + ky) * k + kx;
            const T wval = wv[widx];
            const auto [xlo, xhi] = col_range(std::ptrdiff_t(kx), std::ptrdiff_t(wd), std::ptrdiff_t(wo));
            const auto [ylo, yhi] = col_range(std::ptrdiff_t(ky), std::ptrdiff_t(h), std::ptrdiff_t(ho));
            double wacc = 0.0;
            for (std::ptrdiff_t oy = ylo; oy < yhi; ++oy) {
              const std::ptrdiff_t iy = oy * s + std::ptrdiff_t(ky) - pad;
              const T* g = &go[(oc * ho + oy) * wo];
              const std::size_t xrow = (ic * h + iy) * wd;
              const std::ptrdiff_t off = std::ptrdiff_t(kx) - pad;
              if (wg) {
                T racc = T(0);
                if (s == 1) {
                  const T* xin = &xv[xrow + off];
                  for (std::ptrdiff_t ox = xlo; ox < xhi; ++ox) racc += g[ox] * xin[ox];
                } else {
                  for (std::ptrdiff_t ox = xlo; ox < xhi; ++ox) racc += g[ox] * xv[xrow + ox * s + off];
                }
                wacc += racc;
              }
              if (xg) {
                T* xo = &(*xg)[xrow];
                if (s == 1) {
                  T* xin = xo + off;
                  for (std::ptrdiff_t ox = xlo; ox < xhi; ++ox) xin[ox] += wval * g[ox];
                } else {
                  for (std::ptrdiff_t ox = xlo; ox < xhi; ++ox) xo[ox * s + off] += wval * g[ox];
                }
              }
            }
            if (wg) (*wg)[widx] += static_cast<T>(wacc);
          }
  };

  auto out = detail::make_node<T>({cout, ho, wo}, {x, w, b}, backward);
  auto& ov = out->values;
  const auto& xv = x->values;
  const auto& wv = w->values;
  for (std::size_t oc = 0; oc < cout; ++oc) {
    T* o = &ov[oc * ho * wo];
    std::fill(o, o + ho * wo, b->values[oc]);
    for (std::size_t ic = 0; ic < cin; ++ic)
      for (std::size_t ky = 0; ky < k; ++ky) {
        const auto [ylo, yhi] = col_range(std::ptrdiff_t(ky), std::ptrdiff_t(h), std::ptrdiff_t(ho));
        for (std::size_t kx = 0; kx < k; ++kx) {
          const T wval = wv[((oc * cin + ic) * k + ky) * k + kx];
          const auto [xlo, xhi] = col_range(std::ptrdiff_t(kx), std::ptrdiff_t(wd), std::ptrdiff_t(wo));
          const std::ptrdiff_t off = std::ptrdiff_t(kx) - pad;
          for (std::ptrdiff_t oy = ylo; oy < yhi; ++oy) {
            const std::ptrdiff_t iy = oy * s + std::ptrdiff_t(ky) - pad;
            T* orow = o + oy * wo;
            const T* xrow = &xv[(ic * h + iy) * wd];
            if (s == 1) {
              const T* xin = xrow + off;
              for (std::ptrdiff_t ox = xlo; ox < xhi; ++ox) orow[ox] += wval * xin[ox];
            } else {
              for (std::ptrdiff_t ox = xlo; ox < xhi; ++ox) orow[ox] += wval * xrow[ox * s + off];
            }
          }
        }
      }
  }
  return out;
}

// ---------------------------------------------------------------- resampling

namespace detail {

struct LinearTap {
  std::size_t lo, hi;
  double t;
};

// Corner-aligned taps mapping n_out samples onto n_in samples.
inline std::vector<LinearTap> corner_taps(std::size_t n_in, std::size_t n_out) {
  std::vector<LinearTap> taps(n_out);
  for (std::size_t j = 0; j < n_out; ++j) {
    const double pos = (n_in > 1 && n_out > 1) ? double(j) * double(n_in - 1) / double(n_out - 1) : 0.0;
    std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    if (n_in > 1 && lo >= n_in - 1) lo = n_in - 2;
    if (n_in == 1) lo = 0;
    taps[j] = {lo, n_in > 1 ? lo + 1 : lo, pos - double(lo)};
  }
  return taps;
}

}  // namespace detail

/// Corner-aligned bilinear resize of [C, H, W] to [C, H2, W2].
template <typename T>
Var<T> resize_linear(const Var<T>& x, std::size_t h2, std::size_t w2) {
  detail::require(x->shape.size() == 3, "resize_linear: expected [C, H, W]");
  const std::size_t c = x->shape[0], h = x->shape[1], w = x->shape[2];
  const auto ty = detail::corner_taps(h, h2);
  const auto tx = detail::corner_taps(w, w2);
  auto out = detail::make_node<T>({c, h2, w2}, {x}, [=](DiffTensor<T>& n) {
    auto& g = n.parents[0]->grad();
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h2; ++y)
        for (std::size_t xx = 0; xx < w2; ++xx) {
          const T go = n.gradient[(ch * h2 + y) * w2 + xx];
          const T wy = T(ty[y].t), wx = T(tx[xx].t);
          T* base = &g[ch * h * w];
          base[ty[y].lo * w + tx[xx].lo] += (T(1) - wy) * (T(1) - wx) * go;
          base[ty[y].lo * w + tx[xx].hi] += (T(1) - wy) * wx * go;
          base[ty[y].hi * w + tx[xx].lo] += wy * (T(1) - wx) * go;
          base[ty[y].hi * w + tx[xx].hi] += wy * wx * go;
        }
  });
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* base = &x->values[ch * h * w];
    for (std::size_t y = 0; y < h2; ++y)
      for (std::size_t xx = 0; xx < w2; ++xx) {
        const T wy = T(ty[y].t), wx = T(tx[xx].t);
        out->values[(ch * h2 + y) * w2 + xx] =
            (T(1) - wy) * ((T(1) - wx) * base[ty[y].lo * w + tx[xx].lo] + wx * base[ty[y].lo * w + tx[xx].hi]) +
            wy * ((T(1) - wx) * base[ty[y].hi * w + tx[xx].lo] + wx * base[ty[y].hi * w + tx[xx].hi]);
      }
  }
  return out;
}

/// Bilinear warp of src [C, H, W] by displacement [2, H, W]: out(p) = src(p + u(p)),
/// with zero outside the grid. Differentiable in both arguments.
template <typename T>
Var<T> warp(const Var<T>& src, const Var<T>& disp) {
  detail::require(src->shape.size() == 3 && disp->shape.size() == 3 && disp->shape[0] == 2 &&
                      src->shape[1] == disp->shape[1] && src->shape[2] == disp->shape[2],
                  "warp: expected src [C,H,W] and displacement [2,H,W]");
  const std::size_t c = src->shape[0], h = src->shape[1], w = src->shape[2];
  const std::size_t plane = h * w;

  struct Sample {
    std::ptrdiff_t y0, x0;
    T ty, tx;
  };
  auto locate = [=](const std::vector<T>& d, std::size_t y, std::size_t x) {
    const T py = T(y) + d[y * w + x];
    const T px = T(x) + d[plane + y * w + x];
    const T fy = std::floor(py), fx = std::floor(px);
    return Sample{static_cast<std::ptrdiff_t>(fy), static_cast<std::ptrdiff_t>(fx), py - fy, px - fx};
  };
  auto fetch = [=](const T* img, std::ptrdiff_t y, std::ptrdiff_t x) -> T {
    if (y < 0 || x < 0 || y >= std::ptrdiff_t(h) || x >= std::ptrdiff_t(w)) return T(0);
    return img[y * w + x];
  };

  auto out = detail::make_node<T>(src->shape, {src, disp}, [=](DiffTensor<T>& n) {
    const auto& sv = n.parents[0]->values;
    const auto& dv = n.parents[1]->values;
    const bool gsrc = n.parents[0]->requires_grad;
    const bool gdisp = n.parents[1]->requires_grad;
    std::vector<T>* sg = gsrc ? &n.parents[0]->grad() : nullptr;
    std::vector<T>* dg = gdisp ? &n.parents[1]->grad() : nullptr;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const Sample s = locate(dv, y, x);
        T dy = T(0), dx = T(0);
        for (std::size_t ch = 0; ch < c; ++ch) {
          const T go = n.gradient[ch * plane + y * w + x];
          if (go == T(0)) continue;
          const T* img = &sv[ch * plane];
          if (dg) {
            const T v00 = fetch(img, s.y0, s.x0), v01 = fetch(img, s.y0, s.x0 + 1);
            const T v10 = fetch(img, s.y0 + 1, s.x0), v11 = fetch(img, s.y0 + 1, s.x0 + 1);
            dy += go * ((v10 - v00) * (T(1) - s.tx) + (v11 - v01) * s.tx);
            dx += go * ((v01 - v00) * (T(1) - s.ty) + (v11 - v10) * s.ty);
          }
          if (sg) {
            T* gimg = &(*sg)[ch * plane];
            const T ws[4] = {(T(1) - s.ty) * (T(1) - s.tx), (T(1) - s.ty) * s.tx, s.ty * (T(1) - s.tx),
                             s.ty * s.tx};
            const std::ptrdiff_t ys[4] = {s.y0, s.y0, s.y0 + 1, s.y0 + 1};
            const std::ptrdiff_t xs[4] = {s.x0, s.x0 + 1, s.x0, s.x0 + 1};
            for (int q = 0; q < 4; ++q)
              if (ys[q] >= 0 && xs[q] >= 0 && ys[q] < std::ptrdiff_t(h) && xs[q] < std::ptrdiff_t(w))
                gimg[ys[q] * w + xs[q]] += ws[q] * go;
          }
        }
        if (dg) {
          (*dg)[y * w + x] += dy;
          (*dg)[plane + y * w + x] += dx;
        }
      }
  });

  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const Sample s = locate(disp->values, y, x);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* img = &src->values[ch * plane];
        const T v00 = fetch(img, s.y0, s.x0), v01 = fetch(img, s.y0, s.x0 + 1);
        const T v10 = fetch(img, s.y0 + 1, s.x0), v11 = fetch(img, s.y0 + 1, s.x0 + 1);
        out->values[ch * plane + y * w + x] =
            (T(1) - s.ty) * ((T(1) - s.tx) * v00 + s.tx * v01) + s.ty * ((T(1) - s.tx) * v10 + s.tx * v11);
      }
    }
  return out;
}

/// Scaling and squaring on a [2, H, W] velocity.
template <typename T>
Var<T> integrate(const Var<T>& velocity, int steps) {
  Var<T> u = scale(velocity, static_cast<T>(std::ldexp(1.0, -steps)));
  for (int i = 0; i < steps; ++i) u = add(u, warp(u, u));
  return u;
}

// ---------------------------------------------------------------- losses

/// -(2/C) sum_c sum(a*b) / sum(a+b); zero-denominator channels contribute 0.
template <typename T>
Var<T> soft_dice(const Var<T>& a, const Var<T>& b) {
  detail::require(a->shape == b->shape && a->shape.size() >= 2, "soft_dice: shape mismatch");
  const std::size_t c = a->shape[0];
  const std::size_t per = a->size() / c;
  std::vector<double> inter(c, 0.0), sum(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < per; ++i) {
      const double av = a->values[ch * per + i], bv = b->values[ch * per + i];
      inter[ch] += av * bv;
      sum[ch] += av + bv;
    }
  auto out = detail::make_node<T>({1}, {a, b}, [=](DiffTensor<T>& n) {
    const double go = n.gradient[0];
    for (int side = 0; side < 2; ++side) {
      if (!n.parents[side]->requires_grad) continue;
      const auto& other = n.parents[1 - side]->values;
      auto& g = n.parents[side]->grad();
      for (std::size_t ch = 0; ch < c; ++ch) {
        if (sum[ch] == 0.0) continue;
        const double s2 = sum[ch] * sum[ch];
        const double k = -2.0 / double(c) * go;
        for (std::size_t i = 0; i < per; ++i)
          g[ch * per + i] += static_cast<T>(k * (double(other[ch * per + i]) * sum[ch] - inter[ch]) / s2);
      }
    }
  });
  double acc = 0.0;
  for (std::size_t ch = 0; ch < c; ++ch)
    if (sum[ch] != 0.0) acc += inter[ch] / sum[ch];
  out->values[0] = static_cast<T>(-2.0 / double(c) * acc);
  return out;
}

/// 1/2 mean of squared forward differences of a [2, H, W] displacement over
/// voxels, components and axes; backward difference on the last sample.
template <typename T>
Var<T> smoothness(const Var<T>& u) {
  detail::require(u->shape.size() == 3 && u->shape[0] == 2, "smoothness: expected [2, H, W]");
  const std::size_t h = u->shape[1], w = u->shape[2], plane = h * w;
  const double norm = double(plane) * 4.0;
  // Visit each (lo, hi) difference once per voxel that uses it.
  auto for_each_diff = [=](auto&& fn) {
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          if (h > 1) {
            const std::size_t ylo = y + 1 < h ? y : y - 1;
            fn(c * plane + ylo * w + x, c * plane + (ylo + 1) * w + x);
          }
          if (w > 1) {
            const std::size_t xlo = x + 1 < w ? x : x - 1;
            fn(c * plane + y * w + xlo, c * plane + y * w + xlo + 1);
          }
        }
  };
  auto out = detail::make_node<T>({1}, {u}, [=](DiffTensor<T>& n) {
    const auto& v = n.parents[0]->values;
    auto& g = n.parents[0]->grad();
    const double k = double(n.gradient[0]) / norm;
    for_each_diff([&](std::size_t lo, std::size_t hi) {
      const double d = double(v[hi]) - double(v[lo]);
      g[hi] += static_cast<T>(k * d);
      g[lo] -= static_cast<T>(k * d);
    });
  });
  double acc = 0.0;
  for_each_diff([&](std::size_t lo, std::size_t hi) {
    const double d = double(u->values[hi]) - double(u->values[lo]);
    acc += d * d;
  });
  out->values[0] = static_cast<T>(0.5 * acc / norm);
  return out;
}

/// Mean squared difference; differentiable in both arguments.
template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  detail::require(a->size() == b->size(), "mse: size mismatch");
  const double inv = 1.0 / double(a->size());
  auto out = detail::make_node<T>({1}, {a, b}, [inv](DiffTensor<T>& n) {
    const auto& av = n.parents[0]->values;
    const auto& bv = n.parents[1]->values;
    const double k = 2.0 * inv * double(n.gradient[0]);
    for (int side = 0; side < 2; ++side) {
      if (!n.parents[side]->requires_grad) continue;
      auto& g = n.parents[side]->grad();
      const double sign = side == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += static_cast<T>(sign * k * (double(av[i]) - double(bv[i])));
    }
  });
  double acc = 0.0;
  for (std::size_t i = 0; i < a->size(); ++i) {
    const double d = double(a->values[i]) - double(b->values[i]);
    acc += d * d;
  }
  out->values[0] = static_cast<T>(acc * inv);
  return out;
}

}  // namespace synthmorph::ad
