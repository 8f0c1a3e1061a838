#pragma once

// Network state, inference, the synthesis-driven training loop and the
// finite-difference gradient checker.

#include <cmath>
#include <functional>
#include <future>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "deform.hpp"
#include "imagesynth.hpp"
#include "loss.hpp"
#include "network.hpp"
#include "sampling.hpp"
#include "shapegen.hpp"

namespace synthmorph {

/// Raised when the loss or its gradient stops being finite and the
/// reduced-learning-rate retry does not recover.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LossKind { dice, sup_svf, sup_def, image_mse };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::dice: return "dice";
    case LossKind::sup_svf: return "sup_svf";
    case LossKind::sup_def: return "sup_def";
    case LossKind::image_mse: return "image_mse";
  }
  return "dice";
}

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "dice") return LossKind::dice;
  if (s == "sup_svf" || s == "sup-svf") return LossKind::sup_svf;
  if (s == "sup_def" || s == "sup-def") return LossKind::sup_def;
  if (s == "image_mse" || s == "image-mse") return LossKind::image_mse;
  throw std::invalid_argument("unknown loss kind '" + s + "'");
}

inline constexpr double kFallbackLearningRate = 1e-5;

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<std::vector<float>> first;
  std::vector<std::vector<float>> second;
};

struct TrainSettings {
  double learning_rate = 1e-4;
  double lambda_reg = 1.0;
  int int_steps = 5;
  long iteration = 0;
};

struct NetState {
  UNetConfig config;
  std::vector<NamedTensor> weights;
  AdamState adam;
  TrainSettings train;

  /// Weights and optimizer state before the most recent update, restored
  /// when the next step diverges.
  struct Snapshot {
    std::vector<NamedTensor> weights;
    AdamState adam;
  };
  std::optional<Snapshot> rollback;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += w.values.size();
    return n;
  }
};

inline NetState init_state(const UNetConfig& config, const RngStream& rng, TrainSettings settings = {}) {
  NetState s;
  s.config = config;
  s.weights = init_weights(config, rng);
  s.train = settings;
  for (const auto& w : s.weights) {
    s.adam.first.emplace_back(w.values.size(), 0.0f);
    s.adam.second.emplace_back(w.values.size(), 0.0f);
  }
  return s;
}

// ------------------------------------------------------------------ inference

inline GridMeta half_meta(const GridMeta& full) {
  Dims d(full.dims.size());
  std::vector<double> sp(full.dims.size());
  for (std::size_t a = 0; a < d.size(); ++a) {
    d[a] = full.dims[a] / 2;
    sp[a] = full.spacing[a] * 2.0;
  }
  return GridMeta(d, sp);
}

/// SVF at half the input resolution, in half-resolution voxels.
inline Svf forward(const NetState& state, const ScalarField& m, const ScalarField& f) {
  auto params = weight_vars<float>(state.weights, false);
  auto graph = run_unet<float>(state.config, params, pair_input<float>(m, f));
  const GridMeta half = half_meta(m.meta());
  return Svf{VectorField(from_channel_first(graph.velocity->values, graph.velocity->shape[0], half))};
}

/// Half-resolution SVF integrated, upsampled to the input grid, and scaled
/// by 2 to convert to full-resolution voxels.
inline DisplacementField predict_warp(const NetState& state, const ScalarField& m, const ScalarField& f) {
  const Svf v = forward(state, m, f);
  const DisplacementField u_half = integrate_svf(v, state.train.int_steps);
  return DisplacementField{scaled(VectorField(resample_linear(u_half.field, m.meta())), 2.0)};
}

/// Activations per layer, encoder to final layer, as channel-last fields.
inline std::vector<std::pair<std::string, ScalarField>> layer_activations(const NetState& state,
                                                                          const ScalarField& m,
                                                                          const ScalarField& f) {
  auto params = weight_vars<float>(state.weights, false);
  auto graph = run_unet<float>(state.config, params, pair_input<float>(m, f));
  std::vector<std::pair<std::string, ScalarField>> out;
  const auto& spacing = m.meta().spacing;
  for (const auto& [name, var] : graph.activations) {
    const auto& sh = var->shape;
    const double sy = spacing[0] * double(m.dims()[0]) / double(sh[1]);
    const double sx = spacing[1] * double(m.dims()[1]) / double(sh[2]);
    out.emplace_back(name, from_channel_first(var->values, sh[0], GridMeta({sh[1], sh[2]}, {sy, sx})));
  }
  return out;
}

// ------------------------------------------------------------------ training data

struct TrainingSample {
  ShapePair pair;
  ScalarField m;
  ScalarField f;
};

inline std::vector<Label> training_labels(const GenParams& params) {
  std::vector<Label> labels(static_cast<std::size_t>(params.J));
  for (int j = 0; j < params.J; ++j) labels[j] = j + 1;
  return labels;
}

/// One synthetic registration pair. Supervised kinds use the undeformed
/// source map as moving side so that the net warp is known.
inline TrainingSample synthesize_sample(const RngStream& rng, const GenParams& params, LossKind kind) {
  TrainingSample s;
  const LabelMap source = generate_shape_labels(rng.split(0), params);
  s.pair = (kind == LossKind::sup_svf || kind == LossKind::sup_def) ? supervised_pair(rng.split(1), source, params)
                                                                    : pair_from_single_map(rng.split(1), source, params);
  RngStream ms = rng.split(3), fs = rng.split(4);
  s.m = synthesize_image(ms, s.pair.s_m, params).image;
  s.f = synthesize_image(fs, s.pair.s_f, params).image;
  return s;
}

template <typename T>
struct LossGraph {
  ad::Var<T> total;
  ad::Var<T> data_term;
  ad::Var<T> reg_term;  // null for supervised kinds
  ad::Var<T> displacement;
};

/// Loss graph for one sample. For supervised kinds data_term is the field
/// MSE and no regularizer is added.
template <typename T>
LossGraph<T> build_loss(const UNetConfig& config, const std::vector<ad::Var<T>>& params,
                        const TrainingSample& sample, LossKind kind, double lambda_reg, int int_steps,
                        std::span<const Label> labels) {
  const auto& dims = sample.m.dims();
  const std::size_t h = dims[0], w = dims[1];
  auto graph = run_unet<T>(config, params, pair_input<T>(sample.m, sample.f));
  auto u_half = ad::integrate(graph.velocity, int_steps);
  auto u_full = ad::scale(ad::resize_linear(u_half, h, w), T(2));

  LossGraph<T> out;
  out.displacement = u_full;
  switch (kind) {
    case LossKind::dice: {
      auto moving = ad::constant<T>({labels.size(), h, w}, to_channel_first<T>(one_hot(sample.pair.s_m, labels)));
      auto fixed = ad::constant<T>({labels.size(), h, w}, to_channel_first<T>(one_hot(sample.pair.s_f, labels)));
      out.data_term = ad::soft_dice(ad::warp(moving, u_full), fixed);
      break;
    }
    case LossKind::image_mse: {
      auto moving = ad::constant<T>({1, h, w}, to_channel_first<T>(sample.m));
      auto fixed = ad::constant<T>({1, h, w}, to_channel_first<T>(sample.f));
      out.data_term = ad::mse(ad::warp(moving, u_full), fixed);
      break;
    }
    case LossKind::sup_svf: {
      auto v_full = ad::scale(ad::resize_linear(graph.velocity, h, w), T(2));
      auto target = ad::constant<T>({2, h, w}, to_channel_first<T>(sample.pair.truth_v_f.field));
      out.data_term = ad::mse(v_full, target);
      out.total = out.data_term;
      return out;
    }
    case LossKind::sup_def: {
      if (!sample.pair.truth_u_net) throw std::invalid_argument("sup_def needs a known net warp");
      auto target = ad::constant<T>({2, h, w}, to_channel_first<T>(sample.pair.truth_u_net->field));
      out.data_term = ad::mse(u_full, target);
      out.total = out.data_term;
      return out;
    }
  }
  out.reg_term = ad::smoothness(u_full);
  out.total = ad::add(out.data_term, ad::scale(out.reg_term, static_cast<T>(lambda_reg)));
  return out;
}

namespace detail {

struct StepGradients {
  LossReport report;
  std::vector<std::vector<float>> grads;
  bool finite = true;
};

inline StepGradients evaluate_step(const NetState& state, const TrainingSample& sample, LossKind kind,
                                   std::span<const Label> labels) {
  auto params = weight_vars<float>(state.weights, true);
  auto g = build_loss<float>(state.config, params, sample, kind, state.train.lambda_reg, state.train.int_steps, labels);
  StepGradients out;
  const double reg = g.reg_term ? double(g.reg_term->item()) : 0.0;
  const double lambda = g.reg_term ? state.train.lambda_reg : 0.0;
  out.report = LossReport{double(g.data_term->item()), reg, double(g.total->item()), lambda};
  out.finite = std::isfinite(out.report.total);
  if (!out.finite) return out;
  ad::backward(g.total);
  for (auto& p : params) {
    if (p->gradient.size() != p->values.size()) p->gradient.assign(p->values.size(), 0.0f);
    for (float v : p->gradient)
      if (!std::isfinite(v)) out.finite = false;
    out.grads.push_back(std::move(p->gradient));
  }
  return out;
}

inline void adam_update(NetState& state, const std::vector<std::vector<float>>& grads) {
  AdamState& a = state.adam;
  ++a.step;
  const double lr = state.train.learning_rate;
  const double c1 = 1.0 - std::pow(a.beta1, double(a.step));
  const double c2 = 1.0 - std::pow(a.beta2, double(a.step));
  for (std::size_t t = 0; t < state.weights.size(); ++t) {
    auto& w = state.weights[t].values;
    auto& m = a.first[t];
    auto& v = a.second[t];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = grads[t][i];
      m[i] = static_cast<float>(a.beta1 * m[i] + (1.0 - a.beta1) * g);
      v[i] = static_cast<float>(a.beta2 * v[i] + (1.0 - a.beta2) * g * g);
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] = static_cast<float>(w[i] - lr * mhat / (std::sqrt(vhat) + a.epsilon));
    }
  }
}

}  // namespace detail

/// Forward, backward and one Adam update on a single pair. A non-finite loss
/// or gradient drops the learning rate to 1e-5, restores the pre-update
/// snapshot if one exists, and retries once before raising DivergenceError.
inline LossReport train_step(NetState& state, const TrainingSample& sample, LossKind kind,
                             std::span<const Label> labels) {
  auto step = detail::evaluate_step(state, sample, kind, labels);
  if (!step.finite) {
    if (state.train.learning_rate <= kFallbackLearningRate)
      throw DivergenceError("training diverged at the fallback learning rate");
    state.train.learning_rate = kFallbackLearningRate;
    if (state.rollback) {
      state.weights = state.rollback->weights;
      state.adam = state.rollback->adam;
    }
    step = detail::evaluate_step(state, sample, kind, labels);
    if (!step.finite) throw DivergenceError("training diverged after lowering the learning rate");
  }
  state.rollback = NetState::Snapshot{state.weights, state.adam};
  detail::adam_update(state, step.grads);
  ++state.train.iteration;
  return step.report;
}

struct TraceRow {
  long iteration = 0;
  double dice_term = 0.0;
  double reg_term = 0.0;
  double total = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  NetState state;
  std::vector<TraceRow> trace;
};

/// Stream offsets: iteration i draws its pair from rng.split(i); weight
/// initialization uses a separate reserved child.
inline constexpr std::uint64_t kInitStream = 0xFFFF'FFFF'0000'0001ULL;

/// Per-iteration callback for progress reporting.
using TrainCallback = std::function<void(const TraceRow&)>;

/// Synthesizes a fresh pair every iteration and takes one train_step on it.
/// Pairs are produced one iteration ahead on a worker thread; each pair
/// depends only on its own child stream, so results do not depend on timing.
inline TrainResult train(const RngStream& rng, const GenParams& params, const UNetConfig& config,
                         long iterations, LossKind kind, TrainSettings settings = {},
                         const TrainCallback& on_step = {}) {
  params.validate();
  if (params.dims.size() != 2) throw std::invalid_argument("train: only 2D grids are supported");
  if (iterations < 0) throw std::invalid_argument("train: negative iteration count");
  TrainResult result;
  result.state = init_state(config, rng.split(kInitStream), settings);
  const auto labels = training_labels(params);
  auto produce = [&rng, &params, kind](long i) {
    return synthesize_sample(rng.split(static_cast<std::uint64_t>(i)), params, kind);
  };
  std::future<TrainingSample> next;
  if (iterations > 0) next = std::async(std::launch::async, produce, 0L);
  for (long i = 0; i < iterations; ++i) {
    TrainingSample sample = next.get();
    if (i + 1 < iterations) next = std::async(std::launch::async, produce, i + 1);
    const LossReport r = train_step(result.state, sample, kind, labels);
    TraceRow row{i, r.dice_term, r.reg_term, r.total, result.state.train.learning_rate};
    result.trace.push_back(row);
    if (on_step) on_step(row);
  }
  return result;
}

// ------------------------------------------------------------------ gradient check

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t compared = 0;
  std::size_t skipped_zero = 0;
};

/// Compares backpropagated gradients computed in precision T against
/// central differences of the loss evaluated in double precision, on
/// `count` weights drawn at random. Pairs where both magnitudes are below
/// 1e-8 are treated as zero and excluded from the relative comparison.
template <typename T>
GradCheckReport grad_check(const NetState& state, const TrainingSample& sample, LossKind kind, double eps,
                           std::size_t count, RngStream rng, std::span<const Label> labels) {
  auto params = weight_vars<T>(state.weights, true);
  auto g = build_loss<T>(state.config, params, sample, kind, state.train.lambda_reg, state.train.int_steps, labels);
  ad::backward(g.total);

  std::vector<std::vector<double>> base;
  for (const auto& w : state.weights) base.emplace_back(w.values.begin(), w.values.end());
  auto loss_at = [&](std::size_t t, std::size_t i, double value) {
    std::vector<ad::Var<double>> p;
    for (std::size_t k = 0; k < base.size(); ++k) {
      std::vector<double> v = base[k];
      if (k == t) v[i] = value;
      p.push_back(ad::constant<double>(state.weights[k].shape, std::move(v)));
    }
    return build_loss<double>(state.config, p, sample, kind, state.train.lambda_reg, state.train.int_steps, labels)
        .total->item();
  };

  std::size_t total = 0;
  for (const auto& w : state.weights) total += w.values.size();
  GradCheckReport report;
  for (std::size_t n = 0; n < count; ++n) {
    std::size_t flat = static_cast<std::size_t>(rng.next_u64() % total);
    std::size_t t = 0;
    while (flat >= base[t].size()) flat -= base[t++].size();
    const double w0 = base[t][flat];
    const double numeric = (loss_at(t, flat, w0 + eps) - loss_at(t, flat, w0 - eps)) / (2.0 * eps);
    const auto& grad = params[t]->gradient;
    const double analytic = grad.empty() ? 0.0 : double(grad[flat]);
    const double mag = std::max(std::abs(analytic), std::abs(numeric));
    if (mag < 1e-8) {
      ++report.skipped_zero;
      continue;
    }
    report.max_rel_error = std::max(report.max_rel_error, std::abs(analytic - numeric) / mag);
    ++report.compared;
  }
  return report;
}

}  // namespace synthmorph
