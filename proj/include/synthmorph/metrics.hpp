#pragma once

// Evaluation metrics: hard Dice, mean symmetric surface distance and
// feature-variability RMSD.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grid.hpp"

namespace synthmorph {

struct DiceScore {
  double value = 0.0;
  /// Label absent from both maps; value is reported as 1.
  bool absent = false;
};

inline std::map<Label, DiceScore> hard_dice(const LabelMap& a, const LabelMap& b,
                                            std::span<const Label> labels) {
  if (!a.meta().same_grid(b.meta())) throw std::invalid_argument("hard_dice: grid mismatch");
  std::map<Label, std::size_t> index;
  for (std::size_t j = 0; j < labels.size(); ++j) index[labels[j]] = j;
  std::vector<std::size_t> count_a(labels.size()), count_b(labels.size()), both(labels.size());
  for (std::size_t v = 0; v < a.voxels(); ++v) {
    const auto ia = index.find(a.at(v));
    const auto ib = index.find(b.at(v));
    if (ia != index.end()) ++count_a[ia->second];
    if (ib != index.end()) ++count_b[ib->second];
    if (ia != index.end() && a.at(v) == b.at(v)) ++both[ia->second];
  }
  std::map<Label, DiceScore> out;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const std::size_t denom = count_a[j] + count_b[j];
    out[labels[j]] = denom == 0 ? DiceScore{1.0, true}
                                : DiceScore{2.0 * double(both[j]) / double(denom), false};
  }
  return out;
}

inline double mean_dice(const std::map<Label, DiceScore>& scores) {
  if (scores.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [label, score] : scores) sum += score.value;
  return sum / double(scores.size());
}

/// Voxel coordinates of the label's boundary: label voxels with a
/// face-neighbor of another label, or lying on the grid edge.
inline std::vector<std::array<std::ptrdiff_t, 3>> boundary_voxels(const LabelMap& s, Label label) {
  const Dims& dims = s.dims();
  const std::size_t rank = dims.size();
  const Dims stride = detail::strides(dims);
  std::vector<std::array<std::ptrdiff_t, 3>> out;
  std::vector<std::size_t> coord(rank, 0);
  std::size_t voxel = 0;
  do {
    if (s.at(voxel) == label) {
      bool edge = false;
      for (std::size_t a = 0; a < rank && !edge; ++a) {
        if (coord[a] == 0 || coord[a] + 1 == dims[a]) edge = true;
        else if (s.at(voxel - stride[a]) != label || s.at(voxel + stride[a]) != label) edge = true;
      }
      if (edge) {
        std::array<std::ptrdiff_t, 3> c{0, 0, 0};
        for (std::size_t a = 0; a < rank; ++a) c[a] = static_cast<std::ptrdiff_t>(coord[a]);
        out.push_back(c);
      }
    }
    ++voxel;
  } while (detail::next_coord(coord, dims));
  return out;
}

/// Mean symmetric surface distance in mm: the average of the two directed
/// mean nearest-boundary distances. Exhaustive nearest-neighbor search.
inline double mean_surface_distance(const LabelMap& a, const LabelMap& b, Label label,
                                    std::span<const double> spacing) {
  if (!a.meta().same_grid(b.meta()))
    throw std::invalid_argument("mean_surface_distance: grid mismatch");
  if (spacing.size() != a.rank())
    throw std::invalid_argument("mean_surface_distance: need one spacing per axis");
  const auto ba = boundary_voxels(a, label);
  const auto bb = boundary_voxels(b, label);
  if (ba.empty() || bb.empty())
    throw std::invalid_argument("mean_surface_distance: label " + std::to_string(label) +
                                " missing from a map");
  const std::size_t rank = a.rank();
  auto directed = [&](const auto& from, const auto& to) {
    double total = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < rank; ++k) {
          const double d = double(p[k] - q[k]) * spacing[k];
          d2 += d * d;
        }
        best = std::min(best, d2);
      }
      total += std::sqrt(best);
    }
    return total / double(from.size());
  };
  return 0.5 * (directed(ba, bb) + directed(bb, ba));
}

/// Root-mean-square difference to the reference per (other, channel),
/// averaged over channels then over others, divided by the reference RMS.
inline double feature_rmsd(const ScalarField& reference, std::span<const ScalarField> others) {
  if (others.empty()) throw std::invalid_argument("feature_rmsd: no comparison stacks");
  const std::size_t channels = reference.channels();
  const std::size_t voxels = reference.voxels();
  auto ref = reference.data();
  double ref_sq = 0.0;
  for (float v : ref) ref_sq += double(v) * double(v);
  const double ref_rms = std::sqrt(ref_sq / double(ref.size()));

  double over_others = 0.0;
  for (const auto& other : others) {
    if (!other.meta().same_grid(reference.meta()) || other.channels() != channels)
      throw std::invalid_argument("feature_rmsd: shape mismatch");
    auto o = other.data();
    std::vector<double> sq(channels, 0.0);
    for (std::size_t i = 0; i < o.size(); ++i) {
      const double d = double(o[i]) - double(ref[i]);
      sq[i % channels] += d * d;
    }
    double over_channels = 0.0;
    for (double s : sq) over_channels += std::sqrt(s / double(voxels));
    over_others += over_channels / double(channels);
  }
  const double rmsd = over_others / double(others.size());
  if (ref_rms == 0.0) return rmsd == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return rmsd / ref_rms;
}

struct MetricReport {
  std::map<Label, DiceScore> per_label_dice;
  double mean_dice = 0.0;
  /// Missing when the label is absent from either map.
  std::map<Label, std::optional<double>> per_label_msd;
  double folding_fraction = 0.0;
};

inline MetricReport evaluate_maps(const LabelMap& a, const LabelMap& b,
                                  std::span<const Label> labels, double folding = 0.0) {
  MetricReport report;
  report.per_label_dice = hard_dice(a, b, labels);
  report.mean_dice = mean_dice(report.per_label_dice);
  const auto& spacing = a.meta().spacing;
  for (Label l : labels) {
    const auto& sa = a.label_set();
    const auto& sb = b.label_set();
    const bool in_a = std::binary_search(sa.begin(), sa.end(), l);
    const bool in_b = std::binary_search(sb.begin(), sb.end(), l);
    report.per_label_msd[l] = (in_a && in_b)
                                  ? std::optional<double>(mean_surface_distance(a, b, l, spacing))
                                  : std::nullopt;
  }
  report.folding_fraction = folding;
  return report;
}

namespace detail {
inline std::string format_number(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}
}  // namespace detail

/// One row per label: label,dice,msd_mm,absent_flag. An undefined MSD is
/// written as an empty cell.
inline std::string to_csv(const MetricReport& r) {
  std::string out = "label,dice,msd_mm,absent_flag\n";
  for (const auto& [label, dice] : r.per_label_dice) {
    out += std::to_string(label) + ',' + detail::format_number(dice.value) + ',';
    const auto it = r.per_label_msd.find(label);
    if (it != r.per_label_msd.end() && it->second) out += detail::format_number(*it->second);
    out += ',';
    out += dice.absent ? "1" : "0";
    out += '\n';
  }
  return out;
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& [label, dice] : r.per_label_dice) {
    nlohmann::json row{{"label", label}, {"dice", dice.value}, {"absent_flag", dice.absent}};
    const auto it = r.per_label_msd.find(label);
    row["msd_mm"] = (it != r.per_label_msd.end() && it->second) ? nlohmann::json(*it->second)
                                                                 : nlohmann::json(nullptr);
    labels.push_back(row);
  }
  return {{"labels", labels}, {"mean_dice", r.mean_dice}, {"folding_fraction", r.folding_fraction}};
}

}  // namespace synthmorph
