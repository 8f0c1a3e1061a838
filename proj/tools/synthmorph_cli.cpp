// Command-line driver: synthesis, training, registration and evaluation.
//
// Exit codes: 0 success, 2 argument error, 3 I/O error, 4 numerical divergence.

#include <cmath>
#include <algorithm>
#include <iterator>
#include <set>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "png_writer.hpp"
#include "synthmorph/io.hpp"
#include "synthmorph/metrics.hpp"
#include "synthmorph/synthmorph.hpp"

namespace fs = std::filesystem;
using namespace synthmorph;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitDivergence = 4;

// Sub-stream ids derived from the single --seed.
constexpr std::uint64_t kLabelStream = 0;
constexpr std::uint64_t kPairStream = 1;
constexpr std::uint64_t kMovingImageStream = 3;
constexpr std::uint64_t kFixedImageStream = 4;
constexpr std::uint64_t kLutStream = 5;

struct GenOptions {
  std::string params_file;
  std::vector<std::size_t> dims;
  std::optional<int> labels;
};

void add_gen_options(CLI::App* cmd, GenOptions& g) {
  cmd->add_option("--params", g.params_file, "GenParams JSON; omitted keys take the defaults")
      ;
  cmd->add_option("--dims", g.dims, "Grid dims, e.g. 64,64")->delimiter(',');
  cmd->add_option("--labels", g.labels, "Number of shape labels J");
}

/// Defaults, then the params file, then explicit flags.
GenParams resolve_params(const GenOptions& g) {
  GenParams p = default_params({64, 64});
  if (!g.params_file.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(g.params_file));
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(std::string("--params: ") + e.what());
    }
    p = params_from_json(j, p);
  }
  if (!g.dims.empty()) p.dims = g.dims;
  if (g.labels) p.J = *g.labels;
  p.validate();
  return p;
}

void print_histogram(const LabelMap& s) {
  std::map<Label, std::size_t> counts;
  for (Label l : s.data()) ++counts[l];
  std::cout << "label,count\n";
  for (const auto& [label, count] : counts) std::cout << label << ',' << count << '\n';
}

std::vector<Label> parse_label_list(const std::vector<int>& given, const LabelMap& a, const LabelMap& b) {
  std::vector<Label> labels;
  if (!given.empty()) {
    labels.assign(given.begin(), given.end());
  } else {
    std::set_union(a.label_set().begin(), a.label_set().end(), b.label_set().begin(), b.label_set().end(),
                   std::back_inserter(labels));
    std::erase(labels, 0);
  }
  if (labels.empty()) throw std::invalid_argument("no labels to evaluate");
  return labels;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthesis-driven contrast-agnostic registration toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  GenOptions gen;

  // gen-labels
  std::string out_file;
  auto* gen_labels = app.add_subcommand("gen-labels", "Generate a random shape label map");
  gen_labels->add_option("--seed", seed, "Random seed")->required();
  add_gen_options(gen_labels, gen);
  gen_labels->add_option("--out", out_file, "Output SMVF labels file")->required();

  // gen-pair
  std::string out_dir;
  std::vector<std::string> sources;
  bool supervised = false;
  auto* gen_pair = app.add_subcommand("gen-pair", "Generate moving/fixed label maps, images and truth fields");
  gen_pair->add_option("--seed", seed, "Random seed")->required();
  add_gen_options(gen_pair, gen);
  gen_pair->add_option("--source", sources, "One or two source label maps (default: random shapes)")
      
      ->expected(0, 2);
  gen_pair->add_flag("--supervised", supervised, "Use the source map as moving side so the net warp is known");
  gen_pair->add_option("--out-dir", out_dir, "Output directory")->required();

  // synth-image
  std::string in_file;
  double lut_sigma = -1.0;
  auto* synth = app.add_subcommand("synth-image", "Synthesize an image from a label map");
  synth->add_option("--seed", seed, "Random seed")->required();
  add_gen_options(synth, gen);
  synth->add_option("--labels-in", in_file, "Input SMVF labels")->required();
  synth->add_option("--lut-sigma", lut_sigma, "Also apply a smoothed random lookup table with this SD");
  synth->add_option("--out", out_file, "Output SMVF image")->required();

  // train
  long iterations = 0;
  std::string loss_name = "dice", trace_file;
  UNetConfig net;
  TrainSettings settings;
  std::optional<double> lambda_flag;
  auto* train_cmd = app.add_subcommand("train", "Train the registration network on synthetic pairs");
  train_cmd->add_option("--seed", seed, "Random seed")->required();
  add_gen_options(train_cmd, gen);
  train_cmd->add_option("--iterations", iterations, "Training iterations")->required()->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--loss", loss_name, "dice | sup_svf | sup_def | image_mse");
  train_cmd->add_option("--width", net.width, "Filters per convolution");
  train_cmd->add_option("--levels", net.levels, "Encoder depth");
  train_cmd->add_option("--lr", settings.learning_rate, "Initial learning rate");
  train_cmd->add_option("--lambda", lambda_flag, "Regularization weight (default: params lambda_reg)");
  train_cmd->add_option("--out", out_file, "Output SMWT weights")->required();
  train_cmd->add_option("--trace", trace_file, "Output loss trace CSV");

  // register
  std::string weights_file, moving_file, fixed_file, moved_image_file, moving_labels_file, moved_labels_file;
  auto* reg = app.add_subcommand("register", "Predict the warp between two images");
  reg->add_option("--weights", weights_file, "SMWT weights")->required();
  reg->add_option("--moving", moving_file, "Moving SMVF image")->required();
  reg->add_option("--fixed", fixed_file, "Fixed SMVF image")->required();
  reg->add_option("--out", out_file, "Output SMVF displacement")->required();
  reg->add_option("--moved-image", moved_image_file, "Also write the warped moving image");
  reg->add_option("--moving-labels", moving_labels_file, "Moving label map to warp");
  reg->add_option("--moved-labels", moved_labels_file, "Output for the warped label map");

  // evaluate
  std::string a_file, b_file, warp_file, csv_file, json_file;
  std::vector<int> label_list;
  auto* eval = app.add_subcommand("evaluate", "Dice and surface distance between two label maps");
  eval->add_option("--a", a_file, "First SMVF label map (moving side when --warp is given)")
      ->required()
      ;
  eval->add_option("--b", b_file, "Second SMVF label map")->required();
  eval->add_option("--warp", warp_file, "Displacement applied to --a first");
  eval->add_option("--eval-labels", label_list, "Labels to score (default: all non-zero)")->delimiter(',');
  eval->add_option("--csv", csv_file, "Output CSV report");
  eval->add_option("--json", json_file, "Output JSON report");

  // jacobian
  std::string disp_file;
  auto* jac = app.add_subcommand("jacobian", "Jacobian determinant and folding fraction of a displacement");
  jac->add_option("--disp", disp_file, "SMVF displacement")->required();
  jac->add_option("--out", out_file, "Output SMVF determinant field");

  // export-png
  std::size_t slice_axis = 0, channel = 0;
  std::optional<std::size_t> slice_index;
  auto* png = app.add_subcommand("export-png", "Write a min-max windowed 8-bit grayscale slice");
  png->add_option("--in", in_file, "Input SMVF volume")->required();
  png->add_option("--out", out_file, "Output PNG")->required();
  png->add_option("--axis", slice_axis, "Slicing axis for 3D volumes");
  png->add_option("--slice", slice_index, "Slice index for 3D volumes (default: middle)");
  png->add_option("--channel", channel, "Channel to export");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    const RngStream root(seed);

    if (*gen_labels) {
      const GenParams p = resolve_params(gen);
      const LabelMap s = generate_shape_labels(root.split(kLabelStream), p);
      save_volume(out_file, s);
      print_histogram(s);
    } else if (*gen_pair) {
      const GenParams p = resolve_params(gen);
      std::vector<LabelMap> src;
      for (const auto& path : sources) src.push_back(load_labels(path));
      for (const auto& s : src)
        if (s.dims() != p.dims) throw std::invalid_argument("source label map dims differ from --dims/params");
      if (supervised && src.size() > 1) throw std::invalid_argument("--supervised takes a single source");
      if (src.empty()) src.push_back(generate_shape_labels(root.split(kLabelStream), p));
      ShapePair pair = src.size() == 2 ? pair_from_two_maps(root.split(kPairStream), src[0], src[1], p)
                       : supervised    ? supervised_pair(root.split(kPairStream), src[0], p)
                                       : pair_from_single_map(root.split(kPairStream), src[0], p);
      RngStream ms = root.split(kMovingImageStream), fs_ = root.split(kFixedImageStream);
      const ScalarField m = synthesize_image(ms, pair.s_m, p).image;
      const ScalarField f = synthesize_image(fs_, pair.s_f, p).image;
      fs::create_directories(out_dir);
      const fs::path dir(out_dir);
      save_volume((dir / "s_m.smvf").string(), pair.s_m);
      save_volume((dir / "s_f.smvf").string(), pair.s_f);
      save_volume((dir / "m.smvf").string(), m);
      save_volume((dir / "f.smvf").string(), f);
      save_volume((dir / "v_m.smvf").string(), pair.truth_v_m.field, VolumeKind::vector);
      save_volume((dir / "v_f.smvf").string(), pair.truth_v_f.field, VolumeKind::vector);
      if (pair.truth_u_net) save_volume((dir / "u_net.smvf").string(), pair.truth_u_net->field, VolumeKind::vector);
      std::cout << "wrote pair to " << out_dir << '\n';
    } else if (*synth) {
      const LabelMap s = load_labels(in_file);
      GenOptions g = gen;
      if (g.dims.empty()) g.dims = s.dims();
      const GenParams p = resolve_params(g);
      RngStream rng = root.split(kMovingImageStream);
      SynthRecord rec = synthesize_image(rng, s, p);
      ScalarField img = std::move(rec.image);
      if (lut_sigma >= 0.0) {
        RngStream lut_rng = root.split(kLutStream);
        img = lut_augment(lut_rng, img, lut_sigma);
      }
      save_volume(out_file, img);
      std::cout << "gamma," << format_real(rec.gamma) << "\nbias_sd," << format_real(rec.bias_sd) << '\n';
    } else if (*train_cmd) {
      const GenParams p = resolve_params(gen);
      const LossKind kind = parse_loss_kind(loss_name);
      settings.lambda_reg = lambda_flag.value_or(p.lambda_reg);
      settings.int_steps = p.int_steps;
      net.validate();
      const TrainResult r = train(root, p, net, iterations, kind, settings);
      save_weights(out_file, r.state);
      if (!trace_file.empty()) write_file(trace_file, trace_to_csv(r.trace));
      if (!r.trace.empty()) std::cout << "final_total," << format_real(r.trace.back().total) << '\n';
    } else if (*reg) {
      const NetState state = load_weights(weights_file);
      const ScalarField m = load_scalar(moving_file);
      const ScalarField f = load_scalar(fixed_file);
      const DisplacementField u = predict_warp(state, m, f);
      save_volume(out_file, u.field, VolumeKind::vector);
      if (!moved_image_file.empty()) save_volume(moved_image_file, warp_linear(m, u.field, 0.0f));
      if (!moving_labels_file.empty()) {
        if (moved_labels_file.empty()) throw std::invalid_argument("--moving-labels needs --moved-labels");
        save_volume(moved_labels_file, warp_nearest(load_labels(moving_labels_file), u.field, 0));
      }
    } else if (*eval) {
      LabelMap a = load_labels(a_file);
      const LabelMap b = load_labels(b_file);
      double folding = 0.0;
      if (!warp_file.empty()) {
        const DisplacementField u{load_vector(warp_file)};
        a = warp_nearest(a, u.field, 0);
        folding = folding_fraction(u);
      }
      const auto labels = parse_label_list(label_list, a, b);
      const MetricReport report = evaluate_maps(a, b, labels, folding);
      const std::string csv = to_csv(report);
      if (!csv_file.empty()) write_file(csv_file, csv);
      if (!json_file.empty()) write_file(json_file, to_json(report).dump(2) + "\n");
      std::cout << csv << "mean_dice," << format_real(report.mean_dice) << '\n';
    } else if (*jac) {
      const DisplacementField u{load_vector(disp_file)};
      const ScalarField det = jacobian_det(u);
      if (!out_file.empty()) save_volume(out_file, det);
      std::cout << "folding_fraction," << format_real(folding_fraction(u)) << "\nmean_det,"
                << format_real(mean_jacobian_det(u)) << '\n';
    } else if (*png) {
      const Volume vol = load_volume(in_file);
      ScalarField img = vol.kind == VolumeKind::labels
                            ? ScalarField(vol.labels.meta(), 1,
                                          std::vector<float>(vol.labels.data().begin(), vol.labels.data().end()))
                            : vol.field;
      if (channel >= img.channels()) throw std::invalid_argument("--channel out of range");
      img = img.channel(channel);
      const Dims& d = img.dims();
      std::size_t rows = 1, cols = d.back();
      std::vector<float> plane;
      if (img.rank() == 1) {
        plane.assign(img.data().begin(), img.data().end());
      } else if (img.rank() == 2) {
        rows = d[0];
        plane.assign(img.data().begin(), img.data().end());
      } else {
        if (slice_axis > 2) throw std::invalid_argument("--axis must be 0, 1 or 2");
        const std::size_t idx = slice_index.value_or(d[slice_axis] / 2);
        if (idx >= d[slice_axis]) throw std::invalid_argument("--slice out of range");
        std::vector<std::size_t> keep;
        for (std::size_t a = 0; a < 3; ++a)
          if (a != slice_axis) keep.push_back(a);
        rows = d[keep[0]];
        cols = d[keep[1]];
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) {
            std::size_t coord[3];
            coord[slice_axis] = idx;
            coord[keep[0]] = r;
            coord[keep[1]] = c;
            plane.push_back(img.at((coord[0] * d[1] + coord[1]) * d[2] + coord[2]));
          }
      }
      const ScalarField window = minmax_normalize(ScalarField(GridMeta({rows, cols}), 1, plane));
      std::vector<std::uint8_t> pixels(rows * cols);
      for (std::size_t i = 0; i < pixels.size(); ++i)
        pixels[i] = static_cast<std::uint8_t>(std::lround(double(window.at(i)) * 255.0));
      tools::write_gray_png(out_file, cols, rows, pixels);
    }
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitOk;
}
