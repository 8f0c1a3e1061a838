#pragma once

// File formats.
//
// SMVF volume:  "SMVF" | u32 LE header length | UTF-8 JSON header
//               {dims, channels, dtype: "f32"|"i32", spacing, kind:
//               "scalar"|"labels"|"vector"} | little-endian payload,
//               row-major, last axis fastest, channel-last.
// SMWT weights: "SMWT" | u32 LE manifest length | UTF-8 JSON manifest
//               {tensors: [{name, shape, dtype: "f32"}...], config, train}
//               | concatenated little-endian f32 tensor data in manifest order.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grid.hpp"
#include "trainer.hpp"

namespace synthmorph {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents, as opposed to a failure to read or write.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

namespace io_detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

template <typename Word>
void put_words(std::string& out, std::span<const Word> words) {
  static_assert(sizeof(Word) == 4);
  for (Word w : words) put_u32(out, std::bit_cast<std::uint32_t>(w));
}

template <typename Word>
std::vector<Word> get_words(const std::string& in, std::size_t pos, std::size_t count) {
  std::vector<Word> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = std::bit_cast<Word>(get_u32(in, pos + 4 * i));
  return out;
}

inline std::string frame(const char magic[4], const nlohmann::json& header) {
  const std::string text = header.dump();
  std::string out(magic, 4);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  return out;
}

/// Splits a framed buffer into its JSON header and the payload offset.
inline std::pair<nlohmann::json, std::size_t> unframe(const std::string& bytes, const char magic[4]) {
  if (bytes.size() < 8 || bytes.compare(0, 4, magic, 4) != 0)
    throw FormatError(std::string("not a ") + std::string(magic, 4) + " file");
  const std::uint32_t len = get_u32(bytes, 4);
  if (bytes.size() < 8 + std::size_t(len)) throw FormatError("truncated header");
  try {
    return {nlohmann::json::parse(bytes.substr(8, len)), 8 + std::size_t(len)};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad JSON header: ") + e.what());
  }
}

}  // namespace io_detail

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

// ------------------------------------------------------------------ SMVF

enum class VolumeKind { scalar, labels, vector };

inline const char* to_string(VolumeKind k) {
  switch (k) {
    case VolumeKind::scalar: return "scalar";
    case VolumeKind::labels: return "labels";
    case VolumeKind::vector: return "vector";
  }
  return "scalar";
}

/// A decoded SMVF file. `field` is set for scalar and vector kinds,
/// `labels` for the labels kind.
struct Volume {
  VolumeKind kind = VolumeKind::scalar;
  ScalarField field;
  LabelMap labels;
};

inline nlohmann::json volume_header(const GridMeta& meta, std::size_t channels, const char* dtype, VolumeKind kind) {
  return {{"dims", meta.dims}, {"channels", channels}, {"dtype", dtype}, {"spacing", meta.spacing},
          {"kind", to_string(kind)}};
}

inline std::string encode_smvf(const ScalarField& f, VolumeKind kind = VolumeKind::scalar) {
  if (kind == VolumeKind::labels) throw std::invalid_argument("encode_smvf: use the LabelMap overload");
  if (kind == VolumeKind::vector && f.channels() != f.rank())
    throw std::invalid_argument("encode_smvf: vector volumes need one channel per axis");
  std::string out = io_detail::frame("SMVF", volume_header(f.meta(), f.channels(), "f32", kind));
  io_detail::put_words<float>(out, f.data());
  return out;
}

inline std::string encode_smvf(const LabelMap& s) {
  std::string out = io_detail::frame("SMVF", volume_header(s.meta(), 1, "i32", VolumeKind::labels));
  io_detail::put_words<std::int32_t>(out, s.data());
  return out;
}

inline Volume decode_smvf(const std::string& bytes) {
  auto [h, pos] = io_detail::unframe(bytes, "SMVF");
  Volume vol;
  try {
    const auto dims = h.at("dims").get<Dims>();
    const auto spacing = h.at("spacing").get<std::vector<double>>();
    const auto channels = h.at("channels").get<std::size_t>();
    const auto dtype = h.at("dtype").get<std::string>();
    const auto kind = h.at("kind").get<std::string>();
    const GridMeta meta(dims, spacing);
    const std::size_t count = meta.voxels() * channels;
    if (bytes.size() != pos + 4 * count) throw FormatError("payload length does not match header");
    if (kind == "labels") {
      if (dtype != "i32" || channels != 1) throw FormatError("label volumes must be single-channel i32");
      vol.kind = VolumeKind::labels;
      vol.labels = LabelMap(meta, io_detail::get_words<std::int32_t>(bytes, pos, count));
    } else if (kind == "scalar" || kind == "vector") {
      if (dtype != "f32") throw FormatError("scalar and vector volumes must be f32");
      vol.kind = kind == "scalar" ? VolumeKind::scalar : VolumeKind::vector;
      vol.field = ScalarField(meta, channels, io_detail::get_words<float>(bytes, pos, count));
      if (vol.kind == VolumeKind::vector && channels != meta.rank())
        throw FormatError("vector volumes need one channel per axis");
    } else {
      throw FormatError("unknown volume kind '" + kind + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad SMVF header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("bad SMVF contents: ") + e.what());
  }
  return vol;
}

inline void save_volume(const std::string& path, const ScalarField& f, VolumeKind kind = VolumeKind::scalar) {
  write_file(path, encode_smvf(f, kind));
}
inline void save_volume(const std::string& path, const LabelMap& s) { write_file(path, encode_smvf(s)); }
inline Volume load_volume(const std::string& path) { return decode_smvf(read_file(path)); }

inline ScalarField load_scalar(const std::string& path) {
  Volume v = load_volume(path);
  if (v.kind == VolumeKind::labels) throw FormatError("'" + path + "' holds labels, expected an image");
  return std::move(v.field);
}

inline LabelMap load_labels(const std::string& path) {
  Volume v = load_volume(path);
  if (v.kind != VolumeKind::labels) throw FormatError("'" + path + "' does not hold labels");
  return std::move(v.labels);
}

inline VectorField load_vector(const std::string& path) {
  Volume v = load_volume(path);
  if (v.kind != VolumeKind::vector) throw FormatError("'" + path + "' does not hold a vector field");
  return VectorField(std::move(v.field));
}

// ------------------------------------------------------------------ SMWT

inline nlohmann::json to_json(const UNetConfig& c) {
  return {{"levels", c.levels}, {"width", c.width}, {"kernel", c.kernel},
          {"leaky_slope", c.leaky_slope}, {"final_channels", c.final_channels}};
}

inline UNetConfig config_from_json(const nlohmann::json& j) {
  UNetConfig c;
  c.levels = j.at("levels").get<int>();
  c.width = j.at("width").get<int>();
  c.kernel = j.at("kernel").get<int>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.final_channels = j.at("final_channels").get<int>();
  c.validate();
  return c;
}

inline std::string encode_smwt(const NetState& state) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& w : state.weights) tensors.push_back({{"name", w.name}, {"shape", w.shape}, {"dtype", "f32"}});
  nlohmann::json manifest{{"tensors", tensors},
                          {"config", to_json(state.config)},
                          {"train",
                           {{"learning_rate", state.train.learning_rate},
                            {"lambda_reg", state.train.lambda_reg},
                            {"int_steps", state.train.int_steps},
                            {"iteration", state.train.iteration}}}};
  std::string out = io_detail::frame("SMWT", manifest);
  for (const auto& w : state.weights) io_detail::put_words<float>(out, w.values);
  return out;
}

/// Restores weights, architecture and training settings. Optimizer moments
/// are not stored and start from zero.
inline NetState decode_smwt(const std::string& bytes) {
  auto [m, pos] = io_detail::unframe(bytes, "SMWT");
  NetState state;
  try {
    state.config = m.contains("config") ? config_from_json(m.at("config")) : UNetConfig{};
    if (m.contains("train")) {
      const auto& t = m.at("train");
      state.train.learning_rate = t.value("learning_rate", state.train.learning_rate);
      state.train.lambda_reg = t.value("lambda_reg", state.train.lambda_reg);
      state.train.int_steps = t.value("int_steps", state.train.int_steps);
      state.train.iteration = t.value("iteration", state.train.iteration);
    }
    for (const auto& t : m.at("tensors")) {
      if (t.at("dtype").get<std::string>() != "f32") throw FormatError("only f32 tensors are supported");
      NamedTensor w{t.at("name").get<std::string>(), t.at("shape").get<ad::Shape>(), {}};
      const std::size_t count = ad::numel(w.shape);
      if (bytes.size() < pos + 4 * count) throw FormatError("truncated tensor data");
      w.values = io_detail::get_words<float>(bytes, pos, count);
      pos += 4 * count;
      state.weights.push_back(std::move(w));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad SMWT manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("bad SMWT manifest: ") + e.what());
  }
  if (pos != bytes.size()) throw FormatError("trailing bytes after tensor data");

  // The tensor list must match the architecture it claims.
  const auto expected = init_weights(state.config, RngStream(0));
  if (expected.size() != state.weights.size()) throw FormatError("tensor count does not match architecture");
  for (std::size_t i = 0; i < expected.size(); ++i)
    if (expected[i].name != state.weights[i].name || expected[i].shape != state.weights[i].shape)
      throw FormatError("tensor '" + state.weights[i].name + "' does not match architecture");
  for (const auto& w : state.weights) {
    state.adam.first.emplace_back(w.values.size(), 0.0f);
    state.adam.second.emplace_back(w.values.size(), 0.0f);
  }
  return state;
}

inline void save_weights(const std::string& path, const NetState& s) { write_file(path, encode_smwt(s)); }
inline NetState load_weights(const std::string& path) { return decode_smwt(read_file(path)); }

// ------------------------------------------------------------------ CSV

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string trace_to_csv(std::span<const TraceRow> rows) {
  std::string out = "iteration,dice_term,reg_term,total,lr\n";
  for (const auto& r : rows)
    out += std::to_string(r.iteration) + ',' + format_real(r.dice_term) + ',' + format_real(r.reg_term) + ',' +
           format_real(r.total) + ',' + format_real(r.learning_rate) + '\n';
  return out;
}

}  // namespace synthmorph
