#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "imagine/model/imagine.hpp"

namespace imagine::model {

inline constexpr int kCheckpointFormat = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kWeightsFile = "weights.bin";

class VocabMismatchError : public ConfigError {
public:
  VocabMismatchError(const std::string& expected, const std::string& actual)
      : ConfigError("vocabulary hash mismatch: checkpoint has " + expected + ", supplied vocabulary has " +
                    actual) {}
};

template <typename T>
constexpr const char* precision_name() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? "float32" : "float64";
}

struct TensorEntry {
  std::string name;
  std::vector<std::size_t> shape;
};

struct Manifest {
  int format_version = kCheckpointFormat;
  ModelConfig config;
  std::string precision;
  std::string vocab_hash;
  std::vector<std::string> labels;
  std::vector<TensorEntry> tensors;
  nlohmann::json extra = nlohmann::json::object();
};

inline nlohmann::json manifest_json(const Manifest& m) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : m.tensors) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
  return {{"format_version", m.format_version}, {"config", m.config},  {"precision", m.precision},
          {"vocab_hash", m.vocab_hash},         {"labels", m.labels},  {"tensors", tensors},
          {"extra", m.extra}};
}

inline Manifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifestFile;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  Manifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    m.config = j.at("config").get<ModelConfig>();
    m.precision = j.at("precision").get<std::string>();
    m.vocab_hash = j.at("vocab_hash").get<std::string>();
    m.labels = j.at("labels").get<std::vector<std::string>>();
    for (const auto& t : j.at("tensors"))
      m.tensors.push_back({t.at("name").get<std::string>(), t.at("shape").get<std::vector<std::size_t>>()});
    if (j.contains("extra")) m.extra = j["extra"];
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  if (m.format_version != kCheckpointFormat)
    throw SchemaError("unsupported checkpoint format " + std::to_string(m.format_version));
  return m;
}

namespace detail {

inline void put_f32_le(std::ostream& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                         static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
  out.write(bytes, 4);
}

inline float get_f32_le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

} // namespace detail

// Writes manifest.json and weights.bin (little-endian float32, tensors in
// registry order) into `dir`.
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const ImagineModel<T>& model,
                     const std::string& vocab_hash, const std::vector<std::string>& labels,
                     const nlohmann::json& extra = nlohmann::json::object()) {
  std::filesystem::create_directories(dir);
  Manifest m;
  m.config = model.config();
  m.precision = precision_name<T>();
  m.vocab_hash = vocab_hash;
  m.labels = labels;
  m.extra = extra;
  for (const auto& p : model.registry().params()) m.tensors.push_back({p.name, p.tensor.shape()});

  std::ofstream blob(dir / kWeightsFile, std::ios::binary);
  if (!blob) throw IoError("cannot write " + (dir / kWeightsFile).string());
  for (const auto& p : model.registry().params())
    for (T v : p.tensor.values()) detail::put_f32_le(blob, static_cast<float>(v));
  if (!blob) throw IoError("short write to " + (dir / kWeightsFile).string());

  std::ofstream mf(dir / kManifestFile);
  if (!mf) throw IoError("cannot write " + (dir / kManifestFile).string());
  mf << manifest_json(m).dump(2) << '\n';
}

// Rebuilds the model from the manifest's config and fills every tensor.
// `expected_vocab_hash`, when non-empty, must match the manifest.
template <typename T>
ImagineModel<T> load_checkpoint(const std::filesystem::path& dir, const std::string& expected_vocab_hash = {},
                                Manifest* manifest_out = nullptr) {
  Manifest m = read_manifest(dir);
  if (!expected_vocab_hash.empty() && expected_vocab_hash != m.vocab_hash)
    throw VocabMismatchError(m.vocab_hash, expected_vocab_hash);
  ImagineModel<T> model(m.config);
  const auto& params = model.registry().params();
  if (params.size() != m.tensors.size())
    throw SchemaError("checkpoint lists " + std::to_string(m.tensors.size()) + " tensors, model has " +
                      std::to_string(params.size()));
  std::size_t total = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != m.tensors[i].name || params[i].tensor.shape() != m.tensors[i].shape)
      throw SchemaError("checkpoint tensor " + std::to_string(i) + " is " + m.tensors[i].name + " " +
                        num::shape_str(m.tensors[i].shape) + ", model expects " + params[i].name + " " +
                        num::shape_str(params[i].tensor.shape()));
    total += params[i].tensor.size();
  }

  const auto path = dir / kWeightsFile;
  std::ifstream blob(path, std::ios::binary);
  if (!blob) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());
  if (bytes.size() != total * 4)
    throw SchemaError(path.string() + " holds " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(total * 4));
  const unsigned char* p = bytes.data();
  for (const auto& np : params) {
    auto vals = np.tensor.node().value.data();
    for (std::size_t i = 0; i < np.tensor.size(); ++i, p += 4) vals[i] = static_cast<T>(detail::get_f32_le(p));
  }
  if (manifest_out) *manifest_out = std::move(m);
  return model;
}

} // namespace imagine::model
