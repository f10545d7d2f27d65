#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <limits>
#include <filesystem>
#include <string>

#include "icseg/errors.hpp"
#include "icseg/io.hpp"
#include "icseg/policy.hpp"

namespace icseg {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

inline constexpr int kCheckpointFormat = 1;

struct CheckpointMeta {
  PolicyShape shape;
  int hidden = 0;
  std::int64_t step = 0;
  double lambda = 0.0;
};

inline std::filesystem::path weights_path(const std::filesystem::path& meta) {
  auto p = meta;
  p.replace_extension(".bin");
  return p;
}

inline std::string encode_weights(const PolicyParams& p) {
  std::string bytes(p.w.size() * 4, '\0');
  for (std::size_t i = 0; i < p.w.size(); ++i) {
    const auto f = static_cast<float>(p.w[i]);
    if (static_cast<double>(f) != p.w[i]) throw IntegrityError("weight " + std::to_string(i) + " is not float-exact");
    std::uint32_t u = std::bit_cast<std::uint32_t>(f);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + static_cast<std::size_t>(b)] = static_cast<char>((u >> (8 * b)) & 0xFF);
  }
  return bytes;
}

inline std::vector<double> decode_weights(const std::string& bytes, std::size_t count) {
  if (bytes.size() != count * 4)
    throw IntegrityError("weight file holds " + std::to_string(bytes.size()) + " bytes, expected " +
                         std::to_string(count * 4));
  std::vector<double> w(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b)
      u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + static_cast<std::size_t>(b)])) << (8 * b);
    w[i] = static_cast<double>(std::bit_cast<float>(u));
    if (!std::isfinite(w[i])) throw IntegrityError("non-finite weight " + std::to_string(i) + " in checkpoint");
  }
  return w;
}

// Metadata JSON plus a sibling .bin of little-endian float32 weights in the
// order W1, b1, W2, b2. Both files are renamed into place, weights first, so
// a metadata file that exists always points at complete weights.
inline void save_checkpoint(const std::filesystem::path& meta_path, const Policy& policy, double lambda) {
  const auto& p = policy.params();
  const auto& s = policy.shape();
  Json j;
  j["format"] = kCheckpointFormat;
  j["schema"] = schema_to_json(s.schema);
  j["frames"] = s.frames;
  j["grid"] = s.grid;
  j["max_objects"] = s.max_objects;
  j["input_dim"] = p.input_dim;
  j["hidden"] = p.hidden;
  j["output"] = p.output;
  j["step"] = p.step;
  j["lambda"] = lambda;
  j["weights"] = weights_path(meta_path).filename().string();
  j["count"] = p.w.size();
  write_file_atomic(weights_path(meta_path), encode_weights(p));
  write_file_atomic(meta_path, j.dump(1) + "\n");
}

inline CheckpointMeta read_checkpoint_meta(const Json& j) {
  try {
    if (j.at("format").get<int>() != kCheckpointFormat) throw DataError("unsupported checkpoint format");
    CheckpointMeta m;
    m.shape.schema = schema_from_json(j.at("schema"));
    m.shape.frames = j.at("frames").get<int>();
    m.shape.grid = j.at("grid").get<int>();
    m.shape.max_objects = j.at("max_objects").get<int>();
    m.hidden = j.at("hidden").get<int>();
    m.step = j.at("step").get<std::int64_t>();
    m.lambda = j.at("lambda").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint metadata: ") + e.what());
  }
}

inline Policy load_checkpoint(const std::filesystem::path& meta_path, CheckpointMeta* meta_out = nullptr) {
  const Json j = parse_json(read_file(meta_path), "checkpoint " + meta_path.string());
  const CheckpointMeta m = read_checkpoint_meta(j);
  const ObservationLayout L(m.shape);
  PolicyParams p = PolicyParams::zeros(L.base_dim, m.hidden, m.shape.vocab().size());
  if (j.at("input_dim").get<int>() != p.input_dim || j.at("output").get<int>() != p.output ||
      j.at("count").get<std::size_t>() != p.count())
    throw IntegrityError("checkpoint dimensions disagree with its schema");
  const auto bin = meta_path.parent_path() / j.at("weights").get<std::string>();
  p.w = decode_weights(read_file(bin), p.count());
  p.step = m.step;
  if (meta_out != nullptr) *meta_out = m;
  return Policy(m.shape, std::move(p));
}

}  // namespace icseg
