#pragma once

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "icseg/errors.hpp"
#include "icseg/higrpo.hpp"
#include "icseg/io.hpp"
#include "icseg/pretrain.hpp"

namespace icseg {

inline constexpr const char* kEnvPrefix = "ICSEG_";

// Every accepted key with its default. The default's JSON type is the key's
// type; integers are accepted where reals are expected.
inline const Json& config_defaults() {
  static const Json d = {
      {"seed", 0},
      {"group_size", 8},
      {"alpha", 0.5},
      {"clip_eps", 0.2},
      {"factor_clip", 0.2},
      {"lambda0", 0.5},
      {"sync_interval", 10},
      {"max_turns", 5},
      {"learning_rate", 0.01},
      {"total_steps", 100},
      {"scenes_per_step", 1},
      {"hidden", 64},
      {"warmup_steps", 0},
      {"warmup_learning_rate", 0.3},
      {"warmup_episodes", 16},
      {"noise", 0.0},
      {"grid", 64},
      {"frames", 6},
      {"max_objects", 8},
      {"similarity", 0.6},
      {"distractor_rate", 0.5},
      {"tiers", Json::array({"simple", "medium", "difficult"})},
      {"box_threshold", 0.0},  // 0 selects the grid-scaled default
      {"point_radius", 0.0},   // likewise
      {"boundary_tolerance", -1.0},
      {"pack", ""},
      {"checkpoint_dir", "checkpoints"},
      {"log_dir", "logs"},
      {"checkpoint_every", 10},
      {"eval_seed", 0},
      {"timing", false},
  };
  return d;
}

namespace detail {

inline bool type_compatible(const Json& def, const Json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number()) return v.is_number();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) {
    if (!v.is_array()) return false;
    for (const auto& e : v)
      if (!e.is_string()) return false;
    return true;
  }
  return false;
}

// Parses a textual override using the key's type.
inline Json parse_scalar(const std::string& key, const std::string& text) {
  const Json& def = config_defaults().at(key);
  try {
    if (def.is_string()) return text;
    if (def.is_array()) {
      Json arr = Json::array();
      std::size_t start = 0;
      while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!item.empty()) arr.push_back(item);
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      return arr;
    }
    if (def.is_boolean()) {
      if (text == "1" || text == "true") return true;
      if (text == "0" || text == "false") return false;
      throw ConfigError("");
    }
    std::size_t used = 0;
    if (def.is_number_integer()) {
      const long long v = std::stoll(text, &used);
      if (used != text.size()) throw ConfigError("");
      return v;
    }
    const double v = std::stod(text, &used);
    if (used != text.size()) throw ConfigError("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
}

}  // namespace detail

// Layered configuration: defaults < file < environment < command line.
class RunConfig {
 public:
  RunConfig() : values_(config_defaults()) {}

  const Json& values() const { return values_; }

  void set(const std::string& key, const Json& v) {
    if (!config_defaults().contains(key)) throw ConfigError("unknown config key '" + key + "'");
    if (!detail::type_compatible(config_defaults().at(key), v))
      throw ConfigError("config key '" + key + "' has the wrong type");
    values_[key] = v;
  }

  void set_text(const std::string& key, const std::string& text) {
    if (!config_defaults().contains(key)) throw ConfigError("unknown config key '" + key + "'");
    set(key, detail::parse_scalar(key, text));
  }

  void merge_file(const std::filesystem::path& p) {
    Json j;
    try {
      j = Json::parse(read_file(p));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file " + p.string() + ": " + e.what());
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) set(it.key(), it.value());
  }

  // ICSEG_<KEY> in upper case, e.g. ICSEG_LEARNING_RATE.
  void merge_env() {
    for (auto it = config_defaults().begin(); it != config_defaults().end(); ++it) {
      std::string name = kEnvPrefix;
      for (char c : it.key()) name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (const char* v = std::getenv(name.c_str())) set_text(it.key(), v);
    }
  }

  template <class T>
  T get(const std::string& key) const {
    return values_.at(key).get<T>();
  }

  HiGrpoConfig higrpo() const {
    HiGrpoConfig c;
    c.group_size = get<int>("group_size");
    c.alpha = get<double>("alpha");
    c.clip_eps = get<double>("clip_eps");
    c.factor_clip = get<double>("factor_clip");
    c.lambda0 = get<double>("lambda0");
    c.sync_interval = get<int>("sync_interval");
    c.max_turns = get<int>("max_turns");
    c.learning_rate = get<double>("learning_rate");
    c.total_steps = get<int>("total_steps");
    c.scenes_per_step = get<int>("scenes_per_step");
    c.seed = get<std::uint64_t>("seed");
    c.noise_rate = get<double>("noise");
    c.thresholds = thresholds();
    c.validate();
    return c;
  }

  std::optional<Thresholds> thresholds() const {
    const double box = get<double>("box_threshold"), pt = get<double>("point_radius");
    if (box < 0 || pt < 0) throw ConfigError("thresholds must be >= 0");
    if (box == 0 && pt == 0) return std::nullopt;
    Thresholds t = Thresholds::for_grid(get<int>("grid"));
    if (box > 0) t.box_center_l1 = box;
    if (pt > 0) t.point_radius = pt;
    return t;
  }

  GeneratorOptions generator() const {
    GeneratorOptions g;
    g.frames = get<int>("frames");
    g.grid = get<int>("grid");
    g.max_objects = get<int>("max_objects");
    g.similarity = get<double>("similarity");
    g.distractor_rate = get<double>("distractor_rate");
    return g;
  }

  std::vector<DifficultyTier> tiers() const {
    std::vector<DifficultyTier> out;
    for (const auto& t : values_.at("tiers")) out.push_back(parse_tier_config(t.get<std::string>()));
    if (out.empty()) throw ConfigError("tiers must not be empty");
    return out;
  }

  GroundingWarmup warmup() const {
    GroundingWarmup w;
    w.steps = get<int>("warmup_steps");
    w.learning_rate = get<double>("warmup_learning_rate");
    w.episodes_per_step = get<int>("warmup_episodes");
    w.max_turns = get<int>("max_turns");
    w.seed = get<std::uint64_t>("seed");
    w.validate();
    return w;
  }

 private:
  static DifficultyTier parse_tier_config(const std::string& s) {
    try {
      return parse_tier(s);
    } catch (const DataError&) {
      throw ConfigError("unknown tier '" + s + "' in config");
    }
  }

  Json values_;
};

}  // namespace icseg
