#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "icseg/errors.hpp"
#include "icseg/scene.hpp"
#include "icseg/trajectory.hpp"

namespace icseg {

using Json = nlohmann::ordered_json;

// --- scenes ---------------------------------------------------------------

inline Json schema_to_json(const AttributeSchema& s) {
  Json out = Json::array();
  for (const auto& a : s.attributes) out.push_back({{"name", a.name}, {"domain", a.domain_size}});
  return out;
}

inline AttributeSchema schema_from_json(const Json& j) {
  AttributeSchema s;
  if (!j.is_array()) throw DataError("schema must be an array");
  for (const auto& a : j) s.attributes.push_back({a.at("name").get<std::string>(), a.at("domain").get<int>()});
  return s;
}

inline Json box_to_json(const Box& b) { return Json::array({b.x1, b.y1, b.x2, b.y2}); }

inline Box box_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("box must be [x1, y1, x2, y2]");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

inline Json scene_to_json(const Scene& s) {
  Json j;
  j["seed"] = s.seed;
  j["tier"] = std::string(tier_name(s.tier));
  j["schema"] = schema_to_json(s.schema);
  j["frames"] = s.frames;
  j["grid"] = s.grid;
  j["max_objects"] = s.max_objects;
  Json q = Json::array();
  for (const auto& t : s.query) q.push_back({{"attr", t.attr}, {"value", t.value}});
  j["query"] = q;
  j["target_id"] = s.target_id;
  Json objs = Json::array();
  for (const auto& o : s.objects) {
    Json jo;
    jo["slot"] = o.slot_id;
    jo["attrs"] = o.attrs;
    jo["present"] = o.present;
    Json boxes = Json::array();
    for (const auto& b : o.boxes) boxes.push_back(box_to_json(b));
    jo["boxes"] = boxes;
    objs.push_back(jo);
  }
  j["objects"] = objs;
  return j;
}

inline Scene scene_from_json(const Json& j) {
  try {
    Scene s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.tier = parse_tier(j.at("tier").get<std::string>());
    s.schema = schema_from_json(j.at("schema"));
    s.frames = j.at("frames").get<int>();
    s.grid = j.at("grid").get<int>();
    s.max_objects = j.at("max_objects").get<int>();
    for (const auto& q : j.at("query")) s.query.push_back({q.at("attr").get<int>(), q.at("value").get<int>()});
    s.target_id = j.at("target_id").get<int>();
    for (const auto& jo : j.at("objects")) {
      SceneObject o;
      o.slot_id = jo.at("slot").get<int>();
      o.attrs = jo.at("attrs").get<std::vector<int>>();
      o.present = jo.value("present", true);
      for (const auto& b : jo.at("boxes")) o.boxes.push_back(box_from_json(b));
      s.objects.push_back(std::move(o));
    }
    std::sort(s.objects.begin(), s.objects.end(),
              [](const SceneObject& a, const SceneObject& b) { return a.slot_id < b.slot_id; });
    validate_scene(s);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed scene: ") + e.what());
  }
}

// --- files ----------------------------------------------------------------

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes through a sibling temp file and renames, so readers never observe a
// half-written file.
inline void write_file_atomic(const std::filesystem::path& p, const std::string& bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const auto tmp = std::filesystem::path(p.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(what + ": " + e.what());
  }
}

inline std::string dump_pack(const std::vector<Scene>& pack) {
  Json arr = Json::array();
  for (const auto& s : pack) arr.push_back(scene_to_json(s));
  return arr.dump(1) + "\n";
}

inline std::vector<Scene> load_pack(const std::filesystem::path& p) {
  const Json j = parse_json(read_file(p), "scenario pack " + p.string());
  if (!j.is_array()) throw DataError("scenario pack must be a JSON array");
  std::vector<Scene> out;
  for (const auto& s : j) out.push_back(scene_from_json(s));
  if (out.empty()) throw DataError("scenario pack is empty");
  for (const auto& s : out)
    if (s.schema != out.front().schema || s.frames != out.front().frames || s.grid != out.front().grid ||
        s.max_objects != out.front().max_objects)
      throw DataError("scenario pack mixes scene dimensions");
  return out;
}

// --- trajectories ---------------------------------------------------------

inline Json trajectory_to_json(const Trajectory& t) {
  Json j;
  j["scene_seed"] = t.scene_seed;
  j["M"] = t.initial_candidates;
  j["max_turns"] = t.max_turns;
  Json toks = Json::array();
  for (const auto& s : t.tokens)
    toks.push_back({{"token", s.token}, {"phase", std::string(phase_name(s.phase))}, {"logprob", s.logprob}});
  j["tokens"] = toks;
  Json turns = Json::array();
  for (const auto& d : t.turns)
    turns.push_back({{"k", d.k}, {"attr", d.asked_attr}, {"answer", d.answer_value}, {"remaining", d.remaining}});
  j["turns"] = turns;
  j["commit"] = {{"keyframe", t.commit.keyframe},
                 {"box", box_to_json(t.commit.box)},
                 {"point", {t.commit.point.x, t.commit.point.y}}};
  const auto& r = t.reward;
  j["reward"] = {{"r_iou", r.r_iou}, {"r_box", r.r_box}, {"r_point", r.r_point}, {"r_keyframe", r.r_keyframe},
                 {"r_ent", r.r_ent}, {"r_eff", r.r_eff}, {"total", r.total},     {"clamped", r.clamped}};
  if (!t.advantages.empty()) j["advantages"] = t.advantages;
  return j;
}

}  // namespace icseg
