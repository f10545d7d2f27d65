#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icseg/errors.hpp"
#include "icseg/geometry.hpp"
#include "icseg/rng.hpp"

namespace icseg {

struct Attribute {
  std::string name;
  int domain_size = 2;
  friend bool operator==(const Attribute&, const Attribute&) = default;
};

// Ordered categorical attributes. The order indexes every encoding downstream.
struct AttributeSchema {
  std::vector<Attribute> attributes;

  static AttributeSchema standard() {
    return {{{"color", 4}, {"shape", 3}, {"size", 2}, {"motion", 4}, {"region", 3}}};
  }

  int size() const { return static_cast<int>(attributes.size()); }
  int domain(int a) const { return attributes.at(static_cast<std::size_t>(a)).domain_size; }

  int total_values() const {
    int n = 0;
    for (const auto& a : attributes) n += a.domain_size;
    return n;
  }

  // Offset of attribute a's first value in a concatenated one-hot encoding.
  int value_offset(int a) const {
    int n = 0;
    for (int i = 0; i < a; ++i) n += attributes[static_cast<std::size_t>(i)].domain_size;
    return n;
  }

  int index_of(std::string_view name) const {
    for (int i = 0; i < size(); ++i)
      if (attributes[static_cast<std::size_t>(i)].name == name) return i;
    return -1;
  }

  void validate() const {
    if (attributes.empty()) throw ConfigError("attribute schema is empty");
    for (const auto& a : attributes)
      if (a.domain_size < 2)
        throw ConfigError("attribute '" + a.name + "' has domain_size < 2");
  }

  friend bool operator==(const AttributeSchema&, const AttributeSchema&) = default;
};

enum class DifficultyTier { Simple, Medium, Difficult };

inline DifficultyTier tier_for_candidates(int m) {
  if (m <= 2) return DifficultyTier::Simple;
  if (m <= 5) return DifficultyTier::Medium;
  return DifficultyTier::Difficult;
}

inline std::string_view tier_name(DifficultyTier t) {
  switch (t) {
    case DifficultyTier::Simple: return "simple";
    case DifficultyTier::Medium: return "medium";
    case DifficultyTier::Difficult: return "difficult";
  }
  return "simple";
}

inline DifficultyTier parse_tier(std::string_view s) {
  if (s == "simple") return DifficultyTier::Simple;
  if (s == "medium") return DifficultyTier::Medium;
  if (s == "difficult") return DifficultyTier::Difficult;
  throw DataError("unknown tier '" + std::string(s) + "'");
}

// Motion values under the standard schema.
enum Motion : int { kStatic = 0, kRight = 1, kLeft = 2, kDown = 3 };

struct SceneObject {
  int slot_id = 0;
  std::vector<int> attrs;
  std::vector<Box> boxes;  // one per frame
  bool present = true;
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct QueryTerm {
  int attr = 0;
  int value = 0;
  friend bool operator==(const QueryTerm&, const QueryTerm&) = default;
};

// A user answer to "what is the target's <attr>?".
struct Answer {
  int attr = 0;
  int value = 0;
  friend bool operator==(const Answer&, const Answer&) = default;
};

struct Scene {
  AttributeSchema schema = AttributeSchema::standard();
  int frames = 6;
  int grid = 64;
  int max_objects = 8;
  std::vector<SceneObject> objects;  // sorted by slot_id
  std::vector<QueryTerm> query;
  int target_id = 0;
  std::uint64_t seed = 0;
  DifficultyTier tier = DifficultyTier::Simple;

  const SceneObject* find(int slot) const {
    for (const auto& o : objects)
      if (o.slot_id == slot) return &o;
    return nullptr;
  }

  const SceneObject& target() const {
    const SceneObject* t = find(target_id);
    if (t == nullptr) throw DataError("scene target slot has no object");
    return *t;
  }

  friend bool operator==(const Scene&, const Scene&) = default;
};

inline bool matches_query(const Scene& scene, const SceneObject& o) {
  if (!o.present) return false;
  for (const auto& q : scene.query)
    if (o.attrs[static_cast<std::size_t>(q.attr)] != q.value) return false;
  return true;
}

// Objects consistent with the query and with every answer. Answers are a
// history, so the same attribute may appear twice with different values; in
// that case nothing survives.
inline std::vector<int> candidate_set(const Scene& scene, std::span<const Answer> answered) {
  std::vector<int> out;
  for (const auto& o : scene.objects) {
    if (!matches_query(scene, o)) continue;
    bool ok = true;
    for (const auto& a : answered) {
      if (a.attr < 0 || a.attr >= scene.schema.size())
        throw PreconditionError("answer refers to unknown attribute index");
      if (o.attrs[static_cast<std::size_t>(a.attr)] != a.value) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(o.slot_id);
  }
  return out;
}

inline std::vector<int> candidate_set(const Scene& scene, const std::map<int, int>& answered) {
  std::vector<Answer> list;
  for (const auto& [attr, value] : answered) list.push_back({attr, value});
  return candidate_set(scene, list);
}

inline int initial_candidate_count(const Scene& scene) {
  return static_cast<int>(candidate_set(scene, std::span<const Answer>{}).size());
}

struct GeneratorOptions {
  int frames = 6;
  int grid = 64;
  int max_objects = 8;
  // Probability that a non-query attribute of a distractor candidate copies
  // the target's value; higher means visually closer candidates.
  double similarity = 0.6;
  double distractor_rate = 0.5;
};

namespace detail {

inline int motion_step(int grid) { return std::max(1, grid / 32); }

// Width/height range for a size value; small objects first.
inline std::pair<int, int> extent_range(int grid, int size_value, int size_domain) {
  const double lo_small = 0.08, hi_small = 0.14, lo_large = 0.18, hi_large = 0.26;
  const double t = size_domain > 1 ? static_cast<double>(size_value) / (size_domain - 1) : 0.0;
  const double lo = lo_small + t * (lo_large - lo_small);
  const double hi = hi_small + t * (hi_large - hi_small);
  int a = std::max(2, static_cast<int>(std::lround(lo * grid)));
  int b = std::max(a, static_cast<int>(std::lround(hi * grid)));
  return {a, b};
}

inline int region_of(double cx, int grid, int regions) {
  int r = static_cast<int>(std::floor(cx * regions / grid));
  return std::clamp(r, 0, regions - 1);
}

inline std::vector<Box> place_object(const AttributeSchema& schema, const std::vector<int>& attrs,
                                     const GeneratorOptions& opt, Rng& rng) {
  const int S = opt.grid, T = opt.frames;
  const int size_attr = schema.index_of("size");
  const int motion_attr = schema.index_of("motion");
  const int region_attr = schema.index_of("region");

  const int size_value = size_attr >= 0 ? attrs[static_cast<std::size_t>(size_attr)] : 0;
  const int size_domain = size_attr >= 0 ? schema.domain(size_attr) : 2;
  const auto [lo, hi] = extent_range(S, size_value, size_domain);
  const int w = rng.range(lo, hi);
  const int h = rng.range(lo, hi);

  int motion = motion_attr >= 0 ? attrs[static_cast<std::size_t>(motion_attr)] : kStatic;
  if (motion > kDown) motion = kStatic;
  const int step = motion_step(S);
  const int dx = motion == kRight ? step : motion == kLeft ? -step : 0;
  const int dy = motion == kDown ? step : 0;
  const bool vertical = motion == kDown;

  // Occlusion shrinks the extent perpendicular to the motion, so the
  // moving-axis center advances by exactly one step per frame.
  std::vector<int> shrink(static_cast<std::size_t>(T));
  const int along = vertical ? w : h;
  for (auto& s : shrink) s = rng.range(0, along / 3);

  const int w0 = vertical ? w - shrink[0] : w;
  const int drift = (T - 1) * step;

  std::vector<int> xs;
  for (int x1 = 0; x1 + w <= S; ++x1) {
    const int min_x = std::min(x1, x1 + (T - 1) * dx);
    const int max_x2 = std::max(x1, x1 + (T - 1) * dx) + w;
    if (min_x < 0 || max_x2 > S) continue;
    if (region_attr >= 0) {
      const double cx = x1 + 0.5 * w0;
      if (region_of(cx, S, schema.domain(region_attr)) != attrs[static_cast<std::size_t>(region_attr)])
        continue;
    }
    xs.push_back(x1);
  }
  const int y_room = S - h - (vertical ? drift : 0);
  if (xs.empty() || y_room < 0)
    throw ConfigError("grid " + std::to_string(S) + " too small for object extent " +
                      std::to_string(std::max(w, h)) + " plus motion drift " +
                      std::to_string(drift) + " over " + std::to_string(T) + " frames");
  const int x1_0 = xs[static_cast<std::size_t>(rng.below(xs.size()))];
  const int y1_0 = rng.range(0, y_room);

  std::vector<Box> boxes;
  boxes.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const int s = shrink[static_cast<std::size_t>(t)];
    Box b;
    b.x1 = x1_0 + t * dx;
    b.y1 = y1_0 + t * dy;
    b.x2 = b.x1 + (vertical ? w - s : w);
    b.y2 = b.y1 + (vertical ? h : h - s);
    boxes.push_back(b);
  }
  return boxes;
}

inline std::vector<int> random_attrs(const AttributeSchema& schema, Rng& rng) {
  std::vector<int> v(static_cast<std::size_t>(schema.size()));
  for (int a = 0; a < schema.size(); ++a)
    v[static_cast<std::size_t>(a)] = static_cast<int>(rng.below(static_cast<std::uint64_t>(schema.domain(a))));
  return v;
}

inline int different_value(int domain, int avoid, Rng& rng) {
  int v = static_cast<int>(rng.below(static_cast<std::uint64_t>(domain - 1)));
  return v >= avoid ? v + 1 : v;
}

}  // namespace detail

// True when some single non-query attribute gives the target a value no
// other candidate holds.
inline bool target_separable(const Scene& scene) {
  const auto cands = candidate_set(scene, std::span<const Answer>{});
  const auto& tgt = scene.target();
  for (int a = 0; a < scene.schema.size(); ++a) {
    bool unique = true;
    for (int slot : cands) {
      if (slot == scene.target_id) continue;
      if (scene.find(slot)->attrs[static_cast<std::size_t>(a)] == tgt.attrs[static_cast<std::size_t>(a)]) {
        unique = false;
        break;
      }
    }
    if (unique) return true;
  }
  return false;
}

inline Scene generate_scene(const AttributeSchema& schema, DifficultyTier tier, std::uint64_t seed,
                            const GeneratorOptions& opt = {}) {
  schema.validate();
  if (opt.frames < 1) throw ConfigError("frames must be >= 1");
  if (opt.grid < 2) throw ConfigError("grid must be >= 2");
  int m_lo = 2, m_hi = 2;
  if (tier == DifficultyTier::Medium) m_lo = 3, m_hi = 5;
  if (tier == DifficultyTier::Difficult) m_lo = 6, m_hi = opt.max_objects;
  if (opt.max_objects < m_lo)
    throw ConfigError("tier " + std::string(tier_name(tier)) + " needs max_objects >= " +
                      std::to_string(m_lo) + " (got " + std::to_string(opt.max_objects) + ")");
  m_hi = std::min(m_hi, opt.max_objects);
  if (schema.size() < 2) throw ConfigError("schema needs at least 2 attributes");

  Rng rng(mix_seed({seed, static_cast<std::uint64_t>(tier), 0x5CE7E}));
  const int A = schema.size();
  const int M = rng.range(m_lo, m_hi);

  Scene scene;
  scene.schema = schema;
  scene.frames = opt.frames;
  scene.grid = opt.grid;
  scene.max_objects = opt.max_objects;
  scene.seed = seed;
  scene.tier = tier;

  // Query constrains one or two attributes (never all of them).
  std::vector<int> order(static_cast<std::size_t>(A));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const int n_query = std::min(A - 1, rng.range(1, 2));
  for (int i = 0; i < n_query; ++i) {
    const int a = order[static_cast<std::size_t>(i)];
    scene.query.push_back({a, static_cast<int>(rng.below(static_cast<std::uint64_t>(schema.domain(a))))});
  }
  std::sort(scene.query.begin(), scene.query.end(),
            [](const QueryTerm& l, const QueryTerm& r) { return l.attr < r.attr; });
  auto is_query = [&](int a) {
    return std::any_of(scene.query.begin(), scene.query.end(), [a](const QueryTerm& q) { return q.attr == a; });
  };

  std::vector<std::vector<int>> cand_attrs;
  auto tgt = detail::random_attrs(schema, rng);
  for (const auto& q : scene.query) tgt[static_cast<std::size_t>(q.attr)] = q.value;
  cand_attrs.push_back(tgt);
  for (int i = 1; i < M; ++i) {
    auto v = detail::random_attrs(schema, rng);
    for (int a = 0; a < A; ++a) {
      if (is_query(a)) continue;
      if (rng.bernoulli(opt.similarity)) v[static_cast<std::size_t>(a)] = tgt[static_cast<std::size_t>(a)];
    }
    for (const auto& q : scene.query) v[static_cast<std::size_t>(q.attr)] = q.value;
    cand_attrs.push_back(std::move(v));
  }

  auto separable = [&] {
    for (int a = 0; a < A; ++a) {
      bool unique = true;
      for (int i = 1; i < M; ++i)
        if (cand_attrs[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] == tgt[static_cast<std::size_t>(a)]) unique = false;
      if (unique) return true;
    }
    return false;
  };
  if (!separable()) {
    std::vector<int> free_attrs;
    for (int a = 0; a < A; ++a)
      if (!is_query(a)) free_attrs.push_back(a);
    const int a = free_attrs[static_cast<std::size_t>(rng.below(free_attrs.size()))];
    for (int i = 1; i < M; ++i) {
      int& v = cand_attrs[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)];
      if (v == tgt[static_cast<std::size_t>(a)]) v = detail::different_value(schema.domain(a), v, rng);
    }
  }

  std::vector<int> slots(static_cast<std::size_t>(opt.max_objects));
  std::iota(slots.begin(), slots.end(), 0);
  rng.shuffle(slots);
  scene.target_id = slots[0];

  auto make_object = [&](int slot, std::vector<int> attrs) {
    SceneObject o;
    o.slot_id = slot;
    o.boxes = detail::place_object(schema, attrs, opt, rng);
    o.attrs = std::move(attrs);
    return o;
  };
  for (int i = 0; i < M; ++i)
    scene.objects.push_back(make_object(slots[static_cast<std::size_t>(i)], cand_attrs[static_cast<std::size_t>(i)]));
  for (int i = M; i < opt.max_objects; ++i) {
    if (!rng.bernoulli(opt.distractor_rate)) continue;
    auto v = detail::random_attrs(schema, rng);
    bool matches = true;
    for (const auto& q : scene.query)
      if (v[static_cast<std::size_t>(q.attr)] != q.value) matches = false;
    if (matches) {
      const auto& q = scene.query[static_cast<std::size_t>(rng.below(scene.query.size()))];
      v[static_cast<std::size_t>(q.attr)] = detail::different_value(schema.domain(q.attr), q.value, rng);
    }
    scene.objects.push_back(make_object(slots[static_cast<std::size_t>(i)], std::move(v)));
  }
  std::sort(scene.objects.begin(), scene.objects.end(),
            [](const SceneObject& l, const SceneObject& r) { return l.slot_id < r.slot_id; });
  return scene;
}

// Structural checks applied to scenes loaded from disk.
inline void validate_scene(const Scene& s) {
  s.schema.validate();
  if (s.frames < 1 || s.grid < 2) throw DataError("scene has invalid frames/grid");
  std::vector<bool> seen(static_cast<std::size_t>(s.max_objects), false);
  for (const auto& o : s.objects) {
    if (o.slot_id < 0 || o.slot_id >= s.max_objects) throw DataError("object slot out of range");
    if (seen[static_cast<std::size_t>(o.slot_id)]) throw DataError("duplicate object slot");
    seen[static_cast<std::size_t>(o.slot_id)] = true;
    if (static_cast<int>(o.attrs.size()) != s.schema.size()) throw DataError("object attribute count mismatch");
    for (int a = 0; a < s.schema.size(); ++a)
      if (o.attrs[static_cast<std::size_t>(a)] < 0 || o.attrs[static_cast<std::size_t>(a)] >= s.schema.domain(a))
        throw DataError("object attribute value out of domain");
    if (!o.present) continue;
    if (static_cast<int>(o.boxes.size()) != s.frames) throw DataError("object box count != frames");
    for (const auto& b : o.boxes)
      if (!(0 <= b.x1 && b.x1 < b.x2 && b.x2 <= s.grid && 0 <= b.y1 && b.y1 < b.y2 && b.y2 <= s.grid))
        throw DataError("degenerate or out-of-grid box in slot " + std::to_string(o.slot_id));
  }
  for (const auto& q : s.query)
    if (q.attr < 0 || q.attr >= s.schema.size() || q.value < 0 || q.value >= s.schema.domain(q.attr))
      throw DataError("query term out of range");
  const auto c0 = candidate_set(s, std::span<const Answer>{});
  if (c0.size() < 2) throw DataError("scene query matches fewer than two candidates");
  if (std::find(c0.begin(), c0.end(), s.target_id) == c0.end())
    throw DataError("scene target is not a query candidate");
}

}  // namespace icseg
