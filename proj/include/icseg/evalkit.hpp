#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "icseg/dialogue.hpp"
#include "icseg/errors.hpp"
#include "icseg/geometry.hpp"
#include "icseg/policy.hpp"
#include "icseg/rewards.hpp"
#include "icseg/scene.hpp"

namespace icseg {

// Binary mask on a square grid, row-major.
struct Mask {
  int grid = 0;
  std::vector<std::uint8_t> px;

  static Mask empty(int grid) { return {grid, std::vector<std::uint8_t>(static_cast<std::size_t>(grid) * grid, 0)}; }

  static Mask rectangle(const Box& b, int grid) {
    Mask m = empty(grid);
    for (int y = std::max(0, b.y1); y < std::min(grid, b.y2); ++y)
      for (int x = std::max(0, b.x1); x < std::min(grid, b.x2); ++x) m.set(x, y);
    return m;
  }

  bool at(int x, int y) const { return px[static_cast<std::size_t>(y) * grid + x] != 0; }
  void set(int x, int y, bool v = true) { px[static_cast<std::size_t>(y) * grid + x] = v ? 1 : 0; }
  std::int64_t count() const {
    std::int64_t n = 0;
    for (auto v : px) n += v != 0;
    return n;
  }
};

using MaskSequence = std::vector<Mask>;

inline MaskSequence object_masks(const SceneObject& o, int grid) {
  MaskSequence out;
  for (const auto& b : o.boxes) out.push_back(Mask::rectangle(b, grid));
  return out;
}

inline std::pair<std::int64_t, std::int64_t> intersection_union(const Mask& a, const Mask& b) {
  if (a.grid != b.grid) throw ConfigError("mask dimensions differ");
  std::int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.px.size(); ++i) {
    const bool p = a.px[i] != 0, q = b.px[i] != 0;
    inter += p && q;
    uni += p || q;
  }
  return {inter, uni};
}

inline double mask_iou(const Mask& a, const Mask& b) {
  const auto [i, u] = intersection_union(a, b);
  return u == 0 ? 1.0 : static_cast<double>(i) / static_cast<double>(u);
}

// Stand-in for the mask propagator: the object whose keyframe box best
// overlaps the predicted box (ties and zero overlap fall back to the nearest
// box center, then the lowest slot).
inline int propagated_slot(const Scene& scene, const Commit& commit) {
  const Box pred = canonical(commit.box);
  int best = -1;
  double best_iou = -1.0, best_dist = 0.0;
  for (const auto& o : scene.objects) {
    if (!o.present) continue;
    const Box& b = o.boxes[static_cast<std::size_t>(commit.keyframe)];
    const double v = iou(pred, b);
    const double d = center_l2(pred, b);
    if (best < 0 || v > best_iou || (v == best_iou && d < best_dist)) {
      best = o.slot_id;
      best_iou = v;
      best_dist = d;
    }
  }
  return best;
}

inline MaskSequence propagate_mask(const Scene& scene, const Commit& commit) {
  const int slot = propagated_slot(scene, commit);
  if (slot < 0) throw DataError("scene has no objects to propagate");
  return object_masks(*scene.find(slot), scene.grid);
}

// Mean per-frame IoU; frames where both masks are empty score 1.
inline double region_similarity(const MaskSequence& pred, const MaskSequence& gt) {
  if (pred.size() != gt.size() || pred.empty()) throw ConfigError("mask sequences differ in length");
  double sum = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) sum += mask_iou(pred[t], gt[t]);
  return sum / static_cast<double>(pred.size());
}

// Mask pixels with a 4-neighbour outside the mask or on the grid border.
inline std::vector<std::pair<int, int>> boundary_pixels(const Mask& m) {
  std::vector<std::pair<int, int>> out;
  const int S = m.grid;
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      if (!m.at(x, y)) continue;
      const bool edge = x == 0 || y == 0 || x == S - 1 || y == S - 1 || !m.at(x - 1, y) || !m.at(x + 1, y) ||
                        !m.at(x, y - 1) || !m.at(x, y + 1);
      if (edge) out.emplace_back(x, y);
    }
  return out;
}

// Default boundary tolerance: 0.8% of the image diagonal, at least one pixel.
inline double default_boundary_tolerance(int grid) { return std::max(1.0, 0.008 * std::hypot(grid, grid)); }

inline double boundary_f_frame(const Mask& pred, const Mask& gt, double tol) {
  const auto pb = boundary_pixels(pred);
  const auto gb = boundary_pixels(gt);
  if (pb.empty() && gb.empty()) return 1.0;
  if (pb.empty() || gb.empty()) return 0.0;
  const double tol2 = tol * tol;
  auto matched = [tol2](const std::vector<std::pair<int, int>>& from, const std::vector<std::pair<int, int>>& to) {
    std::size_t hit = 0;
    for (const auto& [x, y] : from) {
      for (const auto& [u, v] : to) {
        const double dx = x - u, dy = y - v;
        if (dx * dx + dy * dy <= tol2) {
          ++hit;
          break;
        }
      }
    }
    return static_cast<double>(hit) / static_cast<double>(from.size());
  };
  const double precision = matched(pb, gb);
  const double recall = matched(gb, pb);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

inline double contour_accuracy(const MaskSequence& pred, const MaskSequence& gt, double tol) {
  if (pred.size() != gt.size() || pred.empty()) throw ConfigError("mask sequences differ in length");
  if (tol < 0) throw PreconditionError("boundary tolerance must be >= 0");
  double sum = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    if (pred[t].grid != gt[t].grid) throw ConfigError("mask dimensions differ");
    sum += boundary_f_frame(pred[t], gt[t], tol);
  }
  return sum / static_cast<double>(pred.size());
}

struct ImageMetrics {
  double giou = 0.0;  // mean per-sample IoU
  double ciou = 0.0;  // cumulative intersection over cumulative union
};

inline ImageMetrics image_metrics(std::span<const std::pair<Mask, Mask>> samples) {
  if (samples.empty()) throw PreconditionError("image metrics need at least one sample");
  ImageMetrics m;
  std::int64_t inter = 0, uni = 0;
  for (const auto& [pred, gt] : samples) {
    const auto [i, u] = intersection_union(pred, gt);
    m.giou += u == 0 ? 1.0 : static_cast<double>(i) / static_cast<double>(u);
    inter += i;
    uni += u;
  }
  m.giou /= static_cast<double>(samples.size());
  m.ciou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  return m;
}

struct EvalOptions {
  SimulatorConfig sim;
  int max_turns = 5;
  double alpha = 0.5;
  std::optional<Thresholds> thresholds;
  double boundary_tolerance = -1.0;  // < 0 selects the default
  bool timing = false;
};

struct SampleResult {
  std::uint64_t seed = 0;
  DifficultyTier tier = DifficultyTier::Simple;
  int turns = 0;
  RewardBreakdown reward;
  double J = 0.0, F = 0.0;
  double seconds = 0.0;
  Trajectory trajectory;
};

struct TierSummary {
  double J = 0, F = 0, JF = 0, mean_turns = 0, mean_time_s = 0;
  int n = 0;
};

struct TierReport {
  std::array<TierSummary, 3> tiers;  // simple, medium, difficult
  TierSummary overall;
  bool timed = false;
};

struct EvalResult {
  TierReport report;
  std::vector<SampleResult> samples;
};

inline TierSummary summarize_samples(std::span<const SampleResult* const> xs) {
  TierSummary s;
  s.n = static_cast<int>(xs.size());
  if (s.n == 0) return s;
  for (const auto* r : xs) {
    s.J += r->J;
    s.F += r->F;
    s.mean_turns += r->turns;
    s.mean_time_s += r->seconds;
  }
  s.J /= s.n;
  s.F /= s.n;
  s.mean_turns /= s.n;
  s.mean_time_s /= s.n;
  s.JF = 0.5 * (s.J + s.F);
  return s;
}

template <TokenSampler Sampler>
SampleResult evaluate_scene(const Scene& scene, Sampler&& sampler, const EvalOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  SampleResult r;
  r.seed = scene.seed;
  r.tier = scene.tier;
  r.trajectory = run_episode(scene, sampler, opt.sim, opt.max_turns);
  const auto th = opt.thresholds.value_or(Thresholds::for_grid(scene.grid));
  r.trajectory.reward = score_trajectory(scene, r.trajectory, opt.alpha, th);
  r.reward = r.trajectory.reward;
  r.turns = r.trajectory.asks();
  const auto pred = propagate_mask(scene, r.trajectory.commit);
  const auto gt = object_masks(scene.target(), scene.grid);
  const double tol = opt.boundary_tolerance >= 0 ? opt.boundary_tolerance : default_boundary_tolerance(scene.grid);
  r.J = region_similarity(pred, gt);
  r.F = contour_accuracy(pred, gt, tol);
  if (opt.timing)
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

inline TierReport aggregate(std::span<const SampleResult> samples, bool timed) {
  TierReport rep;
  rep.timed = timed;
  std::array<std::vector<const SampleResult*>, 3> by_tier;
  std::vector<const SampleResult*> all;
  for (const auto& s : samples) {
    by_tier[static_cast<std::size_t>(s.tier)].push_back(&s);
    all.push_back(&s);
  }
  for (std::size_t i = 0; i < 3; ++i) rep.tiers[i] = summarize_samples(by_tier[i]);
  rep.overall = summarize_samples(all);
  return rep;
}

// Greedy decoding over a scenario pack.
inline EvalResult evaluate(const Policy& policy, std::span<const Scene> pack, const EvalOptions& opt) {
  EvalResult out;
  for (const auto& scene : pack) {
    if (!policy.shape().accepts(scene)) throw ConfigError("pack scene does not match the checkpoint's shape");
    out.samples.push_back(evaluate_scene(scene, GreedySampler{&policy}, opt));
  }
  out.report = aggregate(out.samples, opt.timing);
  return out;
}

inline nlohmann::ordered_json summary_json(const TierSummary& s, bool timed) {
  nlohmann::ordered_json j;
  j["J"] = s.J;
  j["F"] = s.F;
  j["JF"] = s.JF;
  j["mean_turns"] = s.mean_turns;
  if (timed) j["mean_time_s"] = s.mean_time_s;
  j["n"] = s.n;
  return j;
}

inline nlohmann::ordered_json report_json(const TierReport& r) {
  nlohmann::ordered_json j;
  for (std::size_t i = 0; i < 3; ++i)
    j["tiers"][std::string(tier_name(static_cast<DifficultyTier>(i)))] = summary_json(r.tiers[i], r.timed);
  j["overall"] = summary_json(r.overall, r.timed);
  return j;
}

inline nlohmann::ordered_json sample_json(const SampleResult& s) {
  nlohmann::ordered_json j;
  j["seed"] = s.seed;
  j["tier"] = std::string(tier_name(s.tier));
  j["K"] = s.turns;
  const auto& r = s.reward;
  j["rewards"] = {{"r_iou", r.r_iou},   {"r_box", r.r_box},   {"r_point", r.r_point}, {"r_keyframe", r.r_keyframe},
                  {"r_ent", r.r_ent},   {"r_eff", r.r_eff},   {"r_traj", r.r_traj},   {"r_turn", r.r_turn},
                  {"total", r.total},   {"clamped", r.clamped}};
  j["J"] = s.J;
  j["F"] = s.F;
  return j;
}

}  // namespace icseg
