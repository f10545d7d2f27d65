#pragma once

#include <functional>
#include <sstream>
#include <string>

#include "icseg/evalkit.hpp"
#include "icseg/io.hpp"
#include "icseg/policy.hpp"

namespace icseg {

// Text table of a scene: one row per object with attributes and boxes.
// The hidden target is marked with '*'.
inline std::string render_scene(const Scene& s) {
  std::ostringstream out;
  out << "scene " << s.seed << " (" << tier_name(s.tier) << ", grid " << s.grid << ", " << s.frames << " frames)\n";
  out << "query:";
  for (const auto& q : s.query) out << " " << s.schema.attributes[static_cast<std::size_t>(q.attr)].name << "=" << q.value;
  out << "\n   slot";
  for (const auto& a : s.schema.attributes) out << " " << a.name;
  out << "  boxes per frame [x1 y1 x2 y2]\n";
  for (const auto& o : s.objects) {
    out << (o.slot_id == s.target_id ? " * " : "   ") << o.slot_id;
    for (int a = 0; a < s.schema.size(); ++a) out << " " << std::string(s.schema.attributes[static_cast<std::size_t>(a)].name.size() - 1, ' ') << o.attrs[static_cast<std::size_t>(a)];
    out << " ";
    for (const auto& b : o.boxes) out << " [" << b.x1 << " " << b.y1 << " " << b.x2 << " " << b.y2 << "]";
    if (!o.present) out << " (absent)";
    out << "\n";
  }
  return out.str();
}

struct PlayOutcome {
  Trajectory trajectory;
  double J = 0, F = 0;
};

using AnswerProvider = std::function<int(int attr, int k)>;

// Runs the policy greedily with answers from `answer`, then scores the
// commit. The policy never sees the answers provider's source, human or not.
inline PlayOutcome play_session(const Policy& policy, const Scene& scene, const AnswerProvider& answer,
                                int max_turns = 5, double alpha = 0.5) {
  if (!policy.shape().accepts(scene)) throw ConfigError("scene does not match the checkpoint's shape");
  PlayOutcome out;
  out.trajectory = run_episode_with(scene, GreedySampler{&policy}, answer, max_turns);
  out.trajectory.reward = score_trajectory(scene, out.trajectory, alpha, Thresholds::for_grid(scene.grid));
  const auto pred = propagate_mask(scene, out.trajectory.commit);
  const auto gt = object_masks(scene.target(), scene.grid);
  out.J = region_similarity(pred, gt);
  out.F = contour_accuracy(pred, gt, default_boundary_tolerance(scene.grid));
  return out;
}

inline Json transcript_json(const Scene& scene, const PlayOutcome& o) {
  Json j;
  j["scene_seed"] = scene.seed;
  j["trajectory"] = trajectory_to_json(o.trajectory);
  j["J"] = o.J;
  j["F"] = o.F;
  j["JF"] = 0.5 * (o.J + o.F);
  return j;
}

}  // namespace icseg
