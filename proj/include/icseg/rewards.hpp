#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "icseg/errors.hpp"
#include "icseg/geometry.hpp"
#include "icseg/scene.hpp"
#include "icseg/trajectory.hpp"

namespace icseg {

// Localization tolerances in grid units. The reference values (10 px for the
// box center, 100 px for the point radius) are stated at 864 px resolution
// and are scaled proportionally to the grid.
struct Thresholds {
  double box_center_l1 = 1.0;
  double point_radius = 8.0;

  static Thresholds for_grid(int grid) {
    return {std::ceil(10.0 * grid / 864.0), std::ceil(100.0 * grid / 864.0)};
  }
};

struct TrajectoryTerms {
  double r_iou = 0, r_box = 0, r_point = 0, r_keyframe = 0;
  double sum() const { return r_iou + r_box + r_point + r_keyframe; }
};

inline TrajectoryTerms trajectory_reward(const Scene& scene, const Commit& commit, const Thresholds& th) {
  TrajectoryTerms out;
  const SceneObject* tgt = scene.find(scene.target_id);
  if (tgt == nullptr || !tgt->present) return out;
  if (commit.keyframe < 0 || commit.keyframe >= scene.frames)
    throw PreconditionError("commit keyframe outside the scene's frames");

  std::int64_t max_area = 0;
  for (const auto& b : tgt->boxes) max_area = std::max(max_area, b.area());
  if (max_area == 0) return out;

  const Box& gt = tgt->boxes[static_cast<std::size_t>(commit.keyframe)];
  const Box pred = canonical(commit.box);
  out.r_keyframe = static_cast<double>(gt.area()) / static_cast<double>(max_area);
  if (!pred.empty()) {
    out.r_iou = iou(pred, gt) > 0.5 ? 1.0 : 0.0;
    out.r_box = center_l1(pred, gt) < th.box_center_l1 ? 1.0 : 0.0;
  }
  const double dist = std::hypot(commit.point.x - gt.cx(), commit.point.y - gt.cy());
  out.r_point = (contains(pred, commit.point) && dist <= th.point_radius) ? 1.0 : 0.0;
  return out;
}

// Normalized drop in log2 candidate count over the dialogue.
inline double entropy_reward(int initial, int remaining) {
  if (initial < 2) throw PreconditionError("entropy reward needs M >= 2 (H_0 > 0)");
  if (remaining < 1) throw PreconditionError("entropy reward needs N_K >= 1");
  if (remaining > initial) throw PreconditionError("entropy reward needs N_K <= M");
  const double h0 = std::log2(static_cast<double>(initial));
  return (h0 - std::log2(static_cast<double>(remaining))) / h0;
}

// Fraction of questions that strictly shrank the candidate set. An empty
// dialogue scores 1.
inline double efficiency_reward(int initial, std::span<const int> trace) {
  if (trace.empty()) return 1.0;
  int effective = 0;
  int prev = initial;
  for (int n : trace) {
    if (n < prev) ++effective;
    prev = n;
  }
  return static_cast<double>(effective) / static_cast<double>(trace.size());
}

inline RewardBreakdown total_reward(const TrajectoryTerms& traj, double r_ent, double r_eff, double alpha) {
  if (alpha < 0) throw PreconditionError("alpha must be non-negative");
  RewardBreakdown r;
  r.r_iou = traj.r_iou;
  r.r_box = traj.r_box;
  r.r_point = traj.r_point;
  r.r_keyframe = traj.r_keyframe;
  r.r_ent = r_ent;
  r.r_eff = r_eff;
  r.r_traj = traj.sum();
  r.r_turn = r_ent + r_eff;
  r.total = r.r_traj + alpha * r.r_turn;
  return r;
}

// Full breakdown for a finished trajectory. A residual count of 0 (possible
// only with a noisy simulator) is clamped to 1 and flagged.
inline RewardBreakdown score_trajectory(const Scene& scene, const Trajectory& traj, double alpha,
                                        const Thresholds& th) {
  const int m = traj.initial_candidates;
  int n_final = traj.trace.empty() ? m : traj.trace.back();
  bool clamped = false;
  if (n_final < 1) {
    n_final = 1;
    clamped = true;
  }
  auto r = total_reward(trajectory_reward(scene, traj.commit, th), entropy_reward(m, n_final),
                        efficiency_reward(m, traj.trace), alpha);
  r.clamped = clamped;
  return r;
}

}  // namespace icseg
