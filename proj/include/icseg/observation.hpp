#pragma once

#include <cmath>
#include <vector>

#include "icseg/dialogue.hpp"
#include "icseg/errors.hpp"
#include "icseg/scene.hpp"
#include "icseg/trajectory.hpp"

namespace icseg {

// Dimensions that fix the observation layout and the vocabulary.
struct PolicyShape {
  AttributeSchema schema = AttributeSchema::standard();
  int frames = 6;
  int grid = 64;
  int max_objects = 8;

  static PolicyShape for_scene(const Scene& s) { return {s.schema, s.frames, s.grid, s.max_objects}; }
  Vocabulary vocab() const { return {schema.size(), frames, grid}; }

  bool accepts(const Scene& s) const {
    return s.schema == schema && s.frames == frames && s.grid == grid && s.max_objects == max_objects;
  }

  friend bool operator==(const PolicyShape&, const PolicyShape&) = default;
};

// Offsets of each feature group inside the base block.
//
// Per slot:    presence | attribute one-hots | T boxes (x1,y1,x2,y2)/S | candidate weight
// Global:      query (flag + one-hot per attribute) | answers (same) | phase one-hot |
//              turns / max_turns | resolved flag | residual entropy ratio |
//              split score per attribute | candidate area per frame |
//              chosen keyframe one-hot | coordinate cue (one entry per grid cell)
//
// The privileged block has one entry per slot, attribute, frame and grid cell
// and is read through the same first-layer weights as the candidate weight,
// split score, frame area and coordinate cue groups respectively.
struct ObservationLayout {
  PolicyShape shape;
  int per_slot = 0;
  int slot_weight = 0;  // offset of the candidate weight within a slot
  int slots = 0, query = 0, answers = 0, phase = 0, turns = 0, resolved = 0, entropy = 0;
  int split = 0, frame_area = 0, chosen_frame = 0, cue = 0;
  int base_dim = 0;
  int privileged_dim = 0;

  explicit ObservationLayout(const PolicyShape& s) : shape(s) {
    const int A = s.schema.size();
    const int V = s.schema.total_values();
    per_slot = 1 + V + 4 * s.frames + 1;
    slot_weight = per_slot - 1;
    int off = 0;
    slots = off;
    off += per_slot * s.max_objects;
    query = off;
    off += A + V;
    answers = off;
    off += A + V;
    phase = off;
    off += kNumPhases;
    turns = off++;
    resolved = off++;
    entropy = off++;
    split = off;
    off += A;
    frame_area = off;
    off += s.frames;
    chosen_frame = off;
    off += s.frames;
    cue = off;
    off += s.grid;
    base_dim = off;
    privileged_dim = s.max_objects + A + s.frames + s.grid;
  }

  // Base-block index that privileged entry i is added onto.
  int privileged_target(int i) const {
    const int N = shape.max_objects, A = shape.schema.size(), T = shape.frames;
    if (i < N) return slots + i * per_slot + slot_weight;
    i -= N;
    if (i < A) return split + i;
    i -= A;
    if (i < T) return frame_area + i;
    i -= T;
    return cue + i;
  }
};

struct Observation {
  std::vector<double> base;
  std::vector<double> privileged;  // all zero in the student view
  Phase phase = Phase::Dialogue;
  bool commit_forced = false;

  bool is_student_view() const {
    for (double v : privileged)
      if (v != 0.0) return false;
    return true;
  }
};

namespace detail {

inline int coordinate_cell(const Box& b, Phase p, int grid) {
  const auto cells = commit_cells(b, grid);
  return cells[static_cast<std::size_t>(static_cast<int>(p) - static_cast<int>(Phase::X1))];
}

inline int ground_truth_cell(const PrivilegedContext& g, Phase p, int grid) {
  const double S = grid;
  const Box b{static_cast<int>(std::lround(g.box[0] * S)), static_cast<int>(std::lround(g.box[1] * S)),
              static_cast<int>(std::lround(g.box[2] * S)), static_cast<int>(std::lround(g.box[3] * S))};
  return coordinate_cell(b, p, grid);
}

}  // namespace detail

// Builds the observation for the state's current phase. When `guidance` is
// given the privileged block is filled for that phase: attribute advice while
// in dialogue, the target slot and keyframe while choosing a frame, and the
// target slot and ground-truth cell while emitting coordinates.
inline Observation observe(const ObservationLayout& L, const EpisodeState& st,
                           const PrivilegedContext* guidance = nullptr) {
  const Scene& scene = st.scene();
  const PolicyShape& shape = L.shape;
  if (!shape.accepts(scene)) throw ConfigError("scene dimensions do not match the policy shape");
  const AttributeSchema& schema = shape.schema;
  const int A = schema.size();
  const int T = shape.frames;
  const double S = shape.grid;

  Observation obs;
  obs.base.assign(static_cast<std::size_t>(L.base_dim), 0.0);
  obs.privileged.assign(static_cast<std::size_t>(L.privileged_dim), 0.0);
  obs.phase = st.phase();
  obs.commit_forced = st.commit_forced();
  auto& x = obs.base;
  auto at = [&x](int i) -> double& { return x[static_cast<std::size_t>(i)]; };

  const auto& cands = st.candidates();
  const int n = static_cast<int>(cands.size());
  const double w = n > 0 ? 1.0 / n : 0.0;

  for (const auto& o : scene.objects) {
    if (!o.present) continue;
    const int base = L.slots + o.slot_id * L.per_slot;
    at(base) = 1.0;
    for (int a = 0; a < A; ++a) at(base + 1 + schema.value_offset(a) + o.attrs[static_cast<std::size_t>(a)]) = 1.0;
    const int boxes = base + 1 + schema.total_values();
    for (int t = 0; t < T; ++t) {
      const Box& b = o.boxes[static_cast<std::size_t>(t)];
      at(boxes + 4 * t + 0) = b.x1 / S;
      at(boxes + 4 * t + 1) = b.y1 / S;
      at(boxes + 4 * t + 2) = b.x2 / S;
      at(boxes + 4 * t + 3) = b.y2 / S;
    }
  }
  for (int slot : cands) at(L.slots + slot * L.per_slot + L.slot_weight) = w;

  for (const auto& q : scene.query) {
    at(L.query + q.attr) = 1.0;
    at(L.query + A + schema.value_offset(q.attr) + q.value) = 1.0;
  }
  for (const auto& ans : st.answers()) {
    at(L.answers + ans.attr) = 1.0;
    at(L.answers + A + schema.value_offset(ans.attr) + ans.value) = 1.0;
  }
  at(L.phase + static_cast<int>(st.phase())) = 1.0;
  at(L.turns) = st.max_turns() > 0 ? static_cast<double>(st.turns()) / st.max_turns() : 1.0;
  at(L.resolved) = n == 1 ? 1.0 : 0.0;
  const int m = st.initial_candidates();
  at(L.entropy) = (n >= 1 && m >= 2) ? std::log2(static_cast<double>(n)) / std::log2(static_cast<double>(m)) : 0.0;

  if (n >= 2) {
    for (int a = 0; a < A; ++a) {
      bool answered = false;
      for (const auto& ans : st.answers()) answered = answered || ans.attr == a;
      if (answered) continue;
      const int worst = worst_case_survivors(scene, cands, a);
      at(L.split + a) = static_cast<double>(n - worst) / (n - 1);
    }
  }

  if (n >= 1) {
    double peak = 0.0;
    std::vector<double> area(static_cast<std::size_t>(T), 0.0);
    for (int t = 0; t < T; ++t) {
      for (int slot : cands) area[static_cast<std::size_t>(t)] += w * scene.find(slot)->boxes[static_cast<std::size_t>(t)].area();
      peak = std::max(peak, area[static_cast<std::size_t>(t)]);
    }
    for (int t = 0; t < T; ++t) at(L.frame_area + t) = peak > 0 ? area[static_cast<std::size_t>(t)] / peak : 0.0;
  }

  if (st.keyframe() >= 0) at(L.chosen_frame + st.keyframe()) = 1.0;
  if (is_coordinate(st.phase())) {
    for (int slot : cands) {
      const Box& b = scene.find(slot)->boxes[static_cast<std::size_t>(st.keyframe())];
      at(L.cue + detail::coordinate_cell(b, st.phase(), shape.grid)) += w;
    }
  }

  if (guidance != nullptr) {
    auto& p = obs.privileged;
    const int N = shape.max_objects;
    auto pat = [&p](int i) -> double& { return p[static_cast<std::size_t>(i)]; };
    if (st.phase() == Phase::Dialogue) {
      for (int a = 0; a < A; ++a) pat(N + a) = guidance->best_split[static_cast<std::size_t>(a)];
      for (std::size_t k = 0; k < guidance->redundant.size(); ++k)
        if (guidance->redundant[k] != 0) pat(N + guidance->asked[k]) = -1.0;
    } else {
      for (int s = 0; s < N; ++s) pat(s) = guidance->target[static_cast<std::size_t>(s)];
      if (st.phase() == Phase::Keyframe) {
        for (int t = 0; t < T; ++t) pat(N + A + t) = guidance->keyframe[static_cast<std::size_t>(t)];
      } else {
        pat(N + A + T + detail::ground_truth_cell(*guidance, st.phase(), shape.grid)) = 1.0;
      }
    }
  }
  return obs;
}

// Re-creates the observation sequence of a finished trajectory, using the
// recorded answers rather than re-querying the simulator.
inline std::vector<Observation> replay_observations(const ObservationLayout& L, const Scene& scene,
                                                    const Trajectory& traj,
                                                    const PrivilegedContext* guidance = nullptr) {
  if (traj.scene_seed != scene.seed) throw IntegrityError("trajectory was recorded on a different scene");
  EpisodeState st(scene, traj.max_turns);
  std::vector<Observation> out;
  out.reserve(traj.tokens.size());
  std::size_t turn = 0;
  for (const auto& step : traj.tokens) {
    if (st.done() || st.phase() != step.phase || !st.is_legal(step.token))
      throw IntegrityError("trajectory token does not replay against its scene");
    out.push_back(observe(L, st, guidance));
    if (st.phase() == Phase::Dialogue && st.vocab().is_ask(step.token)) {
      if (turn >= traj.turns.size() || traj.turns[turn].asked_attr != step.token)
        throw IntegrityError("trajectory dialogue turns do not match its ASK tokens");
      st.advance(step.token, traj.turns[turn++].answer_value);
    } else {
      st.advance(step.token);
    }
  }
  if (!st.done() || turn != traj.turns.size()) throw IntegrityError("trajectory is incomplete");
  return out;
}

}  // namespace icseg
