#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "icseg/geometry.hpp"
#include "icseg/scene.hpp"

namespace icseg {

// Decoding phases, in emission order after the dialogue.
enum class Phase : int { Dialogue = 0, Keyframe, X1, Y1, X2, Y2, PX, PY };
inline constexpr int kNumPhases = 8;
inline constexpr int kNumCoordinates = 6;

inline std::string_view phase_name(Phase p) {
  constexpr std::array<std::string_view, kNumPhases> names{"dialogue", "keyframe", "x1", "y1",
                                                           "x2",       "y2",       "px", "py"};
  return names[static_cast<std::size_t>(p)];
}

inline bool is_coordinate(Phase p) { return static_cast<int>(p) >= static_cast<int>(Phase::X1); }

// Token ids: ASK_a | COMMIT | KF_t | COORD_v, contiguous and phase-partitioned.
struct Vocabulary {
  int attributes = 5;
  int frames = 6;
  int grid = 64;

  static Vocabulary for_scene(const Scene& s) { return {s.schema.size(), s.frames, s.grid}; }

  int size() const { return attributes + 1 + frames + grid; }
  int ask(int a) const { return a; }
  int commit() const { return attributes; }
  int keyframe(int t) const { return attributes + 1 + t; }
  int coord(int v) const { return attributes + 1 + frames + v; }

  bool is_ask(int tok) const { return tok >= 0 && tok < attributes; }
  bool is_commit(int tok) const { return tok == attributes; }
  bool is_keyframe(int tok) const { return tok > attributes && tok <= attributes + frames; }
  bool is_coord(int tok) const { return tok > attributes + frames && tok < size(); }
  int keyframe_of(int tok) const { return tok - attributes - 1; }
  int coord_of(int tok) const { return tok - attributes - 1 - frames; }

  // Legal token range [first, last) for a phase. At the turn cap the
  // dialogue phase only admits COMMIT.
  std::pair<int, int> legal_range(Phase p, bool commit_forced) const {
    switch (p) {
      case Phase::Dialogue: return commit_forced ? std::pair{commit(), commit() + 1} : std::pair{0, commit() + 1};
      case Phase::Keyframe: return {keyframe(0), keyframe(0) + frames};
      default: return {coord(0), coord(0) + grid};
    }
  }

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;
};

struct DialogueTurn {
  int k = 0;  // 1-based
  int asked_attr = 0;
  int answer_value = 0;
  int remaining = 0;  // N_k
  friend bool operator==(const DialogueTurn&, const DialogueTurn&) = default;
};

// Residual candidate counts [N_1, ..., N_K]; N_0 = M is implicit.
using CandidateTrace = std::vector<int>;

// The grounding output emitted after COMMIT.
struct Commit {
  int keyframe = 0;
  Box box;
  Point point;
  friend bool operator==(const Commit&, const Commit&) = default;
};

struct RewardBreakdown {
  double r_iou = 0, r_box = 0, r_point = 0, r_keyframe = 0;
  double r_ent = 0, r_eff = 0;
  double r_traj = 0, r_turn = 0, total = 0;
  bool clamped = false;  // N_K = 0 was clamped to 1 before the entropy term
};

struct TokenStep {
  int token = 0;
  Phase phase = Phase::Dialogue;
  double logprob = 0.0;  // under the sampling parameters
};

struct Trajectory {
  std::uint64_t scene_seed = 0;
  int initial_candidates = 0;  // M
  int max_turns = 5;
  std::vector<TokenStep> tokens;
  std::vector<DialogueTurn> turns;
  CandidateTrace trace;
  Commit commit;
  RewardBreakdown reward;
  std::vector<double> factors;     // f_t
  std::vector<double> advantages;  // per-token hierarchical advantage

  int asks() const { return static_cast<int>(turns.size()); }
  std::size_t length() const { return tokens.size(); }

  std::vector<double> sampled_logprobs() const {
    std::vector<double> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.logprob);
    return out;
  }

  std::vector<Answer> answers() const {
    std::vector<Answer> out;
    for (const auto& t : turns) out.push_back({t.asked_attr, t.answer_value});
    return out;
  }
};

// Decodes the six coordinate tokens: each corner token names a grid cell and
// the box spans both named cells inclusively; the point is the named cell's
// center.
inline Commit decode_commit(int keyframe, const std::array<int, kNumCoordinates>& cells) {
  Commit c;
  c.keyframe = keyframe;
  const auto [xa, xb] = std::minmax(cells[0], cells[2]);
  const auto [ya, yb] = std::minmax(cells[1], cells[3]);
  c.box = {xa, ya, xb + 1, yb + 1};
  c.point = {cells[4] + 0.5, cells[5] + 0.5};
  return c;
}

// Inverse of decode_commit for a ground-truth box: the cell each coordinate
// token should name.
inline std::array<int, kNumCoordinates> commit_cells(const Box& b, int grid) {
  auto cell = [grid](double v) { return std::clamp(static_cast<int>(std::floor(v)), 0, grid - 1); };
  return {b.x1, b.y1, b.x2 - 1, b.y2 - 1, cell(b.cx()), cell(b.cy())};
}

}  // namespace icseg
