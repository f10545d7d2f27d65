#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "icseg/rng.hpp"
#include "icseg/scene.hpp"
#include "icseg/trajectory.hpp"

namespace icseg {

struct SimulatorConfig {
  double noise_rate = 0.0;  // chance an answer is replaced by a wrong value
  std::uint64_t seed = 0;
};

// Scripted stand-in for the user: reports the target's value, or with
// probability noise_rate a uniformly drawn wrong value.
inline int answer_question(const Scene& scene, int asked_attr, const SimulatorConfig& sim, int k) {
  if (asked_attr < 0 || asked_attr >= scene.schema.size())
    throw PreconditionError("asked attribute index out of range");
  const int truth = scene.target().attrs[static_cast<std::size_t>(asked_attr)];
  if (sim.noise_rate <= 0.0) return truth;
  Rng rng(mix_seed({scene.seed, sim.seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(asked_attr)}));
  if (!rng.bernoulli(sim.noise_rate)) return truth;
  return detail::different_value(scene.schema.domain(asked_attr), truth, rng);
}

// Everything a policy may condition on while an episode is in progress.
class EpisodeState {
 public:
  EpisodeState(const Scene& scene, int max_turns)
      : scene_(&scene), vocab_(Vocabulary::for_scene(scene)), max_turns_(max_turns) {
    if (max_turns < 0) throw PreconditionError("max_turns must be >= 0");
    candidates_ = candidate_set(scene, std::span<const Answer>{});
    initial_ = static_cast<int>(candidates_.size());
  }

  const Scene& scene() const { return *scene_; }
  const Vocabulary& vocab() const { return vocab_; }
  Phase phase() const { return phase_; }
  int max_turns() const { return max_turns_; }
  int turns() const { return static_cast<int>(answers_.size()); }
  int initial_candidates() const { return initial_; }
  const std::vector<int>& candidates() const { return candidates_; }
  const std::vector<Answer>& answers() const { return answers_; }
  int keyframe() const { return keyframe_; }
  bool done() const { return done_; }
  bool commit_forced() const { return phase_ == Phase::Dialogue && turns() >= max_turns_; }
  std::pair<int, int> legal_range() const { return vocab_.legal_range(phase_, commit_forced()); }

  bool is_legal(int token) const {
    const auto [lo, hi] = legal_range();
    return token >= lo && token < hi;
  }

  // Applies a token. ASK tokens need the user's answer.
  void advance(int token, std::optional<int> answer = std::nullopt) {
    if (done_ || !is_legal(token))
      throw std::logic_error("token " + std::to_string(token) + " illegal in phase " +
                             std::string(phase_name(phase_)));
    switch (phase_) {
      case Phase::Dialogue:
        if (vocab_.is_ask(token)) {
          if (!answer) throw std::logic_error("ASK token applied without an answer");
          answers_.push_back({token, *answer});
          candidates_ = candidate_set(*scene_, answers_);
        } else {
          phase_ = Phase::Keyframe;
        }
        break;
      case Phase::Keyframe:
        keyframe_ = vocab_.keyframe_of(token);
        phase_ = Phase::X1;
        break;
      default: {
        const int i = static_cast<int>(phase_) - static_cast<int>(Phase::X1);
        cells_[static_cast<std::size_t>(i)] = vocab_.coord_of(token);
        if (phase_ == Phase::PY)
          done_ = true;
        else
          phase_ = static_cast<Phase>(static_cast<int>(phase_) + 1);
      }
    }
  }

  Commit commit() const { return decode_commit(keyframe_, cells_); }

 private:
  const Scene* scene_;
  Vocabulary vocab_;
  int max_turns_;
  int initial_ = 0;
  Phase phase_ = Phase::Dialogue;
  std::vector<Answer> answers_;
  std::vector<int> candidates_;
  int keyframe_ = -1;
  std::array<int, kNumCoordinates> cells_{};
  bool done_ = false;
};

struct TokenChoice {
  int token = 0;
  double logprob = 0.0;
};

// A sampler is any callable TokenChoice(const EpisodeState&).
template <class F>
concept TokenSampler = requires(F f, const EpisodeState& s) {
  { f(s) } -> std::convertible_to<TokenChoice>;
};

// Rolls out one episode. `answerer(attr, k)` supplies the reply to the k-th
// question (k is 1-based).
template <TokenSampler Sampler, class Answerer>
Trajectory run_episode_with(const Scene& scene, Sampler&& sampler, Answerer&& answerer, int max_turns = 5) {
  EpisodeState state(scene, max_turns);
  Trajectory traj;
  traj.scene_seed = scene.seed;
  traj.initial_candidates = state.initial_candidates();
  traj.max_turns = max_turns;
  while (!state.done()) {
    const Phase phase = state.phase();
    const TokenChoice choice = sampler(state);
    if (!state.is_legal(choice.token))
      throw std::logic_error("sampler emitted token outside the phase's legal set");
    traj.tokens.push_back({choice.token, phase, choice.logprob});
    if (phase == Phase::Dialogue && state.vocab().is_ask(choice.token)) {
      const int k = state.turns() + 1;
      const int value = answerer(choice.token, k);
      if (value < 0 || value >= scene.schema.domain(choice.token))
        throw PreconditionError("answer outside the attribute's domain");
      state.advance(choice.token, value);
      const int n = static_cast<int>(state.candidates().size());
      traj.turns.push_back({k, choice.token, value, n});
      traj.trace.push_back(n);
    } else {
      state.advance(choice.token);
    }
  }
  traj.commit = state.commit();
  return traj;
}

template <TokenSampler Sampler>
Trajectory run_episode(const Scene& scene, Sampler&& sampler, const SimulatorConfig& sim, int max_turns = 5) {
  return run_episode_with(
      scene, std::forward<Sampler>(sampler), [&](int attr, int k) { return answer_question(scene, attr, sim, k); },
      max_turns);
}

// Largest group of candidates sharing one value of `attr`: the count that
// survives the least informative answer.
inline int worst_case_survivors(const Scene& scene, const std::vector<int>& cands, int attr) {
  std::vector<int> counts(static_cast<std::size_t>(scene.schema.domain(attr)), 0);
  int worst = 0;
  for (int slot : cands) {
    int& c = counts[static_cast<std::size_t>(scene.find(slot)->attrs[static_cast<std::size_t>(attr)])];
    worst = std::max(worst, ++c);
  }
  return worst;
}

// Attribute (not in `exclude`) minimizing worst-case survivors; lowest index
// wins ties. Returns -1 when every attribute is excluded.
inline int best_split_attribute(const Scene& scene, const std::vector<int>& cands, const std::vector<int>& exclude) {
  int best = -1, best_worst = 0;
  for (int a = 0; a < scene.schema.size(); ++a) {
    if (std::find(exclude.begin(), exclude.end(), a) != exclude.end()) continue;
    const int w = worst_case_survivors(scene, cands, a);
    if (best < 0 || w < best_worst) best = a, best_worst = w;
  }
  return best;
}

// Frame with the largest mask area; earliest frame on ties.
inline int largest_frame(const SceneObject& o) {
  int best = 0;
  for (int t = 1; t < static_cast<int>(o.boxes.size()); ++t)
    if (o.boxes[static_cast<std::size_t>(t)].area() > o.boxes[static_cast<std::size_t>(best)].area()) best = t;
  return best;
}

// Structured expert diagnosis handed to the self-teacher view.
struct PrivilegedContext {
  std::vector<double> target;      // one-hot over slots
  std::vector<double> best_split;  // one-hot over attributes
  std::vector<int> redundant;      // per asked turn: 1 iff N_k == N_{k-1}
  std::vector<int> asked;          // attribute asked at each turn
  std::vector<double> keyframe;    // one-hot over frames
  std::array<double, 4> box{};     // ground-truth box at the keyframe, divided by the grid size
  std::array<double, 2> point{};   // its center, divided by the grid size
};

inline PrivilegedContext expert_guidance(const Scene& scene, const Trajectory& traj) {
  PrivilegedContext g;
  g.target.assign(static_cast<std::size_t>(scene.max_objects), 0.0);
  g.target[static_cast<std::size_t>(scene.target_id)] = 1.0;

  std::vector<int> fixed;
  for (const auto& q : scene.query) fixed.push_back(q.attr);
  const auto c0 = candidate_set(scene, std::span<const Answer>{});
  g.best_split.assign(static_cast<std::size_t>(scene.schema.size()), 0.0);
  const int split = best_split_attribute(scene, c0, fixed);
  if (split >= 0) g.best_split[static_cast<std::size_t>(split)] = 1.0;

  int prev = traj.initial_candidates;
  for (const auto& t : traj.turns) {
    g.redundant.push_back(t.remaining == prev ? 1 : 0);
    g.asked.push_back(t.asked_attr);
    prev = t.remaining;
  }

  const auto& tgt = scene.target();
  const int kf = largest_frame(tgt);
  g.keyframe.assign(static_cast<std::size_t>(scene.frames), 0.0);
  g.keyframe[static_cast<std::size_t>(kf)] = 1.0;
  const Box& b = tgt.boxes[static_cast<std::size_t>(kf)];
  const double S = scene.grid;
  g.box = {b.x1 / S, b.y1 / S, b.x2 / S, b.y2 / S};
  g.point = {b.cx() / S, b.cy() / S};
  return g;
}

// Scripted policies used as references and oracles.
namespace scripted {

// Commits at once and boxes the lowest-slot candidate on its largest frame.
struct ImmediateCommit {
  TokenChoice operator()(const EpisodeState& s) const;
};

// Asks the listed attributes in order, then grounds like BestSplit.
struct FixedQuestions {
  std::vector<int> attrs;
  TokenChoice operator()(const EpisodeState& s) const;
};

// Asks the best-split attribute over the live candidates until one remains
// (or no attribute splits them), then boxes the lowest-slot survivor exactly.
struct BestSplit {
  TokenChoice operator()(const EpisodeState& s) const;
};

inline TokenChoice ground(const EpisodeState& s) {
  const Scene& scene = s.scene();
  const auto& cands = s.candidates();
  const SceneObject* o = cands.empty() ? &scene.objects.front() : scene.find(cands.front());
  const auto& v = s.vocab();
  if (s.phase() == Phase::Dialogue) return {v.commit(), 0.0};
  if (s.phase() == Phase::Keyframe) return {v.keyframe(largest_frame(*o)), 0.0};
  const auto cells = commit_cells(o->boxes[static_cast<std::size_t>(s.keyframe())], scene.grid);
  return {v.coord(cells[static_cast<std::size_t>(static_cast<int>(s.phase()) - static_cast<int>(Phase::X1))]), 0.0};
}

inline TokenChoice ImmediateCommit::operator()(const EpisodeState& s) const { return ground(s); }

inline TokenChoice FixedQuestions::operator()(const EpisodeState& s) const {
  if (s.phase() == Phase::Dialogue && !s.commit_forced() && s.turns() < static_cast<int>(attrs.size()))
    return {attrs[static_cast<std::size_t>(s.turns())], 0.0};
  return ground(s);
}

inline TokenChoice BestSplit::operator()(const EpisodeState& s) const {
  if (s.phase() == Phase::Dialogue && !s.commit_forced() && s.candidates().size() > 1) {
    std::vector<int> asked;
    for (const auto& a : s.answers()) asked.push_back(a.attr);
    const int a = best_split_attribute(s.scene(), s.candidates(), asked);
    if (a >= 0 && worst_case_survivors(s.scene(), s.candidates(), a) < static_cast<int>(s.candidates().size()))
      return {a, 0.0};
  }
  return ground(s);
}

}  // namespace scripted

}  // namespace icseg
