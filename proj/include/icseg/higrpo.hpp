#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icseg/dialogue.hpp"
#include "icseg/errors.hpp"
#include "icseg/policy.hpp"
#include "icseg/rewards.hpp"
#include "icseg/scene.hpp"

namespace icseg {

struct HiGrpoConfig {
  int group_size = 8;
  double alpha = 0.5;
  double clip_eps = 0.2;     // surrogate ratio clip
  double factor_clip = 0.2;  // self-teacher factor clip
  double lambda0 = 0.5;      // decays linearly to 0 at total_steps
  int sync_interval = 10;    // teacher snapshot refresh period, in steps
  int max_turns = 5;
  double learning_rate = 1e-2;
  int total_steps = 100;
  int scenes_per_step = 1;
  std::uint64_t seed = 0;
  double noise_rate = 0.0;
  std::optional<Thresholds> thresholds;  // defaults to Thresholds::for_grid

  double lambda_at(std::int64_t step) const {
    if (total_steps <= 0) return 0.0;
    const double frac = std::min<double>(1.0, static_cast<double>(step) / total_steps);
    return std::max(0.0, lambda0 * (1.0 - frac));
  }

  void validate() const {
    if (group_size < 2) throw ConfigError("group_size must be >= 2");
    if (!(clip_eps > 0 && clip_eps < 1)) throw ConfigError("clip_eps must lie in (0, 1)");
    if (!(factor_clip > 0 && factor_clip < 1)) throw ConfigError("factor_clip must lie in (0, 1)");
    if (!(lambda0 >= 0 && lambda0 <= 1)) throw ConfigError("lambda0 must lie in [0, 1]");
    if (alpha < 0) throw ConfigError("alpha must be >= 0");
    if (sync_interval < 1) throw ConfigError("sync_interval must be >= 1");
    if (max_turns < 0) throw ConfigError("max_turns must be >= 0");
    if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
    if (scenes_per_step < 1) throw ConfigError("scenes_per_step must be >= 1");
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
    if (!(noise_rate >= 0 && noise_rate <= 1)) throw ConfigError("noise_rate must lie in [0, 1]");
  }
};

// Group statistics; sigma is the population standard deviation.
struct GroupStats {
  double mean = 0.0;
  double stddev = 0.0;
  bool degenerate() const { return !(stddev > 1e-12 * std::max(1.0, std::abs(mean))); }
};

inline GroupStats group_stats(std::span<const double> rewards) {
  GroupStats s;
  for (double r : rewards) s.mean += r;
  s.mean /= static_cast<double>(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - s.mean) * (r - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(rewards.size()));
  return s;
}

// Group-standardized rewards; an all-equal group yields zeros.
inline std::vector<double> sequence_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw ConfigError("advantage group needs at least two rewards");
  const GroupStats s = group_stats(rewards);
  std::vector<double> out(rewards.size(), 0.0);
  if (s.degenerate()) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - s.mean) / s.stddev;
  return out;
}

// f_t = pi(y_t | x, r, y_<t) / pi(y_t | x, y_<t) on the frozen snapshot,
// evaluated in log space. No gradient flows through these values.
inline std::vector<double> token_factors(const Policy& snapshot, const Scene& scene, const Trajectory& traj,
                                         const PrivilegedContext& guidance) {
  const auto teacher = snapshot.sequence_logprobs(scene, traj, &guidance);
  const auto student = snapshot.sequence_logprobs(scene, traj, nullptr);
  std::vector<double> f(teacher.size());
  for (std::size_t t = 0; t < f.size(); ++t) {
    f[t] = std::exp(teacher[t] - student[t]);
    if (!std::isfinite(f[t]) || f[t] <= 0.0)
      throw NumericalError("non-finite self-teacher factor at token " + std::to_string(t));
  }
  return f;
}

// Per-token advantage A_i * ((1 - lambda) + lambda * clip(f^s, 1 - eps_f, 1 + eps_f))
// with s = +1 for positive A_i and -1 otherwise.
inline std::vector<double> hierarchical_advantages(double seq_adv, std::span<const double> factors, double lambda,
                                                   double factor_clip) {
  if (!(lambda >= 0 && lambda <= 1)) throw PreconditionError("lambda must lie in [0, 1]");
  std::vector<double> out(factors.size(), 0.0);
  if (seq_adv == 0.0) return out;
  const bool positive = seq_adv > 0;
  for (std::size_t t = 0; t < factors.size(); ++t) {
    const double directed = positive ? factors[t] : 1.0 / factors[t];
    const double clipped = std::clamp(directed, 1.0 - factor_clip, 1.0 + factor_clip);
    out[t] = seq_adv * ((1.0 - lambda) + lambda * clipped);
  }
  return out;
}

// One sampled group: G trajectories of the same scene with their
// per-token advantages filled in.
struct RolloutGroup {
  const Scene* scene = nullptr;
  std::vector<Trajectory> trajectories;
  GroupStats stats;
  std::vector<double> seq_advantages;
};

// Clipped surrogate averaged over tokens, trajectories and groups. The old
// log-probs are the ones recorded at sampling time.
inline Tape::Var surrogate_objective(Tape& tape, const Policy& policy, std::span<const RolloutGroup> groups,
                                     double clip_eps) {
  Tape::Var total = tape.constant(0.0);
  if (groups.empty()) return total;
  for (const auto& grp : groups) {
    Tape::Var group_sum = tape.constant(0.0);
    for (const auto& traj : grp.trajectories) {
      if (traj.advantages.size() != traj.tokens.size())
        throw IntegrityError("advantage count does not match token count");
      bool any = false;
      for (double a : traj.advantages) any = any || a != 0.0;
      if (!any) continue;
      const auto obs = replay_observations(policy.layout(), *grp.scene, traj);
      Tape::Var traj_sum = tape.constant(0.0);
      for (std::size_t t = 0; t < obs.size(); ++t) {
        const double adv = traj.advantages[t];
        Tape::Var lp = tape.logprob(obs[t], traj.tokens[t].token);
        Tape::Var ratio = tape.exp(lp - tape.constant(traj.tokens[t].logprob));
        Tape::Var unclipped = ratio * adv;
        Tape::Var clipped = tape.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv;
        traj_sum = traj_sum + tape.min(unclipped, clipped);
      }
      group_sum = group_sum + traj_sum * (1.0 / static_cast<double>(traj.tokens.size()));
    }
    total = total + group_sum * (1.0 / static_cast<double>(grp.trajectories.size()));
  }
  return total * (1.0 / static_cast<double>(groups.size()));
}

inline double surrogate_loss(const Policy& policy, std::span<const RolloutGroup> groups, double clip_eps) {
  Tape tape(policy);
  return surrogate_objective(tape, policy, groups, clip_eps).value();
}

// Where training scenes come from: a fixed pack or the generator.
struct ScenarioSource {
  std::vector<Scene> pack;
  AttributeSchema schema = AttributeSchema::standard();
  GeneratorOptions generator;
  std::vector<DifficultyTier> tiers{DifficultyTier::Simple, DifficultyTier::Medium, DifficultyTier::Difficult};

  PolicyShape shape() const {
    if (!pack.empty()) return PolicyShape::for_scene(pack.front());
    return {schema, generator.frames, generator.grid, generator.max_objects};
  }

  Scene draw(std::uint64_t seed) const {
    Rng rng(seed);
    if (!pack.empty()) return pack[static_cast<std::size_t>(rng.below(pack.size()))];
    const auto tier = tiers[static_cast<std::size_t>(rng.below(tiers.size()))];
    return generate_scene(schema, tier, rng.next(), generator);
  }
};

// Per-step training dynamics (one CSV row).
struct StepStats {
  std::int64_t step = 0;
  double lambda = 0;
  double r_iou = 0, r_box = 0, r_point = 0, r_keyframe = 0, r_ent = 0, r_eff = 0, total = 0;
  double turns = 0, success_rate = 0, tokens_correct = 0, tokens_wrong = 0;
  int clamped = 0;
  double objective = 0;
};

inline const char* kDynamicsHeader =
    "step,lambda,mean_r_iou,mean_r_box,mean_r_point,mean_r_keyframe,mean_r_ent,mean_r_eff,mean_total,"
    "mean_turns,success_rate,mean_tokens_correct,mean_tokens_wrong";

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string dynamics_row(const StepStats& s) {
  std::string out = std::to_string(s.step);
  for (double v : {s.lambda, s.r_iou, s.r_box, s.r_point, s.r_keyframe, s.r_ent, s.r_eff, s.total, s.turns,
                   s.success_rate, s.tokens_correct, s.tokens_wrong})
    out += "," + format_real(v);
  return out;
}

class Trainer {
 public:
  Trainer(HiGrpoConfig cfg, ScenarioSource source, Policy initial)
      : cfg_(std::move(cfg)), source_(std::move(source)), policy_(std::move(initial)), snapshot_(policy_) {
    cfg_.validate();
    thresholds_ = cfg_.thresholds.value_or(Thresholds::for_grid(policy_.shape().grid));
  }

  const Policy& policy() const { return policy_; }
  const HiGrpoConfig& config() const { return cfg_; }
  std::int64_t step_index() const { return policy_.params().step; }
  bool finished() const { return step_index() >= cfg_.total_steps; }
  const std::vector<RolloutGroup>& last_groups() const { return groups_; }
  const std::vector<Scene>& last_scenes() const { return scenes_; }

  // Samples the groups of the current step and fills in rewards, factors and
  // per-token advantages without touching the parameters.
  void collect(double lambda) {
    const std::int64_t s = step_index();
    if (!synced_ || s % cfg_.sync_interval == 0) {
      snapshot_ = policy_;
      synced_ = true;
    }
    const int B = cfg_.scenes_per_step, G = cfg_.group_size;
    scenes_.clear();
    scenes_.reserve(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) scenes_.push_back(source_.draw(mix_seed({cfg_.seed, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(b), 0x5CE4E})));
    groups_.assign(static_cast<std::size_t>(B), {});
    for (int b = 0; b < B; ++b) {
      const Scene& scene = scenes_[static_cast<std::size_t>(b)];
      if (!policy_.shape().accepts(scene)) throw ConfigError("training scene does not match the policy shape");
      RolloutGroup& grp = groups_[static_cast<std::size_t>(b)];
      grp.scene = &scene;
      std::vector<double> rewards;
      for (int i = 0; i < G; ++i) {
        const auto key = {cfg_.seed, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(i)};
        Rng rng(mix_seed(key) ^ 0x7A11);
        SimulatorConfig sim{cfg_.noise_rate, mix_seed(key) ^ 0x5111};
        Trajectory traj = run_episode(scene, PolicySampler{&policy_, &rng}, sim, cfg_.max_turns);
        traj.reward = score_trajectory(scene, traj, cfg_.alpha, thresholds_);
        rewards.push_back(traj.reward.total);
        grp.trajectories.push_back(std::move(traj));
      }
      grp.stats = group_stats(rewards);
      grp.seq_advantages = sequence_advantages(rewards);
      for (int i = 0; i < G; ++i) {
        Trajectory& traj = grp.trajectories[static_cast<std::size_t>(i)];
        const PrivilegedContext guide = expert_guidance(scene, traj);
        traj.factors = token_factors(snapshot_, scene, traj, guide);
        traj.advantages = hierarchical_advantages(grp.seq_advantages[static_cast<std::size_t>(i)], traj.factors,
                                                  lambda, cfg_.factor_clip);
      }
    }
  }

  // One iteration: roll out, score, compute advantages, take one
  // gradient-ascent step. The sampling policy is the current policy, so the
  // old policy is reset every step.
  StepStats step() {
    const std::int64_t s = step_index();
    const double lambda = cfg_.lambda_at(s);
    collect(lambda);
    const auto og = gradient(policy_, [&](Tape& tape) {
      return surrogate_objective(tape, policy_, groups_, cfg_.clip_eps);
    });
    auto& w = policy_.params().w;
    for (std::size_t k = 0; k < w.size(); ++k) w[k] += cfg_.learning_rate * og.grad[k];
    policy_.params().round_to_float();
    if (!policy_.params().finite()) throw NumericalError("non-finite parameters after update at step " + std::to_string(s));
    policy_.params().step = s + 1;

    StepStats st = summarize(s, lambda);
    st.objective = og.value;
    return st;
  }

  StepStats summarize(std::int64_t s, double lambda) const {
    StepStats st;
    st.step = s;
    st.lambda = lambda;
    int n = 0, n_ok = 0, n_bad = 0;
    double len_ok = 0, len_bad = 0;
    for (const auto& grp : groups_) {
      for (const auto& t : grp.trajectories) {
        const auto& r = t.reward;
        st.r_iou += r.r_iou;
        st.r_box += r.r_box;
        st.r_point += r.r_point;
        st.r_keyframe += r.r_keyframe;
        st.r_ent += r.r_ent;
        st.r_eff += r.r_eff;
        st.total += r.total;
        st.turns += t.asks();
        st.clamped += r.clamped ? 1 : 0;
        if (r.r_iou > 0) {
          ++n_ok;
          len_ok += static_cast<double>(t.length());
        } else {
          ++n_bad;
          len_bad += static_cast<double>(t.length());
        }
        ++n;
      }
    }
    for (double* v : {&st.r_iou, &st.r_box, &st.r_point, &st.r_keyframe, &st.r_ent, &st.r_eff, &st.total, &st.turns})
      *v /= n;
    st.success_rate = static_cast<double>(n_ok) / n;
    st.tokens_correct = n_ok ? len_ok / n_ok : 0.0;
    st.tokens_wrong = n_bad ? len_bad / n_bad : 0.0;
    return st;
  }

 private:
  HiGrpoConfig cfg_;
  ScenarioSource source_;
  Policy policy_;
  Policy snapshot_;
  bool synced_ = false;
  Thresholds thresholds_;
  std::vector<Scene> scenes_;
  std::vector<RolloutGroup> groups_;
};

}  // namespace icseg
