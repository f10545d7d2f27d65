#pragma once

#include <cstdint>
#include <vector>

#include "icseg/dialogue.hpp"
#include "icseg/errors.hpp"
#include "icseg/higrpo.hpp"
#include "icseg/policy.hpp"
#include "icseg/rng.hpp"

namespace icseg {

// Supervised grounding warm-up. Teaches the keyframe and coordinate phases to
// box the lowest-slot live candidate on its largest frame, after a random
// number of random questions. Dialogue tokens are never supervised, so the
// asking behaviour stays at its initial, untrained state.
struct GroundingWarmup {
  int steps = 0;
  int episodes_per_step = 16;
  double learning_rate = 0.5;
  int max_turns = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (steps < 0) throw ConfigError("warmup steps must be >= 0");
    if (episodes_per_step < 1) throw ConfigError("warmup episodes_per_step must be >= 1");
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("warmup learning_rate must be > 0");
  }
};

// Observation/label pairs for one scripted episode.
inline std::vector<std::pair<Observation, int>> grounding_examples(const Policy& policy, const Scene& scene,
                                                                   int max_turns, Rng& rng) {
  std::vector<std::pair<Observation, int>> out;
  EpisodeState st(scene, max_turns);
  const int asks = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(max_turns, 2) + 1)));
  for (int k = 0; k < asks; ++k) {
    const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(scene.schema.size())));
    st.advance(a, answer_question(scene, a, SimulatorConfig{}, k + 1));
  }
  st.advance(st.vocab().commit());
  while (!st.done()) {
    const TokenChoice label = scripted::ground(st);
    out.emplace_back(policy.observe(st), label.token);
    st.advance(label.token);
  }
  return out;
}

// Mean log-likelihood ascent on scripted grounding; returns the final mean
// log-likelihood.
inline double warm_up_grounding(Policy& policy, const ScenarioSource& source, const GroundingWarmup& cfg) {
  cfg.validate();
  double last = 0.0;
  for (int s = 0; s < cfg.steps; ++s) {
    std::vector<std::pair<Observation, int>> batch;
    for (int e = 0; e < cfg.episodes_per_step; ++e) {
      Rng rng(mix_seed({cfg.seed, 0x6A4D, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(e)}));
      const Scene scene = source.draw(rng.next());
      if (!policy.shape().accepts(scene)) throw ConfigError("warmup scene does not match the policy shape");
      auto ex = grounding_examples(policy, scene, cfg.max_turns, rng);
      for (auto& x : ex) batch.push_back(std::move(x));
    }
    const auto og = gradient(policy, [&](Tape& tape) {
      Tape::Var sum = tape.constant(0.0);
      for (const auto& [obs, token] : batch) sum = sum + tape.logprob(obs, token);
      return sum * (1.0 / static_cast<double>(batch.size()));
    });
    auto& w = policy.params().w;
    for (std::size_t k = 0; k < w.size(); ++k) w[k] += cfg.learning_rate * og.grad[k];
    policy.params().round_to_float();
    if (!policy.params().finite()) throw NumericalError("non-finite parameters during grounding warm-up");
    last = og.value;
  }
  // The shared hidden layer drifts during warm-up and drags the dialogue
  // logits with it; zeroing their output rows restores a uniform asker.
  if (cfg.steps > 0) {
    auto& p = policy.params();
    const Vocabulary v = policy.vocab();
    for (int tok = 0; tok <= v.commit(); ++tok) {
      for (int h = 0; h < p.hidden; ++h) p.w[p.w2() + static_cast<std::size_t>(tok) * p.hidden + h] = 0.0;
      p.w[p.b2() + static_cast<std::size_t>(tok)] = 0.0;
    }
  }
  return last;
}

}  // namespace icseg
