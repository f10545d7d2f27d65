#pragma once

// A second, separately written trajectory-only GRPO trainer. It shares the
// environment plumbing (scene draws, observation encoding, episode state,
// RNG, localization reward) with the library but has its own network
// forward/backward pass, sampler, advantage normalization and update. With
// lambda0 = 0 and alpha = 0 the library trainer must reproduce it bit for bit,
// so the floating-point operation order below mirrors the library's on
// purpose; the independence is in the code path, not in the arithmetic.

#include <cmath>
#include <cstdint>
#include <vector>

#include "icseg/icseg.hpp"

namespace reference {

using namespace icseg;

struct Net {
  int in = 0, hid = 0, out = 0;
  std::vector<double> w;

  double& W1(int h, int j) { return w[static_cast<std::size_t>(h) * in + j]; }
  double& B1(int h) { return w[static_cast<std::size_t>(hid) * in + h]; }
  double& W2(int v, int h) { return w[static_cast<std::size_t>(hid) * in + hid + static_cast<std::size_t>(v) * hid + h]; }
  double& B2(int v) { return w[static_cast<std::size_t>(hid) * in + hid + static_cast<std::size_t>(out) * hid + v]; }
};

struct Activations {
  std::vector<double> x, a, lp;
  int lo = 0, hi = 0;
};

inline Activations run(Net& n, const Observation& obs, const Vocabulary& vocab) {
  Activations r;
  r.x = obs.base;  // student view only
  r.a.resize(static_cast<std::size_t>(n.hid));
  for (int h = 0; h < n.hid; ++h) {
    double pre = n.B1(h);
    for (int j = 0; j < n.in; ++j)
      if (r.x[static_cast<std::size_t>(j)] != 0.0) pre += n.W1(h, j) * r.x[static_cast<std::size_t>(j)];
    r.a[static_cast<std::size_t>(h)] = std::tanh(pre);
  }
  const auto range = vocab.legal_range(obs.phase, obs.commit_forced);
  r.lo = range.first;
  r.hi = range.second;
  r.lp.assign(static_cast<std::size_t>(n.out), -INFINITY);
  double m = -INFINITY;
  for (int v = r.lo; v < r.hi; ++v) {
    double z = n.B2(v);
    for (int h = 0; h < n.hid; ++h) z += n.W2(v, h) * r.a[static_cast<std::size_t>(h)];
    r.lp[static_cast<std::size_t>(v)] = z;
    if (z > m) m = z;
  }
  double s = 0.0;
  for (int v = r.lo; v < r.hi; ++v) s += std::exp(r.lp[static_cast<std::size_t>(v)] - m);
  const double norm = m + std::log(s);
  for (int v = r.lo; v < r.hi; ++v) r.lp[static_cast<std::size_t>(v)] -= norm;
  return r;
}

// d(coef * log pi(token)) added into g.
inline void accumulate(Net& n, const Activations& act, int token, double coef, std::vector<double>& g) {
  std::vector<double> back(static_cast<std::size_t>(n.hid), 0.0);
  const std::size_t w2 = static_cast<std::size_t>(n.hid) * n.in + n.hid;
  const std::size_t b2 = w2 + static_cast<std::size_t>(n.out) * n.hid;
  for (int v = act.lo; v < act.hi; ++v) {
    const double d = coef * ((v == token ? 1.0 : 0.0) - std::exp(act.lp[static_cast<std::size_t>(v)]));
    if (d == 0.0) continue;
    g[b2 + static_cast<std::size_t>(v)] += d;
    for (int h = 0; h < n.hid; ++h) {
      g[w2 + static_cast<std::size_t>(v) * n.hid + h] += d * act.a[static_cast<std::size_t>(h)];
      back[static_cast<std::size_t>(h)] += d * n.W2(v, h);
    }
  }
  const std::size_t b1 = static_cast<std::size_t>(n.hid) * n.in;
  for (int h = 0; h < n.hid; ++h) {
    const double a = act.a[static_cast<std::size_t>(h)];
    const double d = back[static_cast<std::size_t>(h)] * (1.0 - a * a);
    if (d == 0.0) continue;
    g[b1 + static_cast<std::size_t>(h)] += d;
    for (int j = 0; j < n.in; ++j)
      if (act.x[static_cast<std::size_t>(j)] != 0.0)
        g[static_cast<std::size_t>(h) * n.in + j] += d * act.x[static_cast<std::size_t>(j)];
  }
}

struct Rollout {
  std::vector<Observation> obs;
  std::vector<int> tokens;
  double reward = 0.0;
};

inline Rollout roll(Net& n, const ObservationLayout& L, const Scene& scene, int max_turns, Rng& rng,
                    const SimulatorConfig& sim) {
  Rollout r;
  EpisodeState st(scene, max_turns);
  while (!st.done()) {
    Observation o = observe(L, st);
    const Activations act = run(n, o, st.vocab());
    const double u = rng.uniform();
    double c = 0.0;
    int tok = act.hi - 1;
    for (int v = act.lo; v < act.hi; ++v) {
      c += std::exp(act.lp[static_cast<std::size_t>(v)]);
      if (u < c) {
        tok = v;
        break;
      }
    }
    r.obs.push_back(std::move(o));
    r.tokens.push_back(tok);
    if (st.phase() == Phase::Dialogue && st.vocab().is_ask(tok))
      st.advance(tok, answer_question(scene, tok, sim, st.turns() + 1));
    else
      st.advance(tok);
  }
  const auto th = Thresholds::for_grid(scene.grid);
  const auto t = trajectory_reward(scene, st.commit(), th);
  r.reward = t.r_iou + t.r_box + t.r_point + t.r_keyframe;
  return r;
}

struct Options {
  int group_size = 8;
  int scenes_per_step = 1;
  int max_turns = 5;
  double learning_rate = 1e-2;
  int steps = 20;
  std::uint64_t seed = 0;
};

// Runs `steps` updates from `init` and returns the final weights.
inline std::vector<double> train(const ScenarioSource& source, const PolicyParams& init, const Options& o) {
  const PolicyShape shape = source.shape();
  const ObservationLayout L(shape);
  Net n{init.input_dim, init.hidden, init.output, init.w};
  const int B = o.scenes_per_step, G = o.group_size;
  for (int s = 0; s < o.steps; ++s) {
    std::vector<Scene> scenes;
    for (int b = 0; b < B; ++b)
      scenes.push_back(source.draw(mix_seed({o.seed, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(b), 0x5CE4E})));
    std::vector<std::vector<Rollout>> groups(static_cast<std::size_t>(B));
    std::vector<std::vector<double>> adv(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
      for (int i = 0; i < G; ++i) {
        const std::uint64_t k = mix_seed({o.seed, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(i)});
        Rng rng(k ^ 0x7A11);
        groups[static_cast<std::size_t>(b)].push_back(
            roll(n, L, scenes[static_cast<std::size_t>(b)], o.max_turns, rng, SimulatorConfig{0.0, k ^ 0x5111}));
      }
      const auto& grp = groups[static_cast<std::size_t>(b)];
      double mu = 0.0;
      for (const auto& r : grp) mu += r.reward;
      mu /= G;
      double ss = 0.0;
      for (const auto& r : grp) ss += (r.reward - mu) * (r.reward - mu);
      const double sd = std::sqrt(ss / G);
      auto& a = adv[static_cast<std::size_t>(b)];
      a.assign(static_cast<std::size_t>(G), 0.0);
      if (sd > 1e-12 * std::max(1.0, std::abs(mu)))
        for (int i = 0; i < G; ++i) a[static_cast<std::size_t>(i)] = (grp[static_cast<std::size_t>(i)].reward - mu) / sd;
    }

    // With pi_old = pi the ratio is exactly 1 and the clipped surrogate's
    // gradient is A * grad log pi. Leaves are visited last-to-first.
    std::vector<double> g(n.w.size(), 0.0);
    for (int b = B - 1; b >= 0; --b) {
      for (int i = G - 1; i >= 0; --i) {
        const double A = adv[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
        if (A == 0.0) continue;
        const Rollout& r = groups[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
        const double coef = 1.0 / B * (1.0 / G) * (1.0 / static_cast<double>(r.tokens.size())) * A;
        for (int t = static_cast<int>(r.tokens.size()) - 1; t >= 0; --t) {
          const Activations act = run(n, r.obs[static_cast<std::size_t>(t)], shape.vocab());
          accumulate(n, act, r.tokens[static_cast<std::size_t>(t)], coef, g);
        }
      }
    }
    for (std::size_t k = 0; k < n.w.size(); ++k) n.w[k] = static_cast<float>(n.w[k] + o.learning_rate * g[k]);
  }
  return n.w;
}

}  // namespace reference
