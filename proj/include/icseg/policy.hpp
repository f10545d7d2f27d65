#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "icseg/dialogue.hpp"
#include "icseg/errors.hpp"
#include "icseg/observation.hpp"
#include "icseg/rng.hpp"

namespace icseg {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Weights of the two-layer policy, flat in layer order W1, b1, W2, b2.
// W1 is hidden x input and W2 is output x hidden, both row-major.
// Values are kept representable as 32-bit floats so checkpoints are exact.
struct PolicyParams {
  int input_dim = 0;
  int hidden = 0;
  int output = 0;
  std::vector<double> w;
  std::int64_t step = 0;

  std::size_t w1() const { return 0; }
  std::size_t b1() const { return static_cast<std::size_t>(hidden) * input_dim; }
  std::size_t w2() const { return b1() + static_cast<std::size_t>(hidden); }
  std::size_t b2() const { return w2() + static_cast<std::size_t>(output) * hidden; }
  std::size_t count() const { return b2() + static_cast<std::size_t>(output); }

  static PolicyParams zeros(int input_dim, int hidden, int output) {
    PolicyParams p{input_dim, hidden, output, {}, 0};
    p.w.assign(p.count(), 0.0);
    return p;
  }

  // Uniform in [-scale, scale], rounded to float.
  static PolicyParams random(int input_dim, int hidden, int output, std::uint64_t seed, double scale = 0.05) {
    PolicyParams p = zeros(input_dim, hidden, output);
    Rng rng(mix_seed({seed, 0x1A17}));
    for (double& v : p.w) v = static_cast<float>(rng.uniform(-scale, scale));
    return p;
  }

  void round_to_float() {
    for (double& v : w) v = static_cast<float>(v);
  }

  bool finite() const {
    for (double v : w)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// Cached activations of one forward pass, enough to backpropagate into the
// parameters.
struct ForwardPass {
  std::vector<int> nz;          // indices of non-zero inputs
  std::vector<double> nz_val;   // their values
  std::vector<double> hidden;   // tanh activations
  std::vector<double> logprob;  // full vocabulary; -inf outside the legal range
  int lo = 0, hi = 0;           // legal token range
};

class Policy {
 public:
  Policy(const PolicyShape& shape, PolicyParams params) : layout_(shape), params_(std::move(params)) {
    if (params_.input_dim != layout_.base_dim || params_.output != shape.vocab().size() || params_.hidden < 1 ||
        params_.w.size() != params_.count())
      throw ConfigError("policy parameters do not match the observation layout (input " +
                        std::to_string(params_.input_dim) + " vs " + std::to_string(layout_.base_dim) +
                        ", output " + std::to_string(params_.output) + " vs " +
                        std::to_string(shape.vocab().size()) + ")");
  }

  static Policy initial(const PolicyShape& shape, int hidden, std::uint64_t seed) {
    const ObservationLayout L(shape);
    return Policy(shape, PolicyParams::random(L.base_dim, hidden, shape.vocab().size(), seed));
  }

  const ObservationLayout& layout() const { return layout_; }
  const PolicyShape& shape() const { return layout_.shape; }
  Vocabulary vocab() const { return layout_.shape.vocab(); }
  const PolicyParams& params() const { return params_; }
  PolicyParams& params() { return params_; }

  Observation observe(const EpisodeState& st, const PrivilegedContext* guidance = nullptr) const {
    return icseg::observe(layout_, st, guidance);
  }

  ForwardPass forward(const Observation& obs) const {
    const auto& p = params_;
    if (static_cast<int>(obs.base.size()) != p.input_dim ||
        static_cast<int>(obs.privileged.size()) != layout_.privileged_dim)
      throw ConfigError("observation size does not match the policy input dimension");

    ForwardPass f;
    // Effective input: base block plus the privileged block scattered onto
    // the features it annotates.
    std::vector<double> x = obs.base;
    for (int i = 0; i < layout_.privileged_dim; ++i) {
      const double v = obs.privileged[static_cast<std::size_t>(i)];
      if (v != 0.0) x[static_cast<std::size_t>(layout_.privileged_target(i))] += v;
    }
    for (int j = 0; j < p.input_dim; ++j) {
      if (x[static_cast<std::size_t>(j)] != 0.0) {
        f.nz.push_back(j);
        f.nz_val.push_back(x[static_cast<std::size_t>(j)]);
      }
    }

    f.hidden.resize(static_cast<std::size_t>(p.hidden));
    for (int h = 0; h < p.hidden; ++h) {
      const double* row = p.w.data() + p.w1() + static_cast<std::size_t>(h) * p.input_dim;
      double pre = p.w[p.b1() + static_cast<std::size_t>(h)];
      for (std::size_t k = 0; k < f.nz.size(); ++k) pre += row[f.nz[k]] * f.nz_val[k];
      if (!std::isfinite(pre)) throw NumericalError("non-finite pre-activation in hidden layer");
      f.hidden[static_cast<std::size_t>(h)] = std::tanh(pre);
    }

    const auto [lo, hi] = vocab().legal_range(obs.phase, obs.commit_forced);
    f.lo = lo;
    f.hi = hi;
    f.logprob.assign(static_cast<std::size_t>(p.output), kNegInf);
    double peak = kNegInf;
    for (int v = lo; v < hi; ++v) {
      const double* row = p.w.data() + p.w2() + static_cast<std::size_t>(v) * p.hidden;
      double z = p.w[p.b2() + static_cast<std::size_t>(v)];
      for (int h = 0; h < p.hidden; ++h) z += row[h] * f.hidden[static_cast<std::size_t>(h)];
      if (!std::isfinite(z)) throw NumericalError("non-finite logit in output layer");
      f.logprob[static_cast<std::size_t>(v)] = z;
      peak = std::max(peak, z);
    }
    double sum = 0.0;
    for (int v = lo; v < hi; ++v) sum += std::exp(f.logprob[static_cast<std::size_t>(v)] - peak);
    const double lse = peak + std::log(sum);
    for (int v = lo; v < hi; ++v) f.logprob[static_cast<std::size_t>(v)] -= lse;
    return f;
  }

  // Masked log-softmax over the vocabulary.
  std::vector<double> log_probs(const Observation& obs) const { return forward(obs).logprob; }

  TokenChoice sample(const Observation& obs, Rng& rng) const {
    const ForwardPass f = forward(obs);
    const double u = rng.uniform();
    double cum = 0.0;
    int pick = f.hi - 1;
    for (int v = f.lo; v < f.hi; ++v) {
      cum += std::exp(f.logprob[static_cast<std::size_t>(v)]);
      if (u < cum) {
        pick = v;
        break;
      }
    }
    return {pick, f.logprob[static_cast<std::size_t>(pick)]};
  }

  // Argmax with ties to the lowest token id.
  TokenChoice greedy(const Observation& obs) const {
    const ForwardPass f = forward(obs);
    int pick = f.lo;
    for (int v = f.lo + 1; v < f.hi; ++v)
      if (f.logprob[static_cast<std::size_t>(v)] > f.logprob[static_cast<std::size_t>(pick)]) pick = v;
    return {pick, f.logprob[static_cast<std::size_t>(pick)]};
  }

  // Accumulates d(objective)/d(params) for a logprob leaf with adjoint g.
  void backprop(const ForwardPass& f, int token, double g, std::vector<double>& grad) const {
    const auto& p = params_;
    std::vector<double> dh(static_cast<std::size_t>(p.hidden), 0.0);
    for (int v = f.lo; v < f.hi; ++v) {
      const double prob = std::exp(f.logprob[static_cast<std::size_t>(v)]);
      const double dz = g * ((v == token ? 1.0 : 0.0) - prob);
      if (dz == 0.0) continue;
      grad[p.b2() + static_cast<std::size_t>(v)] += dz;
      const std::size_t row = p.w2() + static_cast<std::size_t>(v) * p.hidden;
      for (int h = 0; h < p.hidden; ++h) {
        grad[row + static_cast<std::size_t>(h)] += dz * f.hidden[static_cast<std::size_t>(h)];
        dh[static_cast<std::size_t>(h)] += dz * p.w[row + static_cast<std::size_t>(h)];
      }
    }
    for (int h = 0; h < p.hidden; ++h) {
      const double a = f.hidden[static_cast<std::size_t>(h)];
      const double dpre = dh[static_cast<std::size_t>(h)] * (1.0 - a * a);
      if (dpre == 0.0) continue;
      grad[p.b1() + static_cast<std::size_t>(h)] += dpre;
      const std::size_t row = p.w1() + static_cast<std::size_t>(h) * p.input_dim;
      for (std::size_t k = 0; k < f.nz.size(); ++k) grad[row + static_cast<std::size_t>(f.nz[k])] += dpre * f.nz_val[k];
    }
  }

  // Log-probabilities of every token of a finished trajectory. With guidance
  // this is the self-teacher view; without, the student view.
  std::vector<double> sequence_logprobs(const Scene& scene, const Trajectory& traj,
                                        const PrivilegedContext* guidance = nullptr) const {
    const auto obs = replay_observations(layout_, scene, traj, guidance);
    std::vector<double> out;
    out.reserve(obs.size());
    for (std::size_t t = 0; t < obs.size(); ++t)
      out.push_back(forward(obs[t]).logprob[static_cast<std::size_t>(traj.tokens[t].token)]);
    return out;
  }

 private:
  ObservationLayout layout_;
  PolicyParams params_;
};

// Samples from the policy; usable as a run_episode sampler.
struct PolicySampler {
  const Policy* policy;
  Rng* rng;
  TokenChoice operator()(const EpisodeState& s) const { return policy->sample(policy->observe(s), *rng); }
};

struct GreedySampler {
  const Policy* policy;
  TokenChoice operator()(const EpisodeState& s) const { return policy->greedy(policy->observe(s)); }
};

// Minimal reverse-mode tape over scalars whose leaves are policy
// log-probabilities. Objectives are built from Vars and differentiated with
// respect to the policy parameters.
class Tape {
 public:
  class Var {
   public:
    Var() = default;
    double value() const { return tape_->nodes_[static_cast<std::size_t>(id_)].value; }

    friend Var operator+(Var a, Var b) { return a.tape_->binary(a, b, a.value() + b.value(), 1.0, 1.0); }
    friend Var operator-(Var a, Var b) { return a.tape_->binary(a, b, a.value() - b.value(), 1.0, -1.0); }
    friend Var operator*(Var a, Var b) { return a.tape_->binary(a, b, a.value() * b.value(), b.value(), a.value()); }
    friend Var operator*(Var a, double c) { return a.tape_->unary(a, a.value() * c, c); }
    friend Var operator*(double c, Var a) { return a * c; }

   private:
    friend class Tape;
    Var(Tape* t, int id) : tape_(t), id_(id) {}
    Tape* tape_ = nullptr;
    int id_ = -1;
  };

  explicit Tape(const Policy& policy) : policy_(&policy) {}

  // Node builders; da/db are the local partial derivatives.
  Var unary(Var a, double v, double da) { return push({v, a.id_, -1, da, 0.0, -1}); }
  Var binary(Var a, Var b, double v, double da, double db) { return push({v, a.id_, b.id_, da, db, -1}); }

  Var constant(double v) { return push({v, -1, -1, 0.0, 0.0, -1}); }

  // Leaf: log pi(token | obs) under the tape's policy.
  Var logprob(const Observation& obs, int token) {
    ForwardPass f = policy_->forward(obs);
    const double lp = f.logprob[static_cast<std::size_t>(token)];
    passes_.push_back({std::move(f), token});
    return push({lp, -1, -1, 0.0, 0.0, static_cast<int>(passes_.size()) - 1});
  }

  Var exp(Var a) {
    const double e = std::exp(a.value());
    return unary(a, e, e);
  }

  // Subgradient goes to the first argument on ties.
  Var min(Var a, Var b) { return a.value() <= b.value() ? unary(a, a.value(), 1.0) : unary(b, b.value(), 1.0); }

  Var clip(Var a, double lo, double hi) {
    const double v = a.value();
    if (v < lo) return unary(a, lo, 0.0);
    if (v > hi) return unary(a, hi, 0.0);
    return unary(a, v, 1.0);
  }

  // d(root)/d(params) in the parameter layout.
  std::vector<double> backward(Var root) {
    if (!std::isfinite(root.value())) throw NumericalError("non-finite objective value");
    std::vector<double> adj(nodes_.size(), 0.0);
    adj[static_cast<std::size_t>(root.id_)] = 1.0;
    std::vector<double> grad(policy_->params().count(), 0.0);
    for (int i = root.id_; i >= 0; --i) {
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      const double g = adj[static_cast<std::size_t>(i)];
      if (g == 0.0) continue;
      if (n.a >= 0) adj[static_cast<std::size_t>(n.a)] += g * n.da;
      if (n.b >= 0) adj[static_cast<std::size_t>(n.b)] += g * n.db;
      if (n.pass >= 0) {
        const auto& [f, token] = passes_[static_cast<std::size_t>(n.pass)];
        policy_->backprop(f, token, g, grad);
      }
    }
    for (double v : grad)
      if (!std::isfinite(v)) throw NumericalError("non-finite gradient");
    return grad;
  }

 private:
  struct Node {
    double value;
    int a, b;
    double da, db;
    int pass;
  };

  Var push(Node n) {
    nodes_.push_back(n);
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Policy* policy_;
  std::vector<Node> nodes_;
  std::vector<std::pair<ForwardPass, int>> passes_;
};

struct ObjectiveGradient {
  double value = 0.0;
  std::vector<double> grad;
};

// Exact gradient of objective(tape) -> Var with respect to the policy weights.
template <class F>
ObjectiveGradient gradient(const Policy& policy, F&& objective) {
  Tape tape(policy);
  Tape::Var root = objective(tape);
  ObjectiveGradient out;
  out.value = root.value();
  out.grad = tape.backward(root);
  return out;
}

}  // namespace icseg
