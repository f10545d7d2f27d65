#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "icseg/checkpoint.hpp"
#include "icseg/higrpo.hpp"

using namespace icseg;

namespace {

ScenarioSource small_source() {
  ScenarioSource s;
  s.generator.grid = 16;
  s.generator.frames = 4;
  s.generator.max_objects = 6;
  return s;
}

HiGrpoConfig small_config(std::uint64_t seed) {
  HiGrpoConfig c;
  c.group_size = 4;
  c.scenes_per_step = 2;
  c.total_steps = 20;
  c.seed = seed;
  c.learning_rate = 0.1;
  return c;
}

}  // namespace

TEST(Advantages, Fixture) {
  const std::vector<double> r{2.5, 1.0, 1.0, 3.5};
  const auto a = sequence_advantages(r);
  const std::vector<double> want{0.4714045207910317, -0.9428090415820634, -0.9428090415820634, 1.414213562373095};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a[i], want[i], 1e-12);
  const auto st = group_stats(r);
  EXPECT_EQ(st.mean, 2.0);
  EXPECT_NEAR(st.stddev * st.stddev, 1.125, 1e-15);
}

TEST(Advantages, ShiftAndScaleInvariant) {
  Rng rng(1);
  for (int c = 0; c < 2000; ++c) {
    std::vector<double> r(static_cast<std::size_t>(rng.range(2, 12)));
    for (auto& x : r) x = rng.uniform(-2, 2);
    const auto a = sequence_advantages(r);
    const double shift = rng.uniform(-5, 5), scale = rng.uniform(0.5, 4);
    auto t = r;
    for (auto& x : t) x = scale * x + shift;
    const auto b = sequence_advantages(t);
    for (std::size_t i = 0; i < r.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-9);
  }
}

TEST(Advantages, DegenerateGroupsGiveZeros) {
  EXPECT_EQ(sequence_advantages(std::vector<double>{1.5, 1.5, 1.5}), std::vector<double>(3, 0.0));
  EXPECT_EQ(sequence_advantages(std::vector<double>{1e6, 1e6 + 1e-9}), std::vector<double>(2, 0.0));
  EXPECT_THROW(sequence_advantages(std::vector<double>{1.0}), ConfigError);
}

TEST(HierarchicalAdvantage, AlgorithmArithmetic) {
  const std::vector<double> f{1.5};
  EXPECT_NEAR(hierarchical_advantages(1.0, f, 0.5, 0.2)[0], 1.1, 1e-12);
  EXPECT_NEAR(hierarchical_advantages(-1.0, f, 0.5, 0.2)[0], -0.9, 1e-12);
  // Inside the clip band: A * ((1 - l) + l * f) and A * ((1 - l) + l / f).
  const std::vector<double> g{1.1};
  EXPECT_NEAR(hierarchical_advantages(2.0, g, 0.5, 0.2)[0], 2.0 * (0.5 + 0.55), 1e-12);
  EXPECT_NEAR(hierarchical_advantages(-2.0, g, 0.5, 0.2)[0], -2.0 * (0.5 + 0.5 / 1.1), 1e-12);
}

TEST(HierarchicalAdvantage, LambdaZeroIsIdentity) {
  Rng rng(2);
  for (int c = 0; c < 5000; ++c) {
    const double A = rng.uniform(-3, 3);
    const std::vector<double> f{std::exp(rng.uniform(-5, 5)), std::exp(rng.uniform(-5, 5))};
    for (double x : hierarchical_advantages(A, f, 0.0, rng.uniform(0.01, 0.99))) ASSERT_EQ(x, A);
  }
  EXPECT_THROW(hierarchical_advantages(1.0, std::vector<double>{1.0}, 1.5, 0.2), PreconditionError);
}

TEST(HierarchicalAdvantage, BoundsAndSign) {
  Rng rng(3);
  for (int c = 0; c < 10000; ++c) {
    const double A = rng.bernoulli(0.5) ? rng.uniform(0.01, 3) : -rng.uniform(0.01, 3);
    const double lambda = rng.uniform(), eps = rng.uniform(0.01, 0.99);
    const std::vector<double> f{std::exp(rng.uniform(-6, 6))};
    const double at = hierarchical_advantages(A, f, lambda, eps)[0];
    ASSERT_GT(at * A, 0.0);
    ASSERT_GE(at / A, 1 - lambda * eps - 1e-12);
    ASSERT_LE(at / A, 1 + lambda * eps + 1e-12);
  }
}

TEST(Factors, NoGuidanceSignalGivesOne) {
  // With zero weights the teacher and student views score every token alike.
  const auto src = small_source();
  const ObservationLayout L(src.shape());
  const Policy p(src.shape(), PolicyParams::zeros(L.base_dim, 8, src.shape().vocab().size()));
  const Scene s = src.draw(5);
  const auto t = run_episode(s, scripted::BestSplit{}, SimulatorConfig{}, 5);
  for (double f : token_factors(p, s, t, expert_guidance(s, t))) EXPECT_EQ(f, 1.0);
}

TEST(Factors, LogSpaceMatchesDirectRatio) {
  const auto src = small_source();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Policy p = Policy::initial(src.shape(), 8, seed);
    for (double& w : p.params().w) w *= 10.0;
    const Scene s = src.draw(seed);
    Rng rng(seed);
    const auto t = run_episode(s, PolicySampler{&p, &rng}, SimulatorConfig{}, 5);
    const auto g = expert_guidance(s, t);
    const auto f = token_factors(p, s, t, g);
    const auto teacher = replay_observations(p.layout(), s, t, &g);
    const auto student = replay_observations(p.layout(), s, t);
    for (std::size_t i = 0; i < f.size(); ++i) {
      const int tok = t.tokens[i].token;
      const double direct = std::exp(p.forward(teacher[i]).logprob[static_cast<std::size_t>(tok)]) /
                            std::exp(p.forward(student[i]).logprob[static_cast<std::size_t>(tok)]);
      ASSERT_NEAR(f[i], direct, 1e-10 * std::max(1.0, direct));
    }
  }
}

TEST(Surrogate, RatioOneGradientIsAdvantageWeightedScore) {
  const auto src = small_source();
  Policy p = Policy::initial(src.shape(), 8, 4);
  auto cfg = small_config(4);
  Trainer tr(cfg, src, p);
  tr.collect(0.5);
  const auto& groups = tr.last_groups();
  // Reference: sum over groups/trajectories/tokens of w * grad log pi.
  std::vector<double> want(p.params().count(), 0.0);
  double value = 0.0;
  const double B = static_cast<double>(groups.size());
  for (const auto& grp : groups) {
    const double G = static_cast<double>(grp.trajectories.size());
    for (const auto& t : grp.trajectories) {
      const auto obs = replay_observations(p.layout(), *grp.scene, t);
      for (std::size_t i = 0; i < obs.size(); ++i) {
        const double w = t.advantages[i] / (B * G * static_cast<double>(t.length()));
        value += w;
        p.backprop(p.forward(obs[i]), t.tokens[i].token, w, want);
      }
    }
  }
  const auto og = gradient(p, [&](Tape& tape) { return surrogate_objective(tape, p, groups, cfg.clip_eps); });
  EXPECT_NEAR(og.value, value, 1e-12);
  for (std::size_t k = 0; k < want.size(); ++k) ASSERT_NEAR(og.grad[k], want[k], 1e-12);
}

TEST(Surrogate, ClipActiveTokensContributeNoGradient) {
  const auto src = small_source();
  Policy p = Policy::initial(src.shape(), 8, 5);
  auto cfg = small_config(5);
  Trainer tr(cfg, src, p);
  tr.collect(0.0);
  auto groups = tr.last_groups();
  // Pretend every token was sampled with probability e^-1 times the current
  // one: ratio e > 1 + eps. Positive advantages then sit on the flat clipped
  // branch; negative ones keep the unclipped (smaller) branch.
  for (auto& g : groups)
    for (auto& t : g.trajectories)
      for (auto& s : t.tokens) s.logprob -= 1.0;
  std::vector<double> want(p.params().count(), 0.0);
  const double B = static_cast<double>(groups.size());
  for (const auto& grp : groups) {
    const double G = static_cast<double>(grp.trajectories.size());
    for (const auto& t : grp.trajectories) {
      const auto obs = replay_observations(p.layout(), *grp.scene, t);
      for (std::size_t i = 0; i < obs.size(); ++i) {
        if (t.advantages[i] >= 0) continue;
        const double ratio = std::exp(1.0);
        p.backprop(p.forward(obs[i]), t.tokens[i].token, ratio * t.advantages[i] / (B * G * static_cast<double>(t.length())), want);
      }
    }
  }
  const auto og = gradient(p, [&](Tape& tape) { return surrogate_objective(tape, p, groups, cfg.clip_eps); });
  for (std::size_t k = 0; k < want.size(); ++k) ASSERT_NEAR(og.grad[k], want[k], 1e-10);
}

TEST(Surrogate, GradientMatchesFiniteDifferences) {
  const auto src = small_source();
  Policy sampler = Policy::initial(src.shape(), 8, 6);
  auto cfg = small_config(6);
  Trainer tr(cfg, src, sampler);
  tr.collect(0.5);
  const auto groups = tr.last_groups();
  Policy p = sampler;
  Rng jitter(1);
  for (double& w : p.params().w) w += jitter.uniform(-0.03, 0.03);
  const auto og = gradient(p, [&](Tape& tape) { return surrogate_objective(tape, p, groups, cfg.clip_eps); });
  const double h = 1e-5;
  for (std::size_t i = 0; i < p.params().count(); i += 5) {
    Policy a = p, b = p;
    a.params().w[i] += h;
    b.params().w[i] -= h;
    const double fd = (surrogate_loss(a, groups, cfg.clip_eps) - surrogate_loss(b, groups, cfg.clip_eps)) / (2 * h);
    ASSERT_NEAR(og.grad[i], fd, 1e-6 * std::max(1.0, std::abs(fd))) << "param " << i;
  }
}

TEST(Trainer, ZeroVarianceGroupsProduceNoUpdate) {
  // Pack with a single scene and a policy that always commits at once to the
  // same cells: every rollout earns the same reward.
  auto src = small_source();
  src.pack = {src.draw(1)};
  const ObservationLayout L(src.shape());
  PolicyParams z = PolicyParams::zeros(L.base_dim, 4, src.shape().vocab().size());
  const Vocabulary v = src.shape().vocab();
  z.w[z.b2() + static_cast<std::size_t>(v.commit())] = 200.0;
  z.w[z.b2() + static_cast<std::size_t>(v.keyframe(0))] = 200.0;
  z.w[z.b2() + static_cast<std::size_t>(v.coord(3))] = 200.0;
  Trainer tr(small_config(1), src, Policy(src.shape(), z));
  tr.step();
  for (const auto& g : tr.last_groups()) EXPECT_TRUE(g.stats.degenerate());
  EXPECT_EQ(tr.policy().params().w, z.w);
}

TEST(Trainer, LambdaScheduleEndpoints) {
  HiGrpoConfig c;
  c.lambda0 = 0.5;
  c.total_steps = 100;
  EXPECT_EQ(c.lambda_at(0), 0.5);
  EXPECT_EQ(c.lambda_at(50), 0.25);
  EXPECT_EQ(c.lambda_at(100), 0.0);
  EXPECT_EQ(c.lambda_at(150), 0.0);
}

TEST(Trainer, ConfigValidation) {
  const auto src = small_source();
  const Policy p = Policy::initial(src.shape(), 4, 1);
  auto bad = [&](auto mutate) {
    HiGrpoConfig c;
    mutate(c);
    EXPECT_THROW(Trainer(c, src, p), ConfigError);
  };
  bad([](HiGrpoConfig& c) { c.group_size = 1; });
  bad([](HiGrpoConfig& c) { c.clip_eps = 0; });
  bad([](HiGrpoConfig& c) { c.lambda0 = 1.5; });
  bad([](HiGrpoConfig& c) { c.alpha = -0.1; });
  bad([](HiGrpoConfig& c) { c.learning_rate = 0; });
}

TEST(Trainer, DeterministicForFixedSeed) {
  const auto src = small_source();
  const Policy p = Policy::initial(src.shape(), 8, 2);
  Trainer a(small_config(3), src, p), b(small_config(3), src, p);
  for (int s = 0; s < 5; ++s) EXPECT_EQ(dynamics_row(a.step()), dynamics_row(b.step()));
  EXPECT_EQ(a.policy().params().w, b.policy().params().w);
  Trainer c(small_config(4), src, p);
  for (int s = 0; s < 5; ++s) c.step();
  EXPECT_NE(a.policy().params().w, c.policy().params().w);
}

TEST(Trainer, ResumeFromCheckpointMatchesUninterruptedRun) {
  const auto src = small_source();
  const Policy p = Policy::initial(src.shape(), 8, 2);
  Trainer full(small_config(7), src, p);
  while (!full.finished()) full.step();

  Trainer first(small_config(7), src, p);
  for (int s = 0; s < 10; ++s) first.step();  // a snapshot-sync boundary
  const auto dir = std::filesystem::temp_directory_path() / "icseg_resume_test";
  std::filesystem::remove_all(dir);
  save_checkpoint(dir / "c.json", first.policy(), 0.0);
  Trainer second(small_config(7), src, load_checkpoint(dir / "c.json"));
  EXPECT_EQ(second.step_index(), 10);
  while (!second.finished()) second.step();
  EXPECT_EQ(second.policy().params().w, full.policy().params().w);
}

TEST(Trainer, ParametersStayFloatRepresentable) {
  const auto src = small_source();
  Trainer tr(small_config(8), src, Policy::initial(src.shape(), 8, 8));
  for (int s = 0; s < 3; ++s) tr.step();
  for (double w : tr.policy().params().w) ASSERT_EQ(w, static_cast<double>(static_cast<float>(w)));
}
