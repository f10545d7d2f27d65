#include <gtest/gtest.h>

#include <cmath>

#include "icseg/dialogue.hpp"
#include "icseg/rewards.hpp"

using namespace icseg;

namespace {

// IoU by counting grid cells.
double pixel_iou(const Box& a, const Box& b, int S) {
  std::int64_t inter = 0, uni = 0;
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const bool p = a.contains_cell(x, y), q = b.contains_cell(x, y);
      inter += p && q;
      uni += p || q;
    }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Scene single_target(std::vector<Box> boxes, int grid = 64) {
  Scene s;
  s.frames = static_cast<int>(boxes.size());
  s.grid = grid;
  s.objects = {{0, {0, 0, 0, 0, 0}, std::move(boxes), true}};
  s.target_id = 0;
  return s;
}

}  // namespace

TEST(EntropyReward, Examples) {
  EXPECT_EQ(entropy_reward(4, 1), 1.0);
  EXPECT_EQ(entropy_reward(4, 4), 0.0);
  EXPECT_EQ(entropy_reward(4, 2), 0.5);
  EXPECT_NEAR(entropy_reward(8, 2), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(entropy_reward(6, 3), 1.0 - std::log2(3.0) / std::log2(6.0), 1e-15);
}

TEST(EntropyReward, PreconditionsEnforced) {
  EXPECT_THROW(entropy_reward(1, 1), PreconditionError);
  EXPECT_THROW(entropy_reward(4, 0), PreconditionError);
  EXPECT_THROW(entropy_reward(4, 5), PreconditionError);
}

TEST(EfficiencyReward, Examples) {
  const std::vector<int> a{3, 3, 1};
  EXPECT_NEAR(efficiency_reward(4, a), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(efficiency_reward(4, std::vector<int>{}), 1.0);
  EXPECT_EQ(efficiency_reward(4, std::vector<int>{4, 4}), 0.0);
  EXPECT_EQ(efficiency_reward(4, std::vector<int>{2, 1}), 1.0);
}

TEST(RewardRanges, RandomTraces) {
  Rng rng(5);
  for (int c = 0; c < 20000; ++c) {
    const int m = rng.range(2, 8);
    std::vector<int> trace;
    int prev = m;
    for (int k = rng.range(0, 5); k > 0; --k) trace.push_back(prev = rng.range(1, prev));
    const double e = entropy_reward(m, trace.empty() ? m : trace.back());
    const double f = efficiency_reward(m, trace);
    ASSERT_GE(e, 0.0);
    ASSERT_LE(e, 1.0);
    ASSERT_GE(f, 0.0);
    ASSERT_LE(f, 1.0);
    // r_ent depends only on the endpoint.
    std::vector<int> direct;
    if (!trace.empty()) direct.push_back(trace.back());
    ASSERT_EQ(e, entropy_reward(m, direct.empty() ? m : direct.back()));
  }
}

TEST(KeyframeReward, AreaRatio) {
  const Scene s = single_target({{0, 0, 10, 5}, {0, 0, 10, 10}, {0, 0, 10, 8}});
  const auto th = Thresholds::for_grid(64);
  Commit c;
  c.box = {50, 50, 60, 60};
  c.keyframe = 0;
  EXPECT_EQ(trajectory_reward(s, c, th).r_keyframe, 0.5);
  c.keyframe = 1;
  EXPECT_EQ(trajectory_reward(s, c, th).r_keyframe, 1.0);
  c.keyframe = 2;
  EXPECT_EQ(trajectory_reward(s, c, th).r_keyframe, 0.8);
  c.keyframe = 3;
  EXPECT_THROW(trajectory_reward(s, c, th), PreconditionError);
}

TEST(LocalizationReward, Thresholds) {
  // At 864 cells the tolerances are exactly 10 and 100.
  EXPECT_EQ(Thresholds::for_grid(864).box_center_l1, 10.0);
  EXPECT_EQ(Thresholds::for_grid(864).point_radius, 100.0);
  EXPECT_EQ(Thresholds::for_grid(64).box_center_l1, 1.0);
  EXPECT_EQ(Thresholds::for_grid(64).point_radius, 8.0);
  EXPECT_EQ(Thresholds::for_grid(100).box_center_l1, 2.0);
}

TEST(LocalizationReward, HandExamples) {
  const Scene s = single_target({{10, 10, 30, 30}});
  const auto th = Thresholds::for_grid(64);  // box 1, point 8
  Commit c;
  c.keyframe = 0;
  c.box = {10, 10, 30, 30};
  c.point = {20.5, 20.5};
  auto r = trajectory_reward(s, c, th);
  EXPECT_EQ(r.r_iou, 1.0);
  EXPECT_EQ(r.r_box, 1.0);
  EXPECT_EQ(r.r_point, 1.0);
  EXPECT_EQ(r.sum(), 4.0);

  // Shift by one cell: IoU 380/420 > 0.5, center L1 distance 1 is not < 1.
  c.box = {11, 10, 31, 30};
  r = trajectory_reward(s, c, th);
  EXPECT_EQ(r.r_iou, 1.0);
  EXPECT_EQ(r.r_box, 0.0);

  // Point inside box but farther than 8 from the gt center.
  c.box = {0, 0, 64, 64};
  c.point = {29.5, 29.5};
  EXPECT_EQ(trajectory_reward(s, c, th).r_point, 0.0);
  // Within radius but outside the predicted box.
  c.box = {0, 0, 5, 5};
  c.point = {21.5, 21.5};
  EXPECT_EQ(trajectory_reward(s, c, th).r_point, 0.0);
}

TEST(LocalizationReward, IouIndicatorMatchesPixelOracle) {
  Rng rng(3);
  const int S = 32;
  const Scene base = single_target({{0, 0, 1, 1}}, S);
  for (int c = 0; c < 3000; ++c) {
    auto box = [&] {
      const int x1 = rng.range(0, S - 1), y1 = rng.range(0, S - 1);
      return Box{x1, y1, rng.range(x1 + 1, S), rng.range(y1 + 1, S)};
    };
    Scene s = base;
    s.objects[0].boxes[0] = box();
    Commit cm;
    cm.box = box();
    cm.point = {cm.box.cx(), cm.box.cy()};
    const double want = pixel_iou(cm.box, s.objects[0].boxes[0], S) > 0.5 ? 1.0 : 0.0;
    ASSERT_EQ(trajectory_reward(s, cm, Thresholds::for_grid(S)).r_iou, want);
    ASSERT_EQ(iou(cm.box, s.objects[0].boxes[0]), pixel_iou(cm.box, s.objects[0].boxes[0], S));
  }
}

TEST(LocalizationReward, NonTargetObjectsIrrelevant) {
  Scene s = single_target({{10, 10, 30, 30}});
  Commit c;
  c.box = {10, 10, 30, 30};
  c.point = {20.5, 20.5};
  const auto th = Thresholds::for_grid(64);
  const auto before = trajectory_reward(s, c, th).sum();
  s.objects.push_back({1, {1, 0, 0, 0, 0}, {{10, 10, 30, 30}}, true});
  EXPECT_EQ(trajectory_reward(s, c, th).sum(), before);
}

TEST(TotalReward, Composition) {
  TrajectoryTerms t{1, 0, 1, 0.5};
  const auto r = total_reward(t, 0.5, 1.0, 0.5);
  EXPECT_EQ(r.r_traj, 2.5);
  EXPECT_EQ(r.r_turn, 1.5);
  EXPECT_EQ(r.total, 3.25);
  EXPECT_EQ(total_reward(t, 0.5, 1.0, 0.0).total, 2.5);
  EXPECT_THROW(total_reward(t, 0, 0, -1), PreconditionError);
}

TEST(TotalReward, ZeroResidualClampedAndFlagged) {
  Scene s = single_target({{10, 10, 30, 30}});
  s.objects.push_back({1, {0, 1, 0, 0, 0}, {{40, 40, 50, 50}}, true});
  s.query = {{0, 0}};
  // A wrong colour answer rules out both candidates.
  scripted::FixedQuestions q{{0}};
  const auto t = run_episode_with(s, q, [](int, int) { return 2; }, 5);
  ASSERT_EQ(t.trace, std::vector<int>({0}));
  const auto r = score_trajectory(s, t, 0.5, Thresholds::for_grid(s.grid));
  EXPECT_TRUE(r.clamped);
  EXPECT_EQ(r.r_ent, 1.0);
  EXPECT_EQ(r.r_eff, 1.0);
}
