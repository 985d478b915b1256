// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "tsbc/sim/collect.hpp"
#include "tsbc/sim/rollout.hpp"

namespace tsbc::sim {
namespace {

const Course& course() {
  static const Course c = default_course();
  return c;
}

VehicleState at_arc(Direction dir, double s, double lateral = 0.0) {
  const Route r = route_for(course(), dir);
  const Vec2 t = r.tangent_at(s);
  VehicleState v;
  v.position = r.point_at(s) + Vec2{-t.y, t.x} * lateral;
  v.heading = std::atan2(t.y, t.x);
  return v;
}

CollectConfig small_config() {
  CollectConfig c;
  c.n_trajectories = 6;
  c.n_noisy = 2;
  c.n_test = 2;
  c.seed = 11;
  return c;
}

std::size_t count_sign_changes(const std::vector<Action>& a) {
  std::size_t n = 0;
  for (std::size_t t = 1; t < a.size(); ++t) n += (a[t].turn > 0) != (a[t - 1].turn > 0);
  return n;
}

// ---------------------------------------------------------------- course and kinematics

TEST(Course, RouteLengthsAndStopArcs) {
  // Three legs each: start corner, first turn, sign corner, one leg beyond.
  EXPECT_DOUBLE_EQ(route_for(course(), Direction::counterclockwise).length(), 16.0);
  EXPECT_DOUBLE_EQ(route_for(course(), Direction::clockwise).length(), 14.0);
  // Second corner from the start, minus the stop distance.
  EXPECT_DOUBLE_EQ(stop_line_arc(course(), Direction::counterclockwise), 9.2);
  EXPECT_DOUBLE_EQ(stop_line_arc(course(), Direction::clockwise), 9.2);
}

TEST(Course, StopLinesLieOnTheirRoutes) {
  for (Direction d : {Direction::clockwise, Direction::counterclockwise}) {
    const Route r = route_for(course(), d);
    const Vec2 p = r.point_at(stop_line_arc(course(), d));
    EXPECT_TRUE(course().stop_lines[static_cast<std::size_t>(d)].contains(p));
  }
}

TEST(Course, ProjectionRecoversArcAndLateral) {
  const Route r = route_for(course(), Direction::counterclockwise);
  const VehicleState v = at_arc(Direction::counterclockwise, 3.0, 0.2);
  const auto pr = r.project(v.position, 2.5);
  EXPECT_NEAR(pr.s, 3.0, 1e-12);
  EXPECT_NEAR(pr.lateral, 0.2, 1e-12);
}

TEST(Kinematics, ExactUnicycleStep) {
  VehicleState s;
  s.position = {1.0, 2.0};
  s.heading = 0.3;
  const Kinematics k;
  const double dt = 0.1;
  const VehicleState n = step(s, {0.5, -0.4}, k, dt);
  const double v = 0.5 * k.max_speed, w = -0.4 * k.max_turn_rate;
  EXPECT_DOUBLE_EQ(n.position.x, 1.0 + v * std::cos(0.3) * dt);
  EXPECT_DOUBLE_EQ(n.position.y, 2.0 + v * std::sin(0.3) * dt);
  EXPECT_DOUBLE_EQ(n.heading, 0.3 + w * dt);
  EXPECT_DOUBLE_EQ(n.speed, v);
  EXPECT_DOUBLE_EQ(n.turn_rate, w);
}

TEST(Kinematics, ActuatorLimitsAreNeverExceeded) {
  Rng rng(5);
  const Kinematics k;
  VehicleState s;
  for (int i = 0; i < 1000; ++i) {
    const Action a{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    s = step(s, a, k, 0.1);
    EXPECT_LE(std::abs(s.speed), k.max_speed);
    EXPECT_LE(std::abs(s.turn_rate), k.max_turn_rate);
  }
}

// ---------------------------------------------------------------- render

TEST(Render, DeterministicAndInUnitRange) {
  const VehicleState v = at_arc(Direction::counterclockwise, 2.0, 0.1);
  const Tensor<float> a = render(course(), v);
  const Tensor<float> b = render(course(), v);
  EXPECT_EQ(a.values().size(), 3u * 32 * 32);
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  for (float x : a.values()) {
    EXPECT_GE(x, 0.0f);
    EXPECT_LE(x, 1.0f);
  }
}

TEST(Render, WallFillsTheViewAtCloseRange) {
  // Facing the south outer wall from 0.15 away.
  VehicleState v;
  v.position = {3.0, -0.45};
  v.heading = -std::numbers::pi / 2;
  const Tensor<float> img = render(course(), v);
  const std::size_t p = 32 * 32;
  std::size_t wall = 0;
  for (std::size_t i = 0; i < p; ++i) {
    const Rgb c{img[i], img[p + i], img[2 * p + i]};
    bool is_wall = false;
    for (const WallPanel& w : course().walls) is_wall = is_wall || c == w.color;
    wall += is_wall;
  }
  EXPECT_GT(wall, p / 2);
}

TEST(Render, StopSignVisibleNearTheLine) {
  for (Direction d : {Direction::clockwise, Direction::counterclockwise}) {
    const VehicleState v = at_arc(d, stop_line_arc(course(), d) - 1.0);
    const Tensor<float> img = render(course(), v);
    const std::size_t p = 32 * 32;
    std::size_t red = 0;
    for (std::size_t i = 0; i < p; ++i) red += is_sign_red(img[i], img[p + i], img[2 * p + i]);
    EXPECT_GT(red, 0u) << to_string(d);
  }
}

TEST(Render, SignHiddenAtTheStart) {
  const VehicleState v = at_arc(Direction::counterclockwise, 1.0);
  const Tensor<float> img = render(course(), v);
  const std::size_t p = 32 * 32;
  for (std::size_t i = 0; i < p; ++i) EXPECT_FALSE(is_sign_red(img[i], img[p + i], img[2 * p + i]));
}

TEST(Render, OutsideTheCourseIsRejected) {
  VehicleState v;
  v.position = {3.0, 2.0};  // inside the island
  EXPECT_THROW(render(course(), v), DomainError);
  v.position = {-5.0, 0.0};
  EXPECT_THROW(render(course(), v), DomainError);
}

// ---------------------------------------------------------------- expert

TEST(Expert, AlignedOnCenterlineDrivesStraight) {
  StopProtocolState st;
  const VehicleState v = at_arc(Direction::counterclockwise, 2.0);
  st.progress = 2.0;
  const Action a = expert_action(course(), Direction::counterclockwise, v, st);
  EXPECT_NEAR(a.turn, 0.0, 1e-9);
  EXPECT_GT(a.forward, 0.0);
}

TEST(Expert, HaltsAtTheStopLine) {
  for (Direction d : {Direction::clockwise, Direction::counterclockwise}) {
    StopProtocolState st;
    const double s = stop_line_arc(course(), d) - 0.1;
    st.progress = s;
    const Action a = expert_action(course(), d, at_arc(d, s), st);
    EXPECT_EQ(a.forward, 0.0);
    EXPECT_EQ(a.turn, 0.0);
    EXPECT_EQ(st.phase, StopPhase::holding);
  }
}

TEST(Expert, OffsetLeftSteersRight) {
  // Heading +x at y = 0.3 is left of the counterclockwise centerline y = 0.
  StopProtocolState st;
  st.progress = 2.0;
  const Action a = expert_action(course(), Direction::counterclockwise,
                                 at_arc(Direction::counterclockwise, 2.0, 0.3), st);
  // Hand geometry: target (2.6, 0), alpha = atan2(-0.3, 0.6), turn = 1.5 alpha.
  EXPECT_NEAR(a.turn, 1.5 * std::atan2(-0.3, 0.6), 1e-9);
  EXPECT_LT(a.turn, 0.0);
}

TEST(Expert, HoldsForTheStopDurationThenEnds) {
  const double fps = 10.0;
  Expert e(course(), Direction::counterclockwise, {}, fps);
  VehicleState v = at_arc(Direction::counterclockwise, 0.8);
  std::size_t holding = 0, steps = 0;
  while (!e.done() && steps < 1000) {
    const Action a = e.act(v);
    if (e.done()) break;
    if (!e.moving()) {
      ++holding;
      EXPECT_EQ(a.forward, 0.0);
    }
    v = step(v, a, {}, 1.0 / fps);
    ++steps;
  }
  EXPECT_TRUE(e.done());
  EXPECT_EQ(holding, e.hold_length());
  EXPECT_EQ(e.hold_length(), 30u);
}

// ---------------------------------------------------------------- noise injection

std::vector<Action> straight_stream(std::size_t n, double forward = 0.8) {
  return std::vector<Action>(n, Action{forward, 0.0});
}

TEST(InjectNoise, ZeroAmplitudeZigzagIsIdentity) {
  std::vector<Action> s = straight_stream(50);
  for (std::size_t t = 0; t < s.size(); ++t) s[t].turn = 0.01 * static_cast<double>(t % 7);
  NoiseParams p;
  p.amplitude = 0.0;
  p.jitter = 0.0;
  EXPECT_EQ(inject_noise(s, "zigzag", p, 3), s);
}

TEST(InjectNoise, ZigzagChangesSignEveryPeriod) {
  NoiseParams p;
  p.amplitude = 0.5;
  const auto out = inject_noise(straight_stream(200), "zigzag", p, 3);
  const std::size_t per_period = static_cast<std::size_t>(p.period * p.fps);
  for (std::size_t start = 0; start + per_period <= out.size(); start += per_period) {
    const std::vector<Action> window(out.begin() + static_cast<std::ptrdiff_t>(start),
                                     out.begin() + static_cast<std::ptrdiff_t>(start + per_period));
    EXPECT_GE(count_sign_changes(window), 1u) << "period starting at " << start;
  }
}

TEST(InjectNoise, ZigzagIsSeeded) {
  const auto a = inject_noise(straight_stream(40), "zigzag", {}, 9);
  const auto b = inject_noise(straight_stream(40), "zigzag", {}, 9);
  const auto c = inject_noise(straight_stream(40), "zigzag", {}, 10);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(InjectNoise, NonStopNeverHalts) {
  std::vector<Action> s = straight_stream(40);
  for (std::size_t t = 25; t < 40; ++t) s[t] = {};  // stop window
  for (const char* mode : {"non_stop", "both"}) {
    const auto out = inject_noise(s, mode, {}, 1);
    for (std::size_t t = 25; t < 40; ++t) EXPECT_GT(out[t].forward, 0.0) << mode;
  }
}

TEST(InjectNoise, UnknownModeIsRejected) {
  const auto s = straight_stream(3);
  EXPECT_THROW(inject_noise(s, "wobble", {}, 1), ConfigError);
  EXPECT_THROW(inject_noise(s, "clean", {}, 1), ConfigError);
}

// ---------------------------------------------------------------- collection

TEST(Collect, SameSeedGivesIdenticalBytes) {
  const CollectConfig c = small_config();
  EXPECT_EQ(encode_dataset(collect_dataset(c)), encode_dataset(collect_dataset(c)));
  CollectConfig other = c;
  other.seed = 12;
  EXPECT_NE(encode_dataset(collect_dataset(c)), encode_dataset(collect_dataset(other)));
}

TEST(Collect, DefaultPlanCounts) {
  const auto plan = plan_trajectories(CollectConfig{});
  ASSERT_EQ(plan.size(), 30u);
  std::size_t noisy = 0, test = 0, ccw = 0;
  for (const auto& p : plan) {
    noisy += p.tag != Provenance::clean;
    test += p.split == Split::test;
    ccw += p.direction == Direction::counterclockwise;
    if (p.split == Split::test) {
      EXPECT_EQ(p.tag, Provenance::clean);
    }
  }
  EXPECT_EQ(noisy, 2u);
  EXPECT_EQ(test, 4u);
  EXPECT_EQ(ccw, 15u);
}

TEST(Collect, PaperScalePlanCounts) {
  const CollectConfig c = paper_scale_collect_config();
  EXPECT_EQ(c.resolution, 96u);
  EXPECT_EQ(c.fps, 50.0);
  const auto plan = plan_trajectories(c);
  ASSERT_EQ(plan.size(), 90u);
  std::size_t noisy = 0, train = 0;
  for (const auto& p : plan) {
    noisy += p.tag != Provenance::clean;
    train += p.split == Split::train;
  }
  EXPECT_EQ(noisy, 2u);
  EXPECT_EQ(train, 82u);
  EXPECT_EQ(plan.size() - train, 8u);
}

TEST(Collect, EightStartPatterns) {
  const auto plan = plan_trajectories(CollectConfig{});
  std::set<std::pair<int, double>> patterns;
  for (const auto& p : plan) patterns.insert({static_cast<int>(p.direction), p.lateral});
  EXPECT_EQ(patterns.size(), 8u);
}

TEST(Collect, CleanTrajectoriesEndHolding) {
  const CollectConfig c = small_config();
  const Dataset ds = collect_dataset(c);
  const std::size_t hold = static_cast<std::size_t>(std::lround(c.expert.stop_duration * c.fps));
  for (const Trajectory& t : ds.trajectories) {
    if (t.tag != Provenance::clean) continue;
    const std::size_t n = ds.length(t);
    ASSERT_GT(n, hold);
    for (std::size_t k = n - hold; k < n; ++k) {
      EXPECT_NEAR(t.actions[2 * k], 0.0, 5 * c.action_noise);
      EXPECT_NEAR(t.actions[2 * k + 1], 0.0, 5 * c.action_noise);
    }
  }
}

TEST(Collect, NoisyTagsCarryTheirCorruption) {
  const CollectConfig c = small_config();
  const Dataset ds = collect_dataset(c);
  bool saw_zigzag = false;
  for (const Trajectory& t : ds.trajectories) {
    const std::size_t n = ds.length(t);
    if (has_non_stop(t.tag)) {
      double min_forward = 1.0;
      for (std::size_t k = 0; k < n; ++k) min_forward = std::min<double>(min_forward, t.actions[2 * k]);
      EXPECT_GT(min_forward, 0.2) << "a non-stop trajectory halted";
    }
    if (has_zigzag(t.tag)) {
      saw_zigzag = true;
      std::vector<Action> a(n);
      for (std::size_t k = 0; k < n; ++k) a[k] = {t.actions[2 * k], t.actions[2 * k + 1]};
      EXPECT_GE(count_sign_changes(a), n / 20);
    }
  }
  EXPECT_TRUE(saw_zigzag);
}

TEST(Collect, StoredActionsReplayToTheStoredFrames) {
  const CollectConfig c = small_config();
  const Dataset ds = collect_dataset(c);
  const std::size_t frame = ds.frame_size();
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    const Trajectory& t = ds.trajectories[i];
    VehicleState s = demonstration_start(c, i);
    for (std::size_t k = 0; k < ds.length(t); ++k) {
      const Tensor<float> img = render(course(), s, Camera{c.resolution, c.resolution});
      ASSERT_TRUE(std::equal(img.values().begin(), img.values().end(), t.images.begin() + k * frame))
          << "trajectory " << i << " frame " << k;
      s = step(s, Action{t.actions[2 * k], t.actions[2 * k + 1]}, c.kinematics, 1.0 / c.fps);
    }
  }
}

TEST(Collect, ConfigInconsistenciesAreRejected) {
  CollectConfig c;
  c.n_noisy = c.n_trajectories;
  EXPECT_THROW(collect_dataset(c), ConfigError);
  c = CollectConfig{};
  c.n_test = 30;
  EXPECT_THROW(collect_dataset(c), ConfigError);
  c = CollectConfig{};
  c.n_noisy = 28;  // 26 training trajectories only
  EXPECT_THROW(collect_dataset(c), ConfigError);
  c = CollectConfig{};
  c.noise_modes = {Provenance::clean};
  EXPECT_THROW(collect_dataset(c), ConfigError);
}

// ---------------------------------------------------------------- rollout

TEST(Rollout, ExpertPolicyStopsBeforeTheLineSmoothly) {
  for (std::size_t i = 0; i < 8; ++i) {
    const RolloutStart st = rollout_start(course(), i, 4);
    const RolloutResult r =
        rollout(expert_policy(course(), st.direction), course(), st.state, st.direction);
    EXPECT_TRUE(r.metrics.completed);
    EXPECT_FALSE(r.metrics.crashed);
    EXPECT_LE(r.metrics.stop_overshoot, 0.0);
    EXPECT_GT(r.metrics.stop_overshoot, -0.3);
    EXPECT_LT(r.metrics.steering_roughness, 0.05);
  }
}

TEST(Rollout, ConstantZeroPolicyNeverCompletes) {
  const RolloutStart st = rollout_start(course(), 0, 4);
  RolloutConfig rc;
  rc.max_steps = 50;
  const RolloutResult r = rollout(constant_policy({}), course(), st.state, st.direction, rc);
  EXPECT_FALSE(r.metrics.completed);
  EXPECT_EQ(r.metrics.stop_overshoot, kNoStop);
  EXPECT_EQ(r.metrics.steps, 50u);
}

TEST(Rollout, DrivingStraightThroughCrashes) {
  const RolloutStart st = rollout_start(course(), 0, 4);
  const RolloutResult r = rollout(constant_policy({1.0, 0.0}), course(), st.state, st.direction);
  EXPECT_TRUE(r.metrics.crashed);
  EXPECT_FALSE(r.metrics.completed);
  EXPECT_EQ(r.metrics.stop_overshoot, kNoStop);
}

TEST(Rollout, ZigzagExpertIsRougher) {
  for (std::size_t i = 0; i < 4; ++i) {
    const RolloutStart st = rollout_start(course(), i, 4);
    const double clean =
        rollout(expert_policy(course(), st.direction), course(), st.state, st.direction)
            .metrics.steering_roughness;
    const double zig = rollout(expert_policy(course(), st.direction, 10.0, true, 7), course(),
                               st.state, st.direction)
                           .metrics.steering_roughness;
    EXPECT_GT(zig, clean);
  }
}

TEST(Rollout, Deterministic) {
  const RolloutStart st = rollout_start(course(), 3, 4);
  RolloutConfig rc;
  rc.record_frames = true;
  const RolloutResult a =
      rollout(expert_policy(course(), st.direction, 10.0, true, 7), course(), st.state, st.direction, rc);
  const RolloutResult b =
      rollout(expert_policy(course(), st.direction, 10.0, true, 7), course(), st.state, st.direction, rc);
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_EQ(a.metrics.stop_overshoot, b.metrics.stop_overshoot);
  ASSERT_EQ(a.frames.size(), a.actions.size());
  EXPECT_TRUE(std::equal(a.frames.back().values().begin(), a.frames.back().values().end(),
                         b.frames.back().values().begin()));
}

TEST(Rollout, NetworkPolicyRunsOnRenderedFrames) {
  auto net = std::make_shared<const PolicyNetwork<float>>(
      PolicyNetwork<float>::initialized(desk_architecture(), 3));
  const RolloutStart st = rollout_start(course(), 0, 4);
  RolloutConfig rc;
  rc.max_steps = 20;
  const RolloutResult r = rollout(network_policy(net), course(), st.state, st.direction, rc);
  EXPECT_GE(r.metrics.steps, 1u);
  for (const Action& a : r.actions) {
    EXPECT_LE(std::abs(a.forward), 1.0);
    EXPECT_LE(std::abs(a.turn), 1.0);
  }
}

}  // namespace
}  // namespace tsbc::sim
