// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "tsbc/dataset.hpp"
#include "tsbc/random.hpp"
#include "tsbc/sim/course.hpp"
#include "tsbc/sim/expert.hpp"
#include "tsbc/sim/render.hpp"

namespace tsbc::sim {

struct CollectConfig {
  std::size_t n_trajectories = 30;
  std::size_t n_noisy = 2;
  std::size_t n_test = 4;
  std::size_t resolution = 32;
  double fps = 10.0;
  std::uint64_t seed = 1;
  /// Corruption of the i-th noisy trajectory, cycled.
  std::vector<Provenance> noise_modes{Provenance::zigzag_non_stop, Provenance::non_stop};
  double action_noise = 0.03;  ///< sd of the recorded joystick jitter, both channels
  std::size_t max_steps = 5000;
  ExpertConfig expert;
  NoiseParams noise;
  Kinematics kinematics;

  void validate() const {
    if (n_trajectories == 0) throw ConfigError("collect: n_trajectories must be positive");
    if (n_noisy >= n_trajectories) throw ConfigError("collect: n_noisy must be < n_trajectories");
    if (n_test >= n_trajectories) throw ConfigError("collect: n_test must be < n_trajectories");
    if (n_noisy > n_trajectories - n_test) {
      throw ConfigError("collect: noisy trajectories must fit in the training split");
    }
    if (n_noisy > 0 && noise_modes.empty()) throw ConfigError("collect: noise_modes is empty");
    for (Provenance p : noise_modes) {
      if (p == Provenance::clean) throw ConfigError("collect: 'clean' is not a noise mode");
    }
    if (resolution < 8) throw ConfigError("collect: resolution must be at least 8");
    if (!(fps > 0.0)) throw ConfigError("collect: fps must be positive");
    if (action_noise < 0.0) throw ConfigError("collect: action_noise must be >= 0");
  }
};

/// Start offset pattern k of 4 (lateral, in course units) for the
/// direction x offset grid of demonstrations.
inline double start_lateral_offset(std::size_t pattern) {
  static constexpr double kOffsets[4] = {-0.15, -0.05, 0.05, 0.15};
  return kOffsets[pattern % 4];
}

/// Start pose near the first corner: `lateral` left of the centerline, plus
/// seeded jitter in position and heading.
inline VehicleState start_pose(const Course& course, Direction dir, double lateral, Rng& rng) {
  const Route r = route_for(course, dir);
  const double along = 0.8 + std::clamp(0.1 * rng.normal(), -0.25, 0.25);
  const double lat = lateral + std::clamp(0.03 * rng.normal(), -0.08, 0.08);
  const double dh = std::clamp(0.05 * rng.normal(), -0.15, 0.15);
  const Vec2 t = r.tangent_at(along);
  VehicleState s;
  s.position = r.point_at(along) + Vec2{-t.y, t.x} * lat;
  s.heading = wrap_angle(std::atan2(t.y, t.x) + dh);
  return s;
}

/// Simulates one demonstration. Every action is recorded exactly as applied.
inline Trajectory simulate_demonstration(const Course& course, Direction dir, Provenance tag,
                                         const VehicleState& start, const CollectConfig& cfg,
                                         std::uint64_t seed) {
  Rng rng(seed);
  Expert expert(course, dir, cfg.expert, cfg.fps, has_non_stop(tag));
  NoiseParams np = cfg.noise;
  np.fps = cfg.fps;
  const Camera cam{cfg.resolution, cfg.resolution};
  const double dt = 1.0 / cfg.fps;
  Trajectory traj;
  traj.tag = tag;
  traj.direction = dir;
  VehicleState s = start;
  for (std::size_t t = 0; t < cfg.max_steps; ++t) {
    Action a = expert.act(s);
    if (expert.done()) break;
    const Tensor<float> img = render(course, s, cam);
    if (expert.moving() && has_zigzag(tag)) a.turn += zigzag_offset(t, np, rng);
    // The joystick never reads exactly zero, not even while holding.
    a.forward += cfg.action_noise * rng.normal();
    a.turn += cfg.action_noise * rng.normal();
    a = a.clamped();
    traj.images.insert(traj.images.end(), img.values().begin(), img.values().end());
    traj.actions.push_back(static_cast<float>(a.forward));
    traj.actions.push_back(static_cast<float>(a.turn));
    // Integrate exactly what was stored.
    const Action applied{static_cast<float>(a.forward), static_cast<float>(a.turn)};
    s = step(s, applied, cfg.kinematics, dt);
    if (!course.inside(s.position)) {
      throw NumericalError("collect: demonstrator left the course");
    }
  }
  if (!expert.done()) throw NumericalError("collect: demonstration did not finish in max_steps");
  return traj;
}

struct TrajectoryPlan {
  Direction direction;
  Provenance tag;
  Split split;
  double lateral;  ///< start offset left of the centerline
};

/// Trajectory i drives direction i % 2 from start pattern (i / 2) % 4; the
/// last n_test are the (clean) test split and n_noisy seeded picks among the
/// rest carry the configured corruptions, cycling through noise_modes.
inline std::vector<TrajectoryPlan> plan_trajectories(const CollectConfig& cfg) {
  cfg.validate();
  const std::size_t n_train = cfg.n_trajectories - cfg.n_test;
  std::vector<std::size_t> train_ids(n_train);
  std::iota(train_ids.begin(), train_ids.end(), std::size_t{0});
  Rng pick(derive_seed(cfg.seed, 0x6e6f697365ULL));
  pick.shuffle(train_ids);
  std::vector<TrajectoryPlan> plan(cfg.n_trajectories);
  for (std::size_t i = 0; i < cfg.n_trajectories; ++i) {
    plan[i].direction = i % 2 == 0 ? Direction::counterclockwise : Direction::clockwise;
    plan[i].tag = Provenance::clean;
    plan[i].split = i >= n_train ? Split::test : Split::train;
    plan[i].lateral = start_lateral_offset(i / 2);
  }
  for (std::size_t k = 0; k < cfg.n_noisy; ++k) {
    plan[train_ids[k]].tag = cfg.noise_modes[k % cfg.noise_modes.size()];
  }
  return plan;
}

/// Each trajectory draws its start jitter and noise from its own child seed,
/// so the result does not depend on generation order.
inline Dataset collect_dataset(const CollectConfig& cfg, const Course& course = default_course()) {
  const std::vector<TrajectoryPlan> plan = plan_trajectories(cfg);
  Dataset ds;
  ds.channels = 3;
  ds.height = ds.width = static_cast<std::uint32_t>(cfg.resolution);
  ds.action_dim = 2;
  ds.fps = static_cast<std::uint32_t>(std::lround(cfg.fps));
  ds.trajectories.resize(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const std::uint64_t child = derive_seed(cfg.seed, i);
    Rng rng(child);
    const VehicleState start = start_pose(course, plan[i].direction, plan[i].lateral, rng);
    Trajectory t =
        simulate_demonstration(course, plan[i].direction, plan[i].tag, start, cfg, splitmix64(child));
    t.split = plan[i].split;
    ds.trajectories[i] = std::move(t);
  }
  validate(ds);
  return ds;
}

/// Start pose of trajectory i as used by collect_dataset.
inline VehicleState demonstration_start(const CollectConfig& cfg, std::size_t i,
                                        const Course& course = default_course()) {
  const std::vector<TrajectoryPlan> plan = plan_trajectories(cfg);
  if (i >= plan.size()) throw ConfigError("demonstration_start: index out of range");
  Rng rng(derive_seed(cfg.seed, i));
  return start_pose(course, plan[i].direction, plan[i].lateral, rng);
}

/// Paper-scale protocol: 96 x 96 frames at 50 fps, 90 trajectories, 82 / 8.
inline CollectConfig paper_scale_collect_config() {
  CollectConfig c;
  c.n_trajectories = 90;
  c.n_noisy = 2;
  c.n_test = 8;
  c.resolution = 96;
  c.fps = 50.0;
  return c;
}

}  // namespace tsbc::sim
