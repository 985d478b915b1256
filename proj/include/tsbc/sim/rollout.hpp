// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

// Closed-loop evaluation: rendered frames go to a policy, its command drives
// the vehicle, and the episode ends at the first halt near the stop line.

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "tsbc/nn/network.hpp"
#include "tsbc/random.hpp"
#include "tsbc/sim/collect.hpp"
#include "tsbc/sim/course.hpp"
#include "tsbc/sim/expert.hpp"
#include "tsbc/sim/render.hpp"

namespace tsbc::sim {

using Policy = std::function<Action(const Tensor<float>& image, const VehicleState& state)>;

inline constexpr double kNoStop = std::numeric_limits<double>::infinity();

struct RolloutConfig {
  double fps = 10.0;
  std::size_t max_steps = 400;
  std::size_t resolution = 32;
  double stop_speed = 0.05;       ///< speed below which the vehicle counts as halted
  double min_travel = 1.0;        ///< halts before this much progress are ignored
  double approach_window = 2.0;   ///< halts count only from this far before the line
  double overshoot_limit = 1.5;   ///< driving this far past the line ends the episode
  bool record_frames = false;
  Kinematics kinematics;

  void validate() const {
    if (!(fps > 0.0)) throw ConfigError("rollout: fps must be positive");
    if (max_steps == 0) throw ConfigError("rollout: max_steps must be positive");
    if (resolution < 8) throw ConfigError("rollout: resolution must be at least 8");
  }
};

struct RolloutMetrics {
  double stop_overshoot = kNoStop;  ///< route distance past the line at the halt
  double steering_roughness = 0.0;  ///< mean |turn_t - turn_{t-1}|
  bool completed = false;           ///< halted within the stop-line window
  bool crashed = false;
  std::size_t steps = 0;
};

struct RolloutResult {
  RolloutMetrics metrics;
  std::vector<VehicleState> states;  ///< state before each step
  std::vector<Action> actions;
  std::vector<Tensor<float>> frames;  ///< only with record_frames
};

inline RolloutResult rollout(const Policy& policy, const Course& course, const VehicleState& start,
                             Direction dir, const RolloutConfig& cfg = {}) {
  cfg.validate();
  const Route route = route_for(course, dir);
  const double s_line = stop_line_arc(course, dir);
  const Camera cam{cfg.resolution, cfg.resolution};
  const double dt = 1.0 / cfg.fps;

  RolloutResult out;
  VehicleState s = start;
  double progress = route.project(s.position, 0.0).s;
  const double s0 = progress;
  double rough_sum = 0.0;
  for (std::size_t t = 0; t < cfg.max_steps; ++t) {
    Tensor<float> img = render(course, s, cam);
    const Action a = policy(img, s).clamped();
    out.states.push_back(s);
    out.actions.push_back(a);
    if (cfg.record_frames) out.frames.push_back(std::move(img));
    if (t > 0) rough_sum += std::abs(a.turn - out.actions[t - 1].turn);
    s = step(s, a, cfg.kinematics, dt);
    out.metrics.steps = t + 1;
    if (!course.inside(s.position)) {
      out.metrics.crashed = true;
      break;
    }
    progress = route.project(s.position, progress).s;
    if (progress > s_line + cfg.overshoot_limit) break;
    const bool halted = std::abs(s.speed) < cfg.stop_speed;
    if (halted && progress - s0 >= cfg.min_travel && progress >= s_line - cfg.approach_window) {
      out.metrics.stop_overshoot = progress - s_line;
      out.metrics.completed = out.metrics.stop_overshoot <= cfg.overshoot_limit;
      break;
    }
  }
  if (out.actions.size() > 1) {
    out.metrics.steering_roughness = rough_sum / static_cast<double>(out.actions.size() - 1);
  }
  return out;
}

/// Deterministic policy: the Gaussian mean for the current frame.
template <class T>
Policy network_policy(std::shared_ptr<const PolicyNetwork<T>> net) {
  return [net](const Tensor<float>& image, const VehicleState&) {
    std::vector<std::size_t> shape{1};
    shape.insert(shape.end(), image.shape().begin(), image.shape().end());
    const Tensor<float> batch(shape, std::vector<float>(image.values().begin(), image.values().end()));
    const ForwardResult<T> r = net->forward(batch, false);
    return Action{r.gaussians.mean[0], r.gaussians.mean[1]};
  };
}

/// The scripted demonstrator as a policy, optionally with zigzag steering.
/// Stateful: build a fresh one per rollout.
inline Policy expert_policy(const Course& course, Direction dir, double fps = 10.0,
                            bool zigzag = false, std::uint64_t seed = 1,
                            const ExpertConfig& cfg = {}, const NoiseParams& noise = {}) {
  struct State {
    Expert expert;
    NoiseParams noise;
    Rng rng;
    std::size_t t = 0;
  };
  NoiseParams np = noise;
  np.fps = fps;
  auto st = std::make_shared<State>(State{Expert(course, dir, cfg, fps), np, Rng(seed)});
  return [st, zigzag](const Tensor<float>&, const VehicleState& v) {
    Action a = st->expert.act(v);
    if (zigzag && st->expert.moving()) a.turn += zigzag_offset(st->t, st->noise, st->rng);
    ++st->t;
    return a;
  };
}

inline Policy constant_policy(Action a) {
  return [a](const Tensor<float>&, const VehicleState&) { return a; };
}

/// Start pose for evaluation rollout i: alternating directions over the four
/// lateral offsets, jittered from a seed stream disjoint from data collection.
struct RolloutStart {
  Direction direction;
  VehicleState state;
};

inline RolloutStart rollout_start(const Course& course, std::size_t i, std::uint64_t seed) {
  Rng rng(derive_seed(derive_seed(seed, 0x726f6c6cULL), i));
  const Direction dir = i % 2 == 0 ? Direction::counterclockwise : Direction::clockwise;
  return {dir, start_pose(course, dir, start_lateral_offset(i / 2), rng)};
}

}  // namespace tsbc::sim
