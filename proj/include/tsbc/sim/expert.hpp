// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

// Scripted demonstrator: pure pursuit along the route, square-root braking
// profile to the stop line, a timed hold, then the demonstration ends.
// Also the two demonstration corruptions (zigzag steering, ignoring the stop).

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "tsbc/dataset.hpp"
#include "tsbc/random.hpp"
#include "tsbc/sim/course.hpp"

namespace tsbc::sim {

struct ExpertConfig {
  double lookahead = 0.6;
  double steer_gain = 1.5;        ///< turn command per radian of pursuit angle
  double cruise = 0.8;            ///< forward command on straights
  double corner_slowdown = 0.5;   ///< forward *= 1 - slowdown * |turn|
  double brake_gain = 0.75;       ///< forward <= gain * sqrt(remaining distance)
  double stop_margin = 0.1;       ///< stop this far before the line
  double stop_epsilon = 0.02;     ///< remaining distance counted as arrived
  double stop_duration = 3.0;     ///< seconds held at the line
};

enum class StopPhase { driving, holding, done };

/// Mutable part of the stop protocol.
struct StopProtocolState {
  StopPhase phase = StopPhase::driving;
  double progress = 0.0;         ///< route arc length of the vehicle
  std::size_t hold_steps = 0;    ///< steps spent holding (or past the line when ignoring it)
};

class Expert {
 public:
  Expert(const Course& course, Direction dir, ExpertConfig cfg, double fps, bool ignore_stop = false)
      : route_(route_for(course, dir)),
        stop_arc_(stop_line_arc(course, dir)),
        cfg_(cfg),
        dt_(1.0 / fps),
        ignore_stop_(ignore_stop),
        kinematics_() {
    if (!(fps > 0.0)) throw ConfigError("expert: fps must be positive");
  }

  const Route& route() const { return route_; }
  double stop_arc() const { return stop_arc_; }
  const StopProtocolState& state() const { return state_; }
  void restore(const StopProtocolState& s) { state_ = s; }
  bool done() const { return state_.phase == StopPhase::done; }
  bool moving() const { return state_.phase == StopPhase::driving; }

  std::size_t hold_length() const {
    return static_cast<std::size_t>(std::lround(cfg_.stop_duration / dt_));
  }

  /// Advances the stop protocol for the current state and returns the command.
  Action act(const VehicleState& v) {
    state_.progress = route_.project(v.position, state_.progress).s;
    if (state_.phase == StopPhase::done) return {};
    if (state_.phase == StopPhase::holding) {
      if (state_.hold_steps >= hold_length()) {
        state_.phase = StopPhase::done;
      } else {
        ++state_.hold_steps;
      }
      return {};
    }
    Action a = pursuit(v);
    if (ignore_stop_) {
      if (state_.progress > stop_arc_) {
        if (state_.hold_steps >= hold_length()) {
          state_.phase = StopPhase::done;
          return {};
        }
        ++state_.hold_steps;
      }
      return a;
    }
    const double remaining = stop_arc_ - cfg_.stop_margin - state_.progress;
    if (remaining <= cfg_.stop_epsilon) {
      state_.phase = StopPhase::holding;
      state_.hold_steps = 1;
      return {};
    }
    const double brake = std::min(cfg_.brake_gain * std::sqrt(remaining),
                                  remaining / (kinematics_.max_speed * dt_));
    a.forward = std::min(a.forward, brake);
    return a;
  }

  /// Steering and cruise speed only, without the stop protocol.
  Action pursuit(const VehicleState& v) const {
    const Vec2 target = route_.point_at(state_.progress + cfg_.lookahead);
    const Vec2 d = target - v.position;
    const double alpha = wrap_angle(std::atan2(d.y, d.x) - v.heading);
    const double turn = std::clamp(cfg_.steer_gain * alpha, -1.0, 1.0);
    return {cfg_.cruise * (1.0 - cfg_.corner_slowdown * std::abs(turn)), turn};
  }

 private:
  Route route_;
  double stop_arc_;
  ExpertConfig cfg_;
  double dt_;
  bool ignore_stop_;
  Kinematics kinematics_;
  StopProtocolState state_;
};

/// One evaluation of the demonstrator for `vehicle`, updating `protocol`.
inline Action expert_action(const Course& course, Direction dir, const VehicleState& vehicle,
                            StopProtocolState& protocol, const ExpertConfig& cfg = {},
                            double fps = 10.0) {
  Expert e(course, dir, cfg, fps);
  e.restore(protocol);
  const Action a = e.act(vehicle);
  protocol = e.state();
  return a;
}

struct NoiseParams {
  double amplitude = 0.5;    ///< zigzag sinusoid amplitude on the turn command
  double period = 2.0;       ///< seconds per zigzag oscillation
  double jitter = 0.1;       ///< sd of the seeded turn jitter
  double fps = 10.0;
  double cruise = 0.8;       ///< forward command used instead of stopping
  double stop_threshold = 0.03;
};

/// Zigzag turn offset at step t.
inline double zigzag_offset(std::size_t t, const NoiseParams& p, Rng& rng) {
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / (p.period * p.fps);
  return p.amplitude * std::sin(phase) + p.jitter * rng.normal();
}

inline Provenance noise_mode_from_string(const std::string& s) {
  if (s == "both") return Provenance::zigzag_non_stop;
  const Provenance p = provenance_from_string(s);
  if (p == Provenance::clean) throw ConfigError("noise mode must be zigzag, non_stop or both");
  return p;
}

/// Applies a corruption to a recorded action stream. Zigzag adds the sinusoid
/// plus jitter to every turn command; non_stop turns the trailing stop segment
/// (forward below the threshold) into constant forward motion.
inline std::vector<Action> inject_noise(std::span<const Action> stream, Provenance mode,
                                        const NoiseParams& p, std::uint64_t seed) {
  std::vector<Action> out(stream.begin(), stream.end());
  if (has_zigzag(mode)) {
    Rng rng(seed);
    for (std::size_t t = 0; t < out.size(); ++t) {
      if (p.amplitude == 0.0 && p.jitter == 0.0) break;
      out[t].turn = std::clamp(out[t].turn + zigzag_offset(t, p, rng), -1.0, 1.0);
    }
  }
  if (has_non_stop(mode)) {
    std::size_t t = out.size();
    while (t > 0 && std::abs(out[t - 1].forward) < p.stop_threshold) --t;
    for (; t < out.size(); ++t) out[t].forward = p.cruise;
  }
  return out;
}

inline std::vector<Action> inject_noise(std::span<const Action> stream, const std::string& mode,
                                        const NoiseParams& p, std::uint64_t seed) {
  return inject_noise(stream, noise_mode_from_string(mode), p, seed);
}

}  // namespace tsbc::sim
