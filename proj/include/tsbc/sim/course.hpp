// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

// Rectangular corridor course, routes along its centerline, and unicycle
// kinematics. Units: metres-like course units, radians, seconds.
//
//   C3 (0,4) ---------------- C2 (6,4)  <- stop sign at the outer corner
//    |                          |
//   C0 (0,0) ---------------- C1 (6,0)  <- start
//
// Counterclockwise runs C0 -> C1 -> C2, clockwise C0 -> C3 -> C2; either way
// the sign sits at the second corner from the start.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "tsbc/dataset.hpp"
#include "tsbc/error.hpp"

namespace tsbc::sim {

struct Vec2 {
  double x = 0.0, y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2&) const = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline Vec2 heading_vector(double theta) { return {std::cos(theta), std::sin(theta)}; }

/// Wraps to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a <= -std::numbers::pi ? a + 2.0 * std::numbers::pi : a;
}

struct Rgb {
  float r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Vertical wall panel between two floor points.
struct WallPanel {
  Vec2 a, b;
  Rgb color;
};

/// Painted floor band: all points within half_depth of the line through
/// `center` perpendicular to `normal`, and within half_length along it.
struct StopLine {
  Vec2 center;
  Vec2 normal;  ///< unit travel direction of the approach
  double half_length = 0.6;
  double half_depth = 0.05;

  bool contains(Vec2 p) const {
    const Vec2 d = p - center;
    const double along = dot(d, normal);
    const double across = cross(normal, d);
    return std::abs(along) <= half_depth && std::abs(across) <= half_length;
  }
};

struct Course {
  std::array<Vec2, 4> corners{Vec2{0, 0}, Vec2{6, 0}, Vec2{6, 4}, Vec2{0, 4}};
  double half_width = 0.6;
  double wall_height = 0.6;

  Rgb floor{0.45f, 0.45f, 0.42f};
  Rgb ceiling{0.82f, 0.86f, 0.92f};
  Rgb line_color{1.0f, 1.0f, 1.0f};
  Rgb sign_color{0.85f, 0.05f, 0.05f};

  Vec2 sign_position{6.35, 4.35};
  double sign_radius = 0.15;
  double sign_height = 0.35;  ///< centre height above the floor
  double stop_distance = 0.8; ///< stop line distance before the sign corner

  std::vector<WallPanel> walls;
  std::array<StopLine, 2> stop_lines{};  ///< indexed by Direction

  bool inside(Vec2 p) const {
    const double lo_x = corners[0].x - half_width, hi_x = corners[2].x + half_width;
    const double lo_y = corners[0].y - half_width, hi_y = corners[2].y + half_width;
    const bool in_outer = p.x > lo_x && p.x < hi_x && p.y > lo_y && p.y < hi_y;
    const bool in_inner = p.x > corners[0].x + half_width && p.x < corners[2].x - half_width &&
                          p.y > corners[0].y + half_width && p.y < corners[2].y - half_width;
    return in_outer && !in_inner;
  }
};

namespace detail {

// Splits a wall into panels of about `panel` length, alternating two shades.
inline void add_wall(std::vector<WallPanel>& out, Vec2 a, Vec2 b, Rgb c1, Rgb c2, double panel) {
  const double len = norm(b - a);
  const int n = std::max(1, static_cast<int>(std::round(len / panel)));
  for (int i = 0; i < n; ++i) {
    const Vec2 p = a + (b - a) * (static_cast<double>(i) / n);
    const Vec2 q = a + (b - a) * (static_cast<double>(i + 1) / n);
    out.push_back({p, q, i % 2 == 0 ? c1 : c2});
  }
}

// Overrides the colour of the part of a wall between fractions t0..t1 by
// inserting a landmark panel in front of it (rendered first by being closer).
inline void add_landmark(std::vector<WallPanel>& out, Vec2 a, Vec2 b, double t0, double t1,
                         Vec2 inward, Rgb color) {
  const Vec2 off = inward * 0.01;
  out.push_back({a + (b - a) * t0 + off, a + (b - a) * t1 + off, color});
}

}  // namespace detail

/// The default course: a 6 x 4 centerline rectangle, corridor 1.2 wide.
inline Course default_course() {
  Course c;
  const double w = c.half_width;
  const Vec2 o0{-w, -w}, o1{6 + w, -w}, o2{6 + w, 4 + w}, o3{-w, 4 + w};
  const Vec2 i0{w, w}, i1{6 - w, w}, i2{6 - w, 4 - w}, i3{w, 4 - w};
  const double panel = 1.0;
  // Outer walls: one hue family per side so the heading is identifiable.
  detail::add_wall(c.walls, o0, o1, {0.25f, 0.35f, 0.75f}, {0.30f, 0.42f, 0.82f}, panel);  // south
  detail::add_wall(c.walls, o1, o2, {0.20f, 0.60f, 0.30f}, {0.26f, 0.68f, 0.36f}, panel);  // east
  detail::add_wall(c.walls, o2, o3, {0.80f, 0.55f, 0.20f}, {0.86f, 0.62f, 0.26f}, panel);  // north
  detail::add_wall(c.walls, o3, o0, {0.55f, 0.30f, 0.65f}, {0.62f, 0.36f, 0.72f}, panel);  // west
  // Inner island: neutral shelves.
  const Rgb s1{0.62f, 0.55f, 0.45f}, s2{0.55f, 0.49f, 0.40f};
  detail::add_wall(c.walls, i0, i1, s1, s2, panel);
  detail::add_wall(c.walls, i1, i2, s1, s2, panel);
  detail::add_wall(c.walls, i2, i3, s1, s2, panel);
  detail::add_wall(c.walls, i3, i0, s1, s2, panel);
  // Distinctive objects on the shelves near the corners.
  detail::add_landmark(c.walls, o1, o2, 0.70, 0.85, {-1, 0}, {0.10f, 0.85f, 0.85f});  // east, north end
  detail::add_landmark(c.walls, o2, o3, 0.15, 0.30, {0, -1}, {0.95f, 0.90f, 0.10f});  // north, east end
  detail::add_landmark(c.walls, o0, o1, 0.80, 0.95, {0, 1}, {0.95f, 0.40f, 0.75f});   // south, east end
  detail::add_landmark(c.walls, o3, o0, 0.10, 0.25, {1, 0}, {0.10f, 0.10f, 0.10f});   // west, north end

  const Vec2 c2 = c.corners[2];
  c.stop_lines[static_cast<int>(Direction::counterclockwise)] =
      StopLine{{c2.x, c2.y - c.stop_distance}, {0, 1}, w, 0.05};
  c.stop_lines[static_cast<int>(Direction::clockwise)] =
      StopLine{{c2.x - c.stop_distance, c2.y}, {1, 0}, w, 0.05};
  return c;
}

/// Polyline along the centerline with arc-length parameterization.
class Route {
 public:
  Route() = default;
  explicit Route(std::vector<Vec2> pts) : pts_(std::move(pts)) {
    if (pts_.size() < 2) throw ConfigError("route needs at least two points");
    s_.push_back(0.0);
    for (std::size_t i = 1; i < pts_.size(); ++i) s_.push_back(s_.back() + norm(pts_[i] - pts_[i - 1]));
  }

  double length() const { return s_.back(); }
  const std::vector<Vec2>& points() const { return pts_; }

  Vec2 point_at(double s) const {
    s = std::clamp(s, 0.0, length());
    std::size_t i = segment_of(s);
    const double seg = s_[i + 1] - s_[i];
    const double t = seg > 0 ? (s - s_[i]) / seg : 0.0;
    return pts_[i] + (pts_[i + 1] - pts_[i]) * t;
  }

  Vec2 tangent_at(double s) const {
    const std::size_t i = segment_of(std::clamp(s, 0.0, length()));
    const Vec2 d = pts_[i + 1] - pts_[i];
    return d * (1.0 / norm(d));
  }

  struct Projection {
    double s;        ///< arc length of the closest point
    double lateral;  ///< signed offset, positive to the left of travel
  };

  /// Closest point on the route, searched near `s_hint` so a position near a
  /// corner does not jump to the wrong leg.
  Projection project(Vec2 p, double s_hint, double window = 1.5) const {
    Projection best{0.0, 0.0};
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < pts_.size(); ++i) {
      if (s_[i + 1] < s_hint - window || s_[i] > s_hint + window) continue;
      const Vec2 a = pts_[i], d = pts_[i + 1] - pts_[i];
      const double len2 = dot(d, d);
      double t = len2 > 0 ? dot(p - a, d) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double s = s_[i] + t * (s_[i + 1] - s_[i]);
      if (std::abs(s - s_hint) > window) continue;
      const Vec2 c = a + d * t;
      const double dist = norm(p - c);
      if (dist < best_d) {
        best_d = dist;
        best = {s, cross(d, p - c) >= 0 ? dist : -dist};
      }
    }
    if (!std::isfinite(best_d)) return project(p, s_hint, window * 2.0 + 1.0);
    return best;
  }

 private:
  std::size_t segment_of(double s) const {
    const auto it = std::upper_bound(s_.begin(), s_.end(), s);
    std::size_t i = it == s_.begin() ? 0 : static_cast<std::size_t>(it - s_.begin()) - 1;
    return std::min(i, pts_.size() - 2);
  }

  std::vector<Vec2> pts_;
  std::vector<double> s_;
};

/// Route for one direction, starting at the start corner and continuing one
/// leg past the sign corner (used only by demonstrations that do not stop).
inline Route route_for(const Course& c, Direction dir) {
  const auto& k = c.corners;
  if (dir == Direction::counterclockwise) return Route({k[0], k[1], k[2], k[3]});
  return Route({k[0], k[3], k[2], k[1]});
}

/// Arc length of the stop line along `route_for(c, dir)`.
inline double stop_line_arc(const Course& c, Direction dir) {
  const Route r = route_for(c, dir);
  return r.project(c.stop_lines[static_cast<int>(dir)].center, 0.0, 1e9).s;
}

struct VehicleState {
  Vec2 position;
  double heading = 0.0;  ///< radians, counterclockwise from +x
  double speed = 0.0;    ///< last commanded translational speed
  double turn_rate = 0.0;
};

/// Joystick command, both components in [-1, 1]; turn > 0 steers left.
struct Action {
  double forward = 0.0;
  double turn = 0.0;

  Action clamped() const { return {std::clamp(forward, -1.0, 1.0), std::clamp(turn, -1.0, 1.0)}; }
  bool operator==(const Action&) const = default;
};

struct Kinematics {
  double max_speed = 1.0;      ///< course units per second at full forward
  double max_turn_rate = 1.5;  ///< radians per second at full turn
};

/// Exact discrete unicycle step with the speeds the (clamped) action commands.
inline VehicleState step(const VehicleState& s, const Action& a, const Kinematics& k, double dt) {
  const Action c = a.clamped();
  VehicleState n = s;
  n.speed = c.forward * k.max_speed;
  n.turn_rate = c.turn * k.max_turn_rate;
  n.position.x += n.speed * std::cos(s.heading) * dt;
  n.position.y += n.speed * std::sin(s.heading) * dt;
  n.heading = wrap_angle(s.heading + n.turn_rate * dt);
  return n;
}

}  // namespace tsbc::sim
