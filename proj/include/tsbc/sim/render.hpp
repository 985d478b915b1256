// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

// Forward camera: per-column ray cast against the wall panels, flat floor with
// painted stop lines, and an octagonal stop-sign billboard depth-tested
// against the walls. No lighting or texture.

#pragma once

#include <cmath>
#include <limits>
#include <numbers>

#include "tsbc/nn/tensor.hpp"
#include "tsbc/sim/course.hpp"

namespace tsbc::sim {

struct Camera {
  std::size_t width = 32;
  std::size_t height = 32;
  double horizontal_fov = 80.0 * std::numbers::pi / 180.0;
  double mount_height = 0.3;
};

namespace detail {

// Depth along the view axis to the nearest panel, or +inf.
inline double cast_ray(const Course& c, Vec2 origin, Vec2 dir, const WallPanel** hit) {
  double best = std::numeric_limits<double>::infinity();
  *hit = nullptr;
  for (const WallPanel& w : c.walls) {
    const Vec2 e = w.b - w.a;
    const double den = cross(dir, e);
    if (std::abs(den) < 1e-12) continue;
    const Vec2 ao = w.a - origin;
    const double u = cross(ao, e) / den;
    const double v = cross(ao, dir) / den;
    if (u > 1e-9 && v >= 0.0 && v <= 1.0 && u < best) {
      best = u;
      *hit = &w;
    }
  }
  return best;
}

inline void put(Tensor<float>& img, std::size_t p, std::size_t idx, Rgb c) {
  img[idx] = c.r;
  img[p + idx] = c.g;
  img[2 * p + idx] = c.b;
}

}  // namespace detail

/// [3, H, W] image in [0, 1] seen from the vehicle.
inline Tensor<float> render(const Course& course, const VehicleState& v, const Camera& cam = {}) {
  if (!course.inside(v.position)) throw DomainError("render: vehicle is outside the course");
  const std::size_t w = cam.width, h = cam.height, p = w * h;
  Tensor<float> img({3, h, w});
  const double half_tan = std::tan(0.5 * cam.horizontal_fov);
  const double focal = 0.5 * static_cast<double>(w) / half_tan;
  const double cx = 0.5 * static_cast<double>(w), cy = 0.5 * static_cast<double>(h);
  const Vec2 fwd = heading_vector(v.heading);
  const Vec2 left{-fwd.y, fwd.x};
  const double hc = cam.mount_height;

  std::vector<double> column_depth(w);
  for (std::size_t col = 0; col < w; ++col) {
    const double xn = (static_cast<double>(col) + 0.5 - cx) / focal;  // right positive
    const Vec2 dir = fwd + left * (-xn);  // unit forward component: parameter = depth
    const WallPanel* panel = nullptr;
    const double depth = detail::cast_ray(course, v.position, dir, &panel);
    column_depth[col] = depth;
    for (std::size_t row = 0; row < h; ++row) {
      const double yn = (static_cast<double>(row) + 0.5 - cy) / focal;  // down positive
      const std::size_t idx = row * w + col;
      if (yn > 0.0) {
        const double floor_depth = hc / yn;
        if (floor_depth < depth) {
          const Vec2 q = v.position + dir * floor_depth;
          const bool line = course.stop_lines[0].contains(q) || course.stop_lines[1].contains(q);
          detail::put(img, p, idx, line ? course.line_color : course.floor);
          continue;
        }
      }
      const double z = hc - yn * depth;
      if (panel != nullptr && z <= course.wall_height) {
        detail::put(img, p, idx, panel->color);
      } else {
        detail::put(img, p, idx, course.ceiling);
      }
    }
  }

  // Stop sign billboard.
  const Vec2 rel = course.sign_position - v.position;
  const double fz = dot(rel, fwd);
  if (fz > 0.05) {
    const double lat = dot(rel, left);
    const double xc = cx - focal * lat / fz;
    const double yc = cy - focal * (course.sign_height - hc) / fz;
    const double r = focal * course.sign_radius / fz;
    const double diag = r * std::numbers::sqrt2;
    const auto c0 = static_cast<std::ptrdiff_t>(std::floor(xc - r));
    const auto c1 = static_cast<std::ptrdiff_t>(std::ceil(xc + r));
    const auto r0 = static_cast<std::ptrdiff_t>(std::floor(yc - r));
    const auto r1 = static_cast<std::ptrdiff_t>(std::ceil(yc + r));
    for (std::ptrdiff_t col = std::max<std::ptrdiff_t>(c0, 0);
         col <= std::min<std::ptrdiff_t>(c1, static_cast<std::ptrdiff_t>(w) - 1); ++col) {
      if (column_depth[static_cast<std::size_t>(col)] < fz) continue;
      const double dx = std::abs(static_cast<double>(col) + 0.5 - xc);
      for (std::ptrdiff_t row = std::max<std::ptrdiff_t>(r0, 0);
           row <= std::min<std::ptrdiff_t>(r1, static_cast<std::ptrdiff_t>(h) - 1); ++row) {
        const double dy = std::abs(static_cast<double>(row) + 0.5 - yc);
        if (dx <= r && dy <= r && dx + dy <= diag) {
          detail::put(img, p, static_cast<std::size_t>(row) * w + static_cast<std::size_t>(col),
                      course.sign_color);
        }
      }
    }
  }
  return img;
}

/// Pixel looks like the sign: strongly red.
inline bool is_sign_red(float r, float g, float b) { return r > 0.7f && g < 0.2f && b < 0.2f; }

}  // namespace tsbc::sim
