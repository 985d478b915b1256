// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

// q-deformed logarithm and the per-sample gradient ratio it induces.
//
//   ln_q(x) = ln(x)                      q = 1
//           = (x^(1-q) - 1) / (1 - q)    q != 1
//
// Written as a function of u = ln(x), ln_q = expm1((1-q) u) / (1-q), whose
// derivative with respect to u is rho(u) = exp((1-q) u). rho is the factor by
// which the q-loss scales the plain NLL gradient of a sample.

#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "tsbc/error.hpp"

namespace tsbc {

/// |q - 1| below this evaluates the logarithm branch.
inline constexpr double kQOneTolerance = 1e-9;

/// Deformation parameter. Loss construction requires q in (0, 1]; the pure
/// math functions accept any finite q.
class QParam {
 public:
  /// For training use; throws ConfigError outside (0, 1].
  explicit QParam(double q) : q_(q) {
    if (!std::isfinite(q) || !(q > 0.0) || q > 1.0) {
      throw ConfigError("q must lie in (0, 1], got " + std::to_string(q));
    }
  }

  /// Unchecked construction for mathematical evaluation (q > 1 allowed).
  static QParam any(double q) {
    if (!std::isfinite(q)) throw DomainError("q must be finite");
    QParam p;
    p.q_ = q;
    return p;
  }

  double value() const { return q_; }
  bool is_log() const { return std::abs(q_ - 1.0) < kQOneTolerance; }

 private:
  QParam() = default;
  double q_ = 1.0;
};

/// ln_q evaluated from log(x). Stays accurate when exp(log_x) would underflow.
inline double q_log_from_log(double log_x, double q) {
  if (!std::isfinite(log_x) || !std::isfinite(q)) {
    throw DomainError("q_log_from_log: non-finite input");
  }
  if (std::abs(q - 1.0) < kQOneTolerance) return log_x;
  const double a = 1.0 - q;
  return std::expm1(a * log_x) / a;
}

inline double q_log(double x, double q) {
  if (!std::isfinite(x) || !(x > 0.0)) {
    throw DomainError("q_log: x must be positive and finite");
  }
  if (!std::isfinite(q)) throw DomainError("q_log: q must be finite");
  return q_log_from_log(std::log(x), q);
}

/// rho(log_x) = exp((1-q) log_x) = d ln_q / d ln x. Not clipped: densities
/// above one give rho > 1 for q < 1.
inline double gradient_ratio(double log_x, double q) {
  if (!std::isfinite(log_x) || !std::isfinite(q)) {
    throw DomainError("gradient_ratio: non-finite input");
  }
  return std::exp((1.0 - q) * log_x);
}

struct DecompositionSides {
  double lhs;  ///< ln_q(y / x)
  double rhs;  ///< x^(q-1) (ln_q y - ln_q x)
};

/// Both sides of the quotient rule ln_q(y/x) = x^(q-1) (ln_q y - ln_q x).
inline DecompositionSides q_log_ratio_decomposition(double x, double y, double q) {
  if (!(x > 0.0) || !(y > 0.0) || !std::isfinite(x) || !std::isfinite(y)) {
    throw DomainError("q_log_ratio_decomposition: x and y must be positive");
  }
  const double lhs = q_log(y / x, q);
  const double rhs = std::pow(x, q - 1.0) * (q_log(y, q) - q_log(x, q));
  return {lhs, rhs};
}

}  // namespace tsbc
