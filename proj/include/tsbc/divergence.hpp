// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "tsbc/gaussian.hpp"
#include "tsbc/tsallis.hpp"

namespace tsbc {

struct MonteCarloEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Monte-Carlo estimate of the Tsallis divergence
///   KL_q(p1 || p2) = -E_{x ~ p1}[ln_q(p2(x) / p1(x))].
/// Diagnostic only; q = 1 is the ordinary KL divergence.
inline MonteCarloEstimate mc_tsallis_divergence_estimate(const DiagonalGaussian& p1,
                                                         const DiagonalGaussian& p2, double q,
                                                         std::size_t n_samples,
                                                         std::uint64_t seed) {
  if (p1.dim() != p2.dim()) throw ShapeError("mc_tsallis_divergence: dimension mismatch");
  if (n_samples == 0) throw ConfigError("mc_tsallis_divergence: n_samples must be >= 1");
  Rng rng(seed);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t n = 0; n < n_samples; ++n) {
    const std::vector<double> x = sample(p1, rng);
    const double log_ratio = log_likelihood(p2, x) - log_likelihood(p1, x);
    const double term = -q_log_from_log(log_ratio, q);
    sum += term;
    sum_sq += term * term;
  }
  const double n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = n > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1)) : 0.0;
  return {mean, std::sqrt(var / n)};
}

inline double mc_tsallis_divergence(const DiagonalGaussian& p1, const DiagonalGaussian& p2,
                                    double q, std::size_t n_samples, std::uint64_t seed) {
  return mc_tsallis_divergence_estimate(p1, p2, q, n_samples, seed).value;
}

}  // namespace tsbc
