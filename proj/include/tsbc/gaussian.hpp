// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

// Diagonal-Gaussian policy head: densities, the plain behavioral-cloning NLL
// and its q-deformed counterpart.

#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "tsbc/error.hpp"
#include "tsbc/random.hpp"
#include "tsbc/tsallis.hpp"

namespace tsbc {

/// Lower bound added to every predicted variance.
inline constexpr double kVarianceFloor = 1e-6;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

class DiagonalGaussian {
 public:
  DiagonalGaussian(std::vector<double> mean, std::vector<double> variance)
      : mean_(std::move(mean)), variance_(std::move(variance)) {
    if (mean_.size() != variance_.size() || mean_.empty()) {
      throw ShapeError("DiagonalGaussian: mean/variance dimension mismatch");
    }
    for (std::size_t i = 0; i < mean_.size(); ++i) {
      if (!std::isfinite(mean_[i])) throw DomainError("DiagonalGaussian: non-finite mean");
      if (!std::isfinite(variance_[i]) || variance_[i] < kVarianceFloor) {
        throw DomainError("DiagonalGaussian: variance below floor or non-finite");
      }
    }
  }

  std::size_t dim() const { return mean_.size(); }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& variance() const { return variance_; }

 private:
  std::vector<double> mean_;
  std::vector<double> variance_;
};

/// Row-major B x A batch of Gaussian parameters, as emitted by the network.
struct GaussianBatch {
  std::size_t batch = 0;
  std::size_t dim = 0;
  std::vector<double> mean;
  std::vector<double> variance;

  GaussianBatch() = default;
  GaussianBatch(std::size_t b, std::size_t a)
      : batch(b), dim(a), mean(b * a, 0.0), variance(b * a, 1.0) {}

  DiagonalGaussian at(std::size_t i) const {
    return DiagonalGaussian(
        std::vector<double>(mean.begin() + i * dim, mean.begin() + (i + 1) * dim),
        std::vector<double>(variance.begin() + i * dim, variance.begin() + (i + 1) * dim));
  }
};

namespace detail {

inline double log_density(std::span<const double> mean, std::span<const double> var,
                          std::span<const double> action) {
  double ll = 0.0;
  for (std::size_t d = 0; d < mean.size(); ++d) {
    const double r = action[d] - mean[d];
    ll -= 0.5 * (kLog2Pi + std::log(var[d]) + r * r / var[d]);
  }
  return ll;
}

}  // namespace detail

/// Sum over dimensions of the univariate normal log-density.
inline double log_likelihood(const DiagonalGaussian& g, std::span<const double> action) {
  if (action.size() != g.dim()) throw ShapeError("log_likelihood: dimension mismatch");
  return detail::log_density(g.mean(), g.variance(), action);
}

/// d/d(mean, variance) of a batch-mean loss, row-major B x A.
struct HeadGradient {
  std::vector<double> d_mean;
  std::vector<double> d_variance;
};

struct LossBatchResult {
  double loss = 0.0;
  std::vector<double> per_sample_log_lik;
  std::vector<double> per_sample_weight;
  /// Gradient of the plain mean NLL. The q-loss gradient of sample i is
  /// per_sample_weight[i] times row i of this.
  HeadGradient nll_gradient;

  /// Gradient of `loss` itself: rho-scaled NLL gradient.
  HeadGradient loss_gradient() const {
    HeadGradient g = nll_gradient;
    const std::size_t b = per_sample_weight.size();
    const std::size_t a = b ? g.d_mean.size() / b : 0;
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t d = 0; d < a; ++d) {
        g.d_mean[i * a + d] *= per_sample_weight[i];
        g.d_variance[i * a + d] *= per_sample_weight[i];
      }
    }
    return g;
  }
};

namespace detail {

inline void check_batch(const GaussianBatch& g, std::span<const double> actions) {
  if (g.batch == 0) throw ShapeError("loss: empty batch");
  if (g.mean.size() != g.batch * g.dim || g.variance.size() != g.batch * g.dim) {
    throw ShapeError("loss: malformed Gaussian batch");
  }
  if (actions.size() != g.batch * g.dim) throw ShapeError("loss: action batch size mismatch");
}

/// Per-sample log-likelihoods and the NLL head gradient scaled by 1/B.
inline void nll_terms(const GaussianBatch& g, std::span<const double> actions,
                      std::vector<double>& ll, HeadGradient& grad) {
  const std::size_t b = g.batch, a = g.dim;
  const double inv_b = 1.0 / static_cast<double>(b);
  ll.resize(b);
  grad.d_mean.assign(b * a, 0.0);
  grad.d_variance.assign(b * a, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    const std::span<const double> mu(g.mean.data() + i * a, a);
    const std::span<const double> var(g.variance.data() + i * a, a);
    const std::span<const double> act(actions.data() + i * a, a);
    ll[i] = log_density(mu, var, act);
    if (!std::isfinite(ll[i])) throw NumericalError("loss: non-finite log-likelihood");
    for (std::size_t d = 0; d < a; ++d) {
      const double r = act[d] - mu[d];
      // -log N = 0.5 (log 2pi + log v + r^2 / v)
      grad.d_mean[i * a + d] = -r / var[d] * inv_b;
      grad.d_variance[i * a + d] = 0.5 * (1.0 / var[d] - r * r / (var[d] * var[d])) * inv_b;
    }
  }
}

}  // namespace detail

/// Plain behavioral-cloning objective: mean negative log-likelihood.
/// per_sample_weight is all ones.
inline LossBatchResult nll_loss(const GaussianBatch& g, std::span<const double> actions) {
  detail::check_batch(g, actions);
  LossBatchResult r;
  detail::nll_terms(g, actions, r.per_sample_log_lik, r.nll_gradient);
  double sum = 0.0;
  for (double ll : r.per_sample_log_lik) sum += -ll;
  r.loss = sum / static_cast<double>(g.batch);
  r.per_sample_weight.assign(g.batch, 1.0);
  return r;
}

/// q-log-likelihood objective, loss = -mean(ln_q pi(a|s)). q = 1 is the plain NLL.
inline LossBatchResult bc_loss(const GaussianBatch& g, std::span<const double> actions, double q) {
  const QParam qp(q);
  detail::check_batch(g, actions);
  LossBatchResult r;
  detail::nll_terms(g, actions, r.per_sample_log_lik, r.nll_gradient);
  r.per_sample_weight.resize(g.batch);
  double sum = 0.0;
  for (std::size_t i = 0; i < g.batch; ++i) {
    const double ll = r.per_sample_log_lik[i];
    sum += -q_log_from_log(ll, qp.value());
    r.per_sample_weight[i] = gradient_ratio(ll, qp.value());
    if (!std::isfinite(r.per_sample_weight[i])) {
      throw NumericalError("bc_loss: gradient ratio overflow");
    }
  }
  r.loss = sum / static_cast<double>(g.batch);
  return r;
}

/// a ~ N(mean, diag(variance)).
inline std::vector<double> sample(const DiagonalGaussian& g, Rng& rng) {
  std::vector<double> a(g.dim());
  for (std::size_t d = 0; d < g.dim(); ++d) {
    a[d] = g.mean()[d] + std::sqrt(g.variance()[d]) * rng.normal();
  }
  return a;
}

inline double softplus(double v) {
  return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

inline double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

/// Raw head output -> variance.
inline double variance_from_raw(double raw) { return softplus(raw) + kVarianceFloor; }

}  // namespace tsbc
