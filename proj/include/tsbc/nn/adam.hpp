// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>

#include "tsbc/error.hpp"
#include "tsbc/nn/network.hpp"

namespace tsbc {

struct AdamConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  ParameterSet<T> first_moment;
  ParameterSet<T> second_moment;

  AdamState() = default;
  AdamState(const ParameterSet<T>& params, AdamConfig cfg)
      : config(cfg), first_moment(zeros_like(params)), second_moment(zeros_like(params)) {}
};

/// One bias-corrected Adam update in place.
template <class T>
void adam_step(ParameterSet<T>& params, const ParameterSet<T>& grads, AdamState<T>& state) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: parameter/gradient/state count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].data.size() != params[i].data.size() ||
        state.first_moment[i].data.size() != params[i].data.size() ||
        state.second_moment[i].data.size() != params[i].data.size()) {
      throw ShapeError("adam_step: shape mismatch for " + params[i].name);
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].data;
    const auto& g = grads[i].data;
    auto& m = state.first_moment[i].data;
    auto& v = state.second_moment[i].data;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = c.beta1 * static_cast<double>(m[j]) + (1.0 - c.beta1) * gj;
      const double vj = c.beta2 * static_cast<double>(v[j]) + (1.0 - c.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double m_hat = mj / bc1;
      const double v_hat = vj / bc2;
      p[j] = static_cast<T>(static_cast<double>(p[j]) -
                            c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon));
    }
  }
}

}  // namespace tsbc
