// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <vector>

#include "tsbc/dataset.hpp"
#include "tsbc/gaussian.hpp"
#include "tsbc/nn/adam.hpp"
#include "tsbc/nn/network.hpp"
#include "tsbc/random.hpp"

namespace tsbc {

struct TrainConfig {
  double q = 0.8;
  double learning_rate = 1e-5;
  std::size_t batch_size = 512;
  std::uint64_t seed = 1;
};

/// Which objective drives the update. `nll` is the dedicated plain
/// behavioral-cloning path, kept separate from the q-log path on purpose so
/// the q = 1 reduction can be checked against it.
enum class LossPath { q_log, nll };

/// Upper edges of the per-sample weight histogram bins; the last bin is open.
inline constexpr std::array<double, 10> kWeightBinEdges = {0.01, 0.1, 0.25, 0.5, 0.75,
                                                           1.0,  1.5, 2.0,  4.0, 8.0};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double mean_weight = 0.0;
  double max_weight = 0.0;
  std::array<std::size_t, kWeightBinEdges.size() + 1> weight_histogram{};
};

inline std::size_t weight_bin(double w) {
  for (std::size_t i = 0; i < kWeightBinEdges.size(); ++i) {
    if (w < kWeightBinEdges[i]) return i;
  }
  return kWeightBinEdges.size();
}

/// Network + optimizer state; single writer.
template <class T>
class BcTrainer {
 public:
  BcTrainer(PolicyNetwork<T> net, TrainConfig cfg, LossPath path = LossPath::q_log)
      : net_(std::move(net)), cfg_(cfg), path_(path) {
    if (path_ == LossPath::q_log) (void)QParam(cfg_.q);
    if (cfg_.batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(cfg_.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    AdamConfig ac;
    ac.learning_rate = cfg_.learning_rate;
    adam_ = AdamState<T>(net_.parameters(), ac);
  }

  const PolicyNetwork<T>& network() const { return net_; }
  PolicyNetwork<T>& network() { return net_; }
  const AdamState<T>& optimizer() const { return adam_; }
  const TrainConfig& config() const { return cfg_; }
  std::size_t epochs_done() const { return epoch_; }

  /// One pass over every training frame in a seeded random order.
  EpochStats train_epoch(const FrameSet& train) {
    if (train.size() == 0) throw ConfigError("train_epoch: empty dataset");
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg_.seed, epoch_));
    rng.shuffle(order);

    EpochStats stats;
    stats.epoch = epoch_ + 1;
    double loss_sum = 0.0, weight_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor<float> images = train.batch_images(idx);
      const std::vector<double> actions = train.batch_actions(idx);

      ForwardResult<T> fwd = net_.forward(images, true);
      const LossBatchResult loss = path_ == LossPath::q_log
                                       ? bc_loss(fwd.gaussians, actions, cfg_.q)
                                       : nll_loss(fwd.gaussians, actions);
      const ParameterSet<T> grads =
          path_ == LossPath::q_log
              ? net_.backward(*fwd.cache, loss.nll_gradient, loss.per_sample_weight)
              : net_.backward(*fwd.cache, loss.nll_gradient);
      adam_step(net_.parameters(), grads, adam_);

      loss_sum += loss.loss * static_cast<double>(idx.size());
      for (double w : loss.per_sample_weight) {
        weight_sum += w;
        stats.max_weight = std::max(stats.max_weight, w);
        ++stats.weight_histogram[weight_bin(w)];
      }
    }
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    stats.mean_weight = weight_sum / static_cast<double>(order.size());
    ++epoch_;
    return stats;
  }

 private:
  PolicyNetwork<T> net_;
  TrainConfig cfg_;
  LossPath path_;
  AdamState<T> adam_;
  std::size_t epoch_ = 0;
};

/// Mean plain NLL over a frame set, independent of the training q.
template <class T>
double evaluate_nll(const PolicyNetwork<T>& net, const FrameSet& frames,
                    std::size_t batch_size = 256) {
  if (frames.size() == 0) throw ConfigError("evaluate_nll: empty dataset");
  double sum = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < frames.size(); start += batch_size) {
    const std::size_t end = std::min(frames.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const ForwardResult<T> fwd = net.forward(frames.batch_images(idx), false);
    const std::vector<double> actions = frames.batch_actions(idx);
    const LossBatchResult r = nll_loss(fwd.gaussians, actions);
    sum += r.loss * static_cast<double>(idx.size());
  }
  return sum / static_cast<double>(frames.size());
}

}  // namespace tsbc
