// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "tsbc/training.hpp"

namespace tsbc {
namespace {

Architecture small_arch() {
  Architecture a;
  a.in_channels = 3;
  a.in_height = a.in_width = 8;
  a.conv.push_back({4, {3, 2, 1}, true});
  a.conv.push_back({8, {4, 1, 0}, false});
  a.dense = {8};
  a.action_dim = 2;
  return a;
}

// Action is a smooth function of the image plus small noise; the last
// `outliers` training frames get wildly wrong labels.
Dataset synthetic(std::size_t n_train, std::size_t n_test, std::size_t outliers, std::uint64_t seed) {
  Dataset ds;
  ds.height = ds.width = 8;
  Rng rng(seed);
  auto make = [&](std::size_t n, Split split, std::size_t bad) {
    Trajectory t;
    t.split = split;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = rng.uniform(), v = rng.uniform();
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t p = 0; p < 64; ++p) {
          const double x = static_cast<double>(p % 8) / 7.0;
          t.images.push_back(static_cast<float>(c == 0 ? u * x : c == 1 ? v * (1 - x) : 0.5));
        }
      }
      double a0 = u - 0.5 + 0.02 * rng.normal(), a1 = v - 0.5 + 0.02 * rng.normal();
      if (i + bad >= n) {
        a0 = rng.uniform(-1, 1) > 0 ? 1.0 : -1.0;
        a1 = -a0;
      }
      t.actions.push_back(static_cast<float>(a0));
      t.actions.push_back(static_cast<float>(a1));
    }
    ds.trajectories.push_back(std::move(t));
  };
  make(n_train, Split::train, outliers);
  make(n_test, Split::test, 0);
  return ds;
}

TrainConfig fast(double q, std::uint64_t seed = 1) { return TrainConfig{q, 3e-3, 16, seed}; }

template <class T>
bool same_parameters(const PolicyNetwork<T>& a, const PolicyNetwork<T>& b) {
  return a.parameters() == b.parameters();
}

TEST(Trainer, QOneMatchesPlainNllBitForBit) {
  const Dataset ds = synthetic(96, 16, 4, 3);
  const FrameSet train = frames_of(ds, Split::train);
  auto init = PolicyNetwork<float>::initialized(small_arch(), 5);
  BcTrainer<float> q_path(init, fast(1.0), LossPath::q_log);
  BcTrainer<float> nll_path(init, fast(1.0), LossPath::nll);
  for (int e = 0; e < 10; ++e) {
    const EpochStats a = q_path.train_epoch(train);
    const EpochStats b = nll_path.train_epoch(train);
    EXPECT_EQ(a.train_loss, b.train_loss) << "epoch " << e;
    ASSERT_TRUE(same_parameters(q_path.network(), nll_path.network())) << "epoch " << e;
  }
  EXPECT_EQ(q_path.optimizer().step, nll_path.optimizer().step);
}

TEST(Trainer, DeterministicPerSeed) {
  const Dataset ds = synthetic(64, 8, 0, 4);
  const FrameSet train = frames_of(ds, Split::train);
  auto init = PolicyNetwork<float>::initialized(small_arch(), 2);
  BcTrainer<float> a(init, fast(0.8, 7)), b(init, fast(0.8, 7)), c(init, fast(0.8, 8));
  for (int e = 0; e < 3; ++e) {
    a.train_epoch(train);
    b.train_epoch(train);
    c.train_epoch(train);
  }
  EXPECT_TRUE(same_parameters(a.network(), b.network()));
  EXPECT_FALSE(same_parameters(a.network(), c.network()));
  EXPECT_EQ(a.epochs_done(), 3u);
}

TEST(Trainer, ReducesTestNll) {
  const Dataset ds = synthetic(128, 32, 0, 5);
  const FrameSet train = frames_of(ds, Split::train), test = frames_of(ds, Split::test);
  BcTrainer<float> t(PolicyNetwork<float>::initialized(small_arch(), 1), fast(0.9));
  const double before = evaluate_nll(t.network(), test);
  for (int e = 0; e < 15; ++e) t.train_epoch(train);
  EXPECT_LT(evaluate_nll(t.network(), test), before - 0.5);
}

TEST(Trainer, EpochStatsAccountForEveryFrame) {
  const Dataset ds = synthetic(50, 8, 3, 6);
  const FrameSet train = frames_of(ds, Split::train);
  BcTrainer<float> t(PolicyNetwork<float>::initialized(small_arch(), 1), fast(0.7));
  const EpochStats st = t.train_epoch(train);
  EXPECT_EQ(st.epoch, 1u);
  EXPECT_EQ(std::accumulate(st.weight_histogram.begin(), st.weight_histogram.end(), std::size_t{0}), 50u);
  EXPECT_GE(st.max_weight, st.mean_weight);
  EXPECT_GT(st.mean_weight, 0.0);
}

TEST(Trainer, QOneWeightsAreAllOne) {
  const Dataset ds = synthetic(40, 8, 2, 6);
  BcTrainer<float> t(PolicyNetwork<float>::initialized(small_arch(), 1), fast(1.0));
  const EpochStats st = t.train_epoch(frames_of(ds, Split::train));
  EXPECT_EQ(st.mean_weight, 1.0);
  EXPECT_EQ(st.max_weight, 1.0);
  EXPECT_EQ(st.weight_histogram[weight_bin(1.0)], 40u);
}

TEST(Trainer, SmallQDownweightsOutliers) {
  // After fitting the clean majority, corrupted frames carry the smallest weights.
  const Dataset ds = synthetic(120, 8, 6, 8);
  const FrameSet train = frames_of(ds, Split::train);
  BcTrainer<float> t(PolicyNetwork<float>::initialized(small_arch(), 1), fast(0.8));
  for (int e = 0; e < 15; ++e) t.train_epoch(train);
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto fwd = t.network().forward(train.batch_images(idx), false);
  const LossBatchResult r = bc_loss(fwd.gaussians, train.batch_actions(idx), 0.8);
  double clean_min = 1e300, outlier_max = 0.0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i + 6 >= idx.size()) {
      outlier_max = std::max(outlier_max, r.per_sample_weight[i]);
    } else {
      clean_min = std::min(clean_min, r.per_sample_weight[i]);
    }
  }
  EXPECT_LT(outlier_max, clean_min);
}

TEST(Trainer, EvaluateNllIsBatchSizeInvariant) {
  const Dataset ds = synthetic(10, 37, 0, 9);
  const FrameSet test = frames_of(ds, Split::test);
  const auto net = PolicyNetwork<double>::initialized(small_arch(), 4);
  EXPECT_NEAR(evaluate_nll(net, test, 5), evaluate_nll(net, test, 256), 1e-12);
}

TEST(Trainer, RejectsBadConfig) {
  const auto net = PolicyNetwork<float>::initialized(small_arch(), 1);
  EXPECT_THROW(BcTrainer<float>(net, TrainConfig{0.0, 1e-3, 8, 1}), ConfigError);
  EXPECT_THROW(BcTrainer<float>(net, TrainConfig{1.2, 1e-3, 8, 1}), ConfigError);
  EXPECT_THROW(BcTrainer<float>(net, TrainConfig{0.8, 1e-3, 0, 1}), ConfigError);
  EXPECT_THROW(BcTrainer<float>(net, TrainConfig{0.8, 0.0, 8, 1}), ConfigError);
  BcTrainer<float> t(net, fast(0.8));
  EXPECT_THROW(t.train_epoch(FrameSet{}), ConfigError);
}

TEST(WeightBins, EdgesAreUpperExclusive) {
  EXPECT_EQ(weight_bin(0.0), 0u);
  EXPECT_EQ(weight_bin(0.01), 1u);
  EXPECT_EQ(weight_bin(0.99), 5u);
  EXPECT_EQ(weight_bin(1.0), 6u);
  EXPECT_EQ(weight_bin(100.0), kWeightBinEdges.size());
}

}  // namespace
}  // namespace tsbc
