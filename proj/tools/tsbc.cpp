// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

// tsbc: generate datasets, train and sweep q, roll out policies, export
// attention maps. Prints one JSON result line on success; on failure prints a
// JSON error record to stderr and exits nonzero.

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tsbc/harness/commands.hpp"

namespace {

using tsbc::harness::ExperimentConfig;
using nlohmann::json;

int fail(const std::string& kind, const std::string& message) {
  std::cerr << json{{"type", "error"}, {"kind", kind}, {"message", message}}.dump() << std::endl;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tsallis-loss behavioral cloning toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::optional<std::string> out;
  bool paper_scale = false;
  app.add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", seeds, "Training seeds (space or comma separated)")->delimiter(',');
  app.add_option("--out", out, "Output directory");
  app.add_flag("--paper-scale", paper_scale, "96x96 frames, 50 fps, 90 trajectories, paper optimizer");

  // Flags that mirror config keys; unset ones leave the config untouched.
  std::optional<std::uint64_t> dataset_seed;
  std::optional<std::size_t> n_trajectories, n_noisy, epochs, batch_size, count;
  std::optional<double> q, lr, top_fraction;
  std::vector<double> q_list;
  std::vector<std::size_t> frames;
  std::string dataset, weights;
  bool dump_frames = false, all = false, normalize = false, include_fcn = false;

  auto* gen = app.add_subcommand("generate", "Simulate demonstrations and write a dataset");
  gen->add_option("--dataset-seed", dataset_seed, "Master seed of the simulator");
  gen->add_option("--trajectories", n_trajectories, "Number of trajectories");
  gen->add_option("--noisy", n_noisy, "Number of corrupted training trajectories");

  auto add_training = [&](CLI::App* c) {
    c->add_option("--dataset", dataset, "Dataset file (default <out>/dataset.tbcd)");
    c->add_option("--epochs", epochs, "Epochs per seed");
    c->add_option("--lr", lr, "Adam learning rate");
    c->add_option("--batch-size", batch_size, "Minibatch size");
  };
  auto* train = app.add_subcommand("train", "Train one q for every seed");
  add_training(train);
  train->add_option("--q", q, "Tsallis q in (0, 1]");
  auto* sweep = app.add_subcommand("sweep", "Train every q x seed and rank by test NLL");
  add_training(sweep);
  sweep->add_option("--q-list", q_list, "q values")->delimiter(',');

  auto* roll = app.add_subcommand("rollout", "Closed-loop rollouts of a trained policy");
  roll->add_option("--weights", weights, "Weight file")->required()->check(CLI::ExistingFile);
  roll->add_option("--count", count, "Number of jittered starts");
  roll->add_flag("--dump-frames", dump_frames, "Write every rendered frame as P6");

  auto* vis = app.add_subcommand("visualize", "Export VisualBackProp attention maps");
  vis->add_option("--weights", weights, "Weight file")->required()->check(CLI::ExistingFile);
  vis->add_option("--dataset", dataset, "Dataset file (default <out>/dataset.tbcd)");
  vis->add_option("--frames", frames, "Test-split frame indices")->delimiter(',');
  vis->add_flag("--all", all, "Emit all four variants");
  vis->add_flag("--normalize", normalize, "Normalize features before the products");
  vis->add_flag("--include-fcn", include_fcn, "Propagate through the dense layers");
  vis->add_option("--top-fraction", top_fraction, "Fraction of dense weights kept");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage_error", e.what());
  }

  try {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : tsbc::harness::load_config(config_path);
    if (paper_scale) tsbc::harness::apply_paper_scale(cfg);
    if (!seeds.empty()) cfg.training.seeds = seeds;
    if (out) cfg.out = *out;
    if (dataset_seed) cfg.dataset.seed = *dataset_seed;
    if (n_trajectories) cfg.dataset.n_trajectories = *n_trajectories;
    if (n_noisy) cfg.dataset.n_noisy = *n_noisy;
    if (epochs) cfg.training.epochs = *epochs;
    if (lr) cfg.training.learning_rate = *lr;
    if (batch_size) cfg.training.batch_size = *batch_size;
    if (q) cfg.training.q = *q;
    if (!q_list.empty()) cfg.q_list = q_list;
    if (count) cfg.rollout.count = *count;
    if (dump_frames) cfg.rollout.dump_frames = true;
    if (!frames.empty()) cfg.visualize.frames = frames;
    if (all) cfg.visualize.all = true;
    if (normalize) cfg.vbp.normalize_features = true;
    if (include_fcn) cfg.vbp.include_fcn = true;
    if (top_fraction) cfg.vbp.top_fraction = *top_fraction;
    if (dataset.empty()) dataset = tsbc::harness::default_dataset_path(cfg);

    json result;
    if (gen->parsed()) {
      result = tsbc::harness::cmd_generate(cfg);
    } else if (train->parsed()) {
      result = tsbc::harness::cmd_train(cfg, dataset);
    } else if (sweep->parsed()) {
      result = tsbc::harness::cmd_sweep(cfg, dataset);
    } else if (roll->parsed()) {
      result = tsbc::harness::cmd_rollout(cfg, weights);
    } else {
      result = tsbc::harness::cmd_visualize(cfg, weights, dataset);
    }
    std::cout << result.dump() << std::endl;
  } catch (const std::exception& e) {
    return fail(tsbc::error_kind(e), e.what());
  }
  return 0;
}
