// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment configuration: one JSON tree, every key optional, unknown keys
// rejected. Command-line flags are applied on top by the CLI.

#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "tsbc/error.hpp"
#include "tsbc/nn/architecture.hpp"
#include "tsbc/sim/collect.hpp"
#include "tsbc/sim/rollout.hpp"
#include "tsbc/tsallis.hpp"
#include "tsbc/vbp/visualbackprop.hpp"

namespace tsbc::harness {

using json = nlohmann::json;

struct TrainingSection {
  double q = 0.8;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

struct RolloutSection {
  std::size_t count = 20;
  std::uint64_t seed = 1;
  std::size_t max_steps = 400;
  bool dump_frames = false;
};

struct VisualizeSection {
  bool all = false;
  std::vector<std::size_t> frames{0};  ///< indices into the test split
};

struct ExperimentConfig {
  sim::CollectConfig dataset;
  std::string architecture = "desk";
  TrainingSection training;
  std::vector<double> q_list{1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1};
  RolloutSection rollout;
  VbpConfig vbp;
  VisualizeSection visualize;
  std::string out = "runs";

  Architecture network_architecture() const {
    Architecture a = architecture_by_name(architecture);
    if (a.in_height != dataset.resolution || a.in_width != dataset.resolution) {
      throw ConfigError("architecture '" + architecture + "' expects " +
                        std::to_string(a.in_height) + "x" + std::to_string(a.in_width) +
                        " frames but dataset.resolution is " + std::to_string(dataset.resolution));
    }
    return a;
  }

  sim::RolloutConfig rollout_config() const {
    sim::RolloutConfig r;
    r.fps = dataset.fps;
    r.resolution = dataset.resolution;
    r.max_steps = rollout.max_steps;
    r.record_frames = rollout.dump_frames;
    r.kinematics = dataset.kinematics;
    return r;
  }

  void validate() const {
    dataset.validate();
    (void)network_architecture();
    (void)QParam(training.q);
    if (!(training.learning_rate > 0.0)) throw ConfigError("training.learning_rate must be positive");
    if (training.batch_size == 0) throw ConfigError("training.batch_size must be positive");
    if (training.epochs == 0) throw ConfigError("training.epochs must be positive");
    if (training.seeds.empty()) throw ConfigError("training.seeds must not be empty");
    if (q_list.empty()) throw ConfigError("sweep.q_list must not be empty");
    for (double q : q_list) (void)QParam(q);
    if (rollout.count == 0) throw ConfigError("rollout.count must be positive");
    vbp.validate();
    if (out.empty()) throw ConfigError("out must not be empty");
  }
};

/// Switches dataset, architecture and optimizer to the full-size protocol.
inline void apply_paper_scale(ExperimentConfig& c) {
  const std::uint64_t seed = c.dataset.seed;
  c.dataset = sim::paper_scale_collect_config();
  c.dataset.seed = seed;
  c.architecture = "paper";
  c.training.learning_rate = 1e-5;
  c.training.batch_size = 512;
  c.training.epochs = 100;
}

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::set<std::string> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  using detail::read;
  ExperimentConfig c;
  detail::check_keys(j, "config", {"dataset", "architecture", "training", "sweep", "rollout", "vbp",
                                   "visualize", "out"});
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    detail::check_keys(d, "dataset", {"n_trajectories", "n_noisy", "n_test", "resolution", "fps",
                                      "seed", "noise_modes", "action_noise", "max_steps",
                                      "zigzag_amplitude", "zigzag_period", "zigzag_jitter"});
    read(d, "n_trajectories", c.dataset.n_trajectories, "dataset");
    read(d, "n_noisy", c.dataset.n_noisy, "dataset");
    read(d, "n_test", c.dataset.n_test, "dataset");
    read(d, "resolution", c.dataset.resolution, "dataset");
    read(d, "fps", c.dataset.fps, "dataset");
    read(d, "seed", c.dataset.seed, "dataset");
    read(d, "action_noise", c.dataset.action_noise, "dataset");
    read(d, "max_steps", c.dataset.max_steps, "dataset");
    read(d, "zigzag_amplitude", c.dataset.noise.amplitude, "dataset");
    read(d, "zigzag_period", c.dataset.noise.period, "dataset");
    read(d, "zigzag_jitter", c.dataset.noise.jitter, "dataset");
    if (d.contains("noise_modes")) {
      std::vector<std::string> modes;
      read(d, "noise_modes", modes, "dataset");
      c.dataset.noise_modes.clear();
      for (const std::string& m : modes) c.dataset.noise_modes.push_back(sim::noise_mode_from_string(m));
    }
  }
  read(j, "architecture", c.architecture, "config");
  if (j.contains("training")) {
    const json& t = j["training"];
    detail::check_keys(t, "training", {"q", "learning_rate", "batch_size", "epochs", "seeds"});
    read(t, "q", c.training.q, "training");
    read(t, "learning_rate", c.training.learning_rate, "training");
    read(t, "batch_size", c.training.batch_size, "training");
    read(t, "epochs", c.training.epochs, "training");
    read(t, "seeds", c.training.seeds, "training");
  }
  if (j.contains("sweep")) {
    detail::check_keys(j["sweep"], "sweep", {"q_list"});
    read(j["sweep"], "q_list", c.q_list, "sweep");
  }
  if (j.contains("rollout")) {
    const json& r = j["rollout"];
    detail::check_keys(r, "rollout", {"count", "seed", "max_steps", "dump_frames"});
    read(r, "count", c.rollout.count, "rollout");
    read(r, "seed", c.rollout.seed, "rollout");
    read(r, "max_steps", c.rollout.max_steps, "rollout");
    read(r, "dump_frames", c.rollout.dump_frames, "rollout");
  }
  if (j.contains("vbp")) {
    const json& v = j["vbp"];
    detail::check_keys(v, "vbp", {"normalize", "include_fcn", "top_fraction"});
    read(v, "normalize", c.vbp.normalize_features, "vbp");
    read(v, "include_fcn", c.vbp.include_fcn, "vbp");
    read(v, "top_fraction", c.vbp.top_fraction, "vbp");
  }
  if (j.contains("visualize")) {
    const json& v = j["visualize"];
    detail::check_keys(v, "visualize", {"all", "frames"});
    read(v, "all", c.visualize.all, "visualize");
    read(v, "frames", c.visualize.frames, "visualize");
  }
  read(j, "out", c.out, "config");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

inline json config_to_json(const ExperimentConfig& c) {
  std::vector<std::string> modes;
  for (Provenance p : c.dataset.noise_modes) modes.emplace_back(to_string(p));
  return {
      {"dataset",
       {{"n_trajectories", c.dataset.n_trajectories},
        {"n_noisy", c.dataset.n_noisy},
        {"n_test", c.dataset.n_test},
        {"resolution", c.dataset.resolution},
        {"fps", c.dataset.fps},
        {"seed", c.dataset.seed},
        {"noise_modes", modes},
        {"action_noise", c.dataset.action_noise},
        {"max_steps", c.dataset.max_steps},
        {"zigzag_amplitude", c.dataset.noise.amplitude},
        {"zigzag_period", c.dataset.noise.period},
        {"zigzag_jitter", c.dataset.noise.jitter}}},
      {"architecture", c.architecture},
      {"training",
       {{"q", c.training.q},
        {"learning_rate", c.training.learning_rate},
        {"batch_size", c.training.batch_size},
        {"epochs", c.training.epochs},
        {"seeds", c.training.seeds}}},
      {"sweep", {{"q_list", c.q_list}}},
      {"rollout",
       {{"count", c.rollout.count},
        {"seed", c.rollout.seed},
        {"max_steps", c.rollout.max_steps},
        {"dump_frames", c.rollout.dump_frames}}},
      {"vbp",
       {{"normalize", c.vbp.normalize_features},
        {"include_fcn", c.vbp.include_fcn},
        {"top_fraction", c.vbp.top_fraction}}},
      {"visualize", {{"all", c.visualize.all}, {"frames", c.visualize.frames}}},
      {"out", c.out},
  };
}

}  // namespace tsbc::harness
