// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

// The five harness commands. Each writes its artifacts under cfg.out and
// returns the summary record it also printed to its report.

#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tsbc/dataset.hpp"
#include "tsbc/harness/config.hpp"
#include "tsbc/harness/report.hpp"
#include "tsbc/nn/weights_io.hpp"
#include "tsbc/pnm.hpp"
#include "tsbc/sim/collect.hpp"
#include "tsbc/sim/rollout.hpp"
#include "tsbc/training.hpp"
#include "tsbc/vbp/export.hpp"
#include "tsbc/vbp/visualbackprop.hpp"

namespace tsbc::harness {

namespace fs = std::filesystem;

inline std::string default_dataset_path(const ExperimentConfig& cfg) {
  return (fs::path(cfg.out) / "dataset.tbcd").string();
}

inline fs::path make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory '" + p.string() + "': " + ec.message());
  return p;
}

inline json dataset_summary(const Dataset& ds) {
  std::map<std::string, std::size_t> tags;
  for (Provenance p : {Provenance::clean, Provenance::zigzag, Provenance::non_stop,
                       Provenance::zigzag_non_stop}) {
    tags[to_string(p)] = 0;
  }
  std::size_t train = 0, test = 0;
  for (const Trajectory& t : ds.trajectories) {
    ++tags[to_string(t.tag)];
    (t.split == Split::train ? train : test) += 1;
  }
  return {{"trajectories", ds.trajectories.size()},
          {"noisy", ds.trajectories.size() - tags["clean"]},
          {"train_trajectories", train},
          {"test_trajectories", test},
          {"train_frames", ds.frame_count(Split::train)},
          {"test_frames", ds.frame_count(Split::test)},
          {"resolution", ds.width},
          {"fps", ds.fps},
          {"tags", tags}};
}

// ---------------------------------------------------------------- generate

inline json cmd_generate(const ExperimentConfig& cfg) {
  cfg.validate();
  make_dir(cfg.out);
  const Dataset ds = sim::collect_dataset(cfg.dataset);
  const std::string path = default_dataset_path(cfg);
  save_dataset(ds, path);
  json summary = dataset_summary(ds);
  summary["type"] = "generate";
  summary["dataset"] = "dataset.tbcd";
  summary["hash"] = file_hash(path);
  ReportWriter((fs::path(cfg.out) / "generate.jsonl").string()).write(summary);
  return summary;
}

// ---------------------------------------------------------------- train / sweep

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<double> train_loss;
  std::vector<double> test_nll;
  std::string weights;  ///< file name relative to the run directory
  std::string weights_hash;
};

struct QRun {
  double q = 1.0;
  std::vector<SeedRun> seeds;
  std::vector<double> mean_test_nll;    ///< per epoch, mean over seeds
  std::vector<double> mean_train_loss;
  double mean_final_test_nll = 0.0;
};

inline Dataset load_training_dataset(const ExperimentConfig& cfg, const std::string& path) {
  if (!fs::exists(path)) throw IoError("dataset '" + path + "' does not exist (run generate first)");
  Dataset ds = load_dataset(path);
  if (ds.width != cfg.dataset.resolution || ds.height != cfg.dataset.resolution) {
    throw ConfigError("dataset frames are " + std::to_string(ds.width) + "x" +
                      std::to_string(ds.height) + " but the config expects " +
                      std::to_string(cfg.dataset.resolution));
  }
  if (ds.frame_count(Split::train) == 0 || ds.frame_count(Split::test) == 0) {
    throw ConfigError("dataset needs both train and test frames");
  }
  return ds;
}

/// Trains every configured seed at one q; epoch, seed and summary records go
/// to `report`, weights to `dir`.
inline QRun train_q(const ExperimentConfig& cfg, const Dataset& ds, double q, const fs::path& dir,
                    ReportWriter& report) {
  (void)QParam(q);
  const FrameSet train = frames_of(ds, Split::train);
  const FrameSet test = frames_of(ds, Split::test);
  const Architecture arch = cfg.network_architecture();
  const bool baseline = q == 1.0;
  const std::size_t epochs = cfg.training.epochs;

  QRun run;
  run.q = q;
  run.mean_test_nll.assign(epochs, 0.0);
  run.mean_train_loss.assign(epochs, 0.0);
  for (std::uint64_t seed : cfg.training.seeds) {
    SeedRun sr;
    sr.seed = seed;
    TrainConfig tc{q, cfg.training.learning_rate, cfg.training.batch_size, seed};
    BcTrainer<float> trainer(PolicyNetwork<float>::initialized(arch, seed), tc);
    for (std::size_t e = 0; e < epochs; ++e) {
      EpochStats st;
      double test_nll = 0.0;
      try {
        st = trainer.train_epoch(train);
        test_nll = evaluate_nll(trainer.network(), test);
      } catch (const NumericalError& err) {
        report.write({{"type", "error"}, {"kind", error_kind(err)}, {"message", err.what()},
                      {"q", q}, {"seed", seed}, {"epoch", e + 1}});
        throw;
      }
      sr.train_loss.push_back(st.train_loss);
      sr.test_nll.push_back(test_nll);
      report.write({{"type", "epoch"},
                    {"q", q},
                    {"seed", seed},
                    {"epoch", st.epoch},
                    {"baseline", baseline},
                    {"train_loss", st.train_loss},
                    {"test_nll", test_nll},
                    {"mean_weight", st.mean_weight},
                    {"max_weight", st.max_weight},
                    {"weight_histogram", st.weight_histogram}});
    }
    sr.weights = q_label(q) + "_seed" + std::to_string(seed) + ".tbcw";
    const std::string wpath = (dir / sr.weights).string();
    save_weights(trainer.network(), wpath);
    sr.weights_hash = file_hash(wpath);
    report.write({{"type", "seed"},
                  {"q", q},
                  {"seed", seed},
                  {"baseline", baseline},
                  {"final_test_nll", sr.test_nll.back()},
                  {"weights", sr.weights},
                  {"weights_hash", sr.weights_hash}});
    run.seeds.push_back(std::move(sr));
  }
  const double n = static_cast<double>(run.seeds.size());
  for (const SeedRun& sr : run.seeds) {
    for (std::size_t e = 0; e < epochs; ++e) {
      run.mean_test_nll[e] += sr.test_nll[e] / n;
      run.mean_train_loss[e] += sr.train_loss[e] / n;
    }
  }
  run.mean_final_test_nll = run.mean_test_nll.back();
  std::vector<std::uint64_t> seeds = cfg.training.seeds;
  report.write({{"type", "summary"},
                {"q", q},
                {"baseline", baseline},
                {"seeds", seeds},
                {"mean_final_test_nll", run.mean_final_test_nll},
                {"mean_test_nll_curve", run.mean_test_nll},
                {"mean_train_loss_curve", run.mean_train_loss}});
  return run;
}

inline json cmd_train(const ExperimentConfig& cfg, const std::string& dataset_path) {
  cfg.validate();
  const Dataset ds = load_training_dataset(cfg, dataset_path);
  const fs::path dir = make_dir(fs::path(cfg.out) / "train");
  ReportWriter report((dir / "report.jsonl").string());
  report.write({{"type", "config"}, {"config", config_to_json(cfg)}, {"dataset_hash", file_hash(dataset_path)}});
  const QRun run = train_q(cfg, ds, cfg.training.q, dir, report);
  json out = {{"type", "train"},
              {"q", run.q},
              {"baseline", run.q == 1.0},
              {"mean_final_test_nll", run.mean_final_test_nll},
              {"report", report.path()}};
  for (const SeedRun& s : run.seeds) out["weights"].push_back((dir / s.weights).string());
  return out;
}

inline json cmd_sweep(const ExperimentConfig& cfg, const std::string& dataset_path) {
  cfg.validate();
  const Dataset ds = load_training_dataset(cfg, dataset_path);
  const fs::path dir = make_dir(fs::path(cfg.out) / "sweep");
  ReportWriter report((dir / "report.jsonl").string());
  report.write({{"type", "config"}, {"config", config_to_json(cfg)}, {"dataset_hash", file_hash(dataset_path)}});
  json table = json::array();
  double best_q = cfg.q_list.front();
  double best = std::numeric_limits<double>::infinity();
  for (double q : cfg.q_list) {
    const QRun run = train_q(cfg, ds, q, make_dir(dir / q_label(q)), report);
    table.push_back({{"q", q}, {"mean_test_nll", run.mean_final_test_nll}});
    if (run.mean_final_test_nll < best) {
      best = run.mean_final_test_nll;
      best_q = q;
    }
  }
  json out = {{"type", "sweep"}, {"table", table}, {"best_q", best_q}, {"best_mean_test_nll", best}};
  report.write(out);
  out["report"] = report.path();
  return out;
}

// ---------------------------------------------------------------- rollout

/// Rollout i of `count` from jittered starts; per-rollout records plus a summary.
inline json cmd_rollout(const ExperimentConfig& cfg, const std::string& weights_path) {
  cfg.validate();
  auto net = std::make_shared<const PolicyNetwork<float>>(
      load_weights<float>(weights_path, cfg.network_architecture()));
  const sim::Course course = sim::default_course();
  const sim::RolloutConfig rc = cfg.rollout_config();
  const fs::path dir = make_dir(fs::path(cfg.out) / "rollout");
  ReportWriter report((dir / "metrics.jsonl").string());

  double overshoot_sum = 0.0, rough_sum = 0.0;
  std::size_t completed = 0, before_line = 0, never_stopped = 0, crashed = 0;
  for (std::size_t i = 0; i < cfg.rollout.count; ++i) {
    const sim::RolloutStart start = sim::rollout_start(course, i, cfg.rollout.seed);
    const sim::RolloutResult r =
        sim::rollout(sim::network_policy(net), course, start.state, start.direction, rc);
    const sim::RolloutMetrics& m = r.metrics;
    const bool stopped = std::isfinite(m.stop_overshoot);
    overshoot_sum += m.stop_overshoot;
    rough_sum += m.steering_roughness;
    completed += m.completed;
    before_line += stopped && m.stop_overshoot <= 0.0;
    never_stopped += !stopped;
    crashed += m.crashed;
    report.write({{"type", "rollout"},
                  {"index", i},
                  {"direction", to_string(start.direction)},
                  {"stopped", stopped},
                  {"stop_overshoot", finite_or_null(m.stop_overshoot)},
                  {"steering_roughness", m.steering_roughness},
                  {"completed", m.completed},
                  {"crashed", m.crashed},
                  {"steps", m.steps}});
    if (cfg.rollout.dump_frames) {
      char name[32];
      std::snprintf(name, sizeof name, "rollout_%03zu", i);
      const fs::path fdir = make_dir(dir / "frames" / name);
      for (std::size_t t = 0; t < r.frames.size(); ++t) {
        std::snprintf(name, sizeof name, "frame_%04zu.ppm", t);
        write_pnm(pixmap_from_planar(r.frames[t].values().data(), rc.resolution, rc.resolution),
                  (fdir / name).string());
      }
    }
  }
  const double n = static_cast<double>(cfg.rollout.count);
  json summary = {{"type", "rollout_summary"},
                  {"count", cfg.rollout.count},
                  {"weights_hash", file_hash(weights_path)},
                  {"mean_stop_overshoot", finite_or_null(overshoot_sum / n)},
                  {"mean_steering_roughness", rough_sum / n},
                  {"completed_fraction", static_cast<double>(completed) / n},
                  {"stopped_before_line_fraction", static_cast<double>(before_line) / n},
                  {"never_stopped", never_stopped},
                  {"crashed", crashed}};
  report.write(summary);
  return summary;
}

// ---------------------------------------------------------------- visualize

struct VbpVariant {
  const char* name;
  bool normalize;
  bool include_fcn;
};

inline constexpr VbpVariant kVbpVariants[4] = {
    {"original", false, false}, {"normalized", true, false}, {"fcn", false, true}, {"both", true, true}};

inline json cmd_visualize(const ExperimentConfig& cfg, const std::string& weights_path,
                          const std::string& dataset_path) {
  cfg.validate();
  const PolicyNetwork<float> net = load_weights<float>(weights_path, cfg.network_architecture());
  const Dataset ds = load_training_dataset(cfg, dataset_path);
  const FrameSet test = frames_of(ds, Split::test);
  const fs::path dir = make_dir(fs::path(cfg.out) / "visualize");
  ReportWriter report((dir / "maps.jsonl").string());

  std::vector<VbpVariant> variants;
  if (cfg.visualize.all) {
    variants.assign(std::begin(kVbpVariants), std::end(kVbpVariants));
  } else {
    for (const VbpVariant& v : kVbpVariants) {
      if (v.normalize == cfg.vbp.normalize_features && v.include_fcn == cfg.vbp.include_fcn) {
        variants.push_back(v);
      }
    }
  }
  json files = json::array();
  for (std::size_t frame : cfg.visualize.frames) {
    if (frame >= test.size()) {
      throw ConfigError("visualize: frame " + std::to_string(frame) + " out of range (test split has " +
                        std::to_string(test.size()) + " frames)");
    }
    const std::size_t idx[1] = {frame};
    const Tensor<float> batch = test.batch_images(idx);
    const ForwardResult<float> fwd = net.forward(batch, true);
    const Tensor<float> image({test.channels, test.height, test.width},
                              std::vector<float>(batch.values().begin(), batch.values().end()));
    for (const VbpVariant& v : variants) {
      VbpConfig vc = cfg.vbp;
      vc.normalize_features = v.normalize;
      vc.include_fcn = v.include_fcn;
      const AttentionMap map = vbp_modified(*fwd.cache, net, vc);
      char stem[64];
      std::snprintf(stem, sizeof stem, "test_frame_%04zu_%s", frame, v.name);
      const fs::path gray = dir / (std::string(stem) + ".pgm");
      const fs::path over = dir / (std::string(stem) + "_overlay.ppm");
      export_map(map, gray.string());
      export_map(map, over.string(), image);
      const json rec = {{"type", "map"},
                        {"frame", frame},
                        {"variant", v.name},
                        {"normalize", v.normalize},
                        {"include_fcn", v.include_fcn},
                        {"height", map.dim(0)},
                        {"width", map.dim(1)},
                        {"map", gray.filename().string()},
                        {"overlay", over.filename().string()},
                        {"hash", file_hash(gray.string())}};
      report.write(rec);
      files.push_back(rec);
    }
  }
  return {{"type", "visualize"}, {"maps", files}};
}

}  // namespace tsbc::harness
