// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "tsbc/harness/config.hpp"
#include "tsbc/harness/report.hpp"

namespace tsbc::harness {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliResult {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = std::string(TSBC_CLI_PATH) + " " + args + " 2>" + err.string();
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.err = slurp(err);
  return r;
}

json tiny_config(const fs::path& out) {
  return {{"dataset", {{"n_trajectories", 6}, {"n_noisy", 1}, {"n_test", 2}}},
          {"training", {{"epochs", 2}, {"seeds", {1}}, {"learning_rate", 1e-3}, {"batch_size", 64}}},
          {"sweep", {{"q_list", {1.0, 0.8}}}},
          {"rollout", {{"count", 2}}},
          {"out", out.string()}};
}

// ---------------------------------------------------------------- config

TEST(Config, DefaultsMatchTheDocumentedValues) {
  const ExperimentConfig c;
  EXPECT_EQ(c.training.q, 0.8);
  EXPECT_EQ(c.training.epochs, 100u);
  EXPECT_EQ(c.training.learning_rate, 1e-3);
  EXPECT_EQ(c.training.batch_size, 64u);
  EXPECT_EQ(c.architecture, "desk");
  EXPECT_EQ(c.dataset.n_trajectories, 30u);
  EXPECT_EQ(c.dataset.n_noisy, 2u);
  EXPECT_EQ(c.rollout.count, 20u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, PaperScaleSwitchesDatasetArchitectureAndOptimizer) {
  ExperimentConfig c;
  c.dataset.seed = 42;
  apply_paper_scale(c);
  EXPECT_EQ(c.dataset.n_trajectories, 90u);
  EXPECT_EQ(c.dataset.n_noisy, 2u);
  EXPECT_EQ(c.dataset.resolution, 96u);
  EXPECT_EQ(c.dataset.fps, 50.0);
  EXPECT_EQ(c.dataset.seed, 42u);
  EXPECT_EQ(c.architecture, "paper");
  EXPECT_EQ(c.training.learning_rate, 1e-5);
  EXPECT_EQ(c.training.batch_size, 512u);
  const auto plan = sim::plan_trajectories(c.dataset);
  std::size_t noisy = 0, test = 0;
  for (const auto& p : plan) {
    noisy += p.tag != Provenance::clean;
    test += p.split == Split::test;
  }
  EXPECT_EQ(plan.size(), 90u);
  EXPECT_EQ(noisy, 2u);
  EXPECT_EQ(test, 8u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c = config_from_json(tiny_config("/tmp/x"));
  c.q_list = {1.0, 0.5};
  c.vbp.include_fcn = true;
  const ExperimentConfig d = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(d), config_to_json(c));
  EXPECT_EQ(d.dataset.n_trajectories, 6u);
  EXPECT_EQ(d.training.seeds, (std::vector<std::uint64_t>{1}));
  EXPECT_TRUE(d.vbp.include_fcn);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(config_from_json({{"bogus", 1}}), ConfigError);
  EXPECT_THROW(config_from_json({{"training", {{"qq", 0.5}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"training", {{"q", "high"}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"dataset", {{"noise_modes", {"clean"}}}}}), ConfigError);
  ExperimentConfig c = config_from_json({{"training", {{"q", 1.5}}}});
  EXPECT_THROW(c.validate(), ConfigError);
  c = config_from_json({{"architecture", "paper"}});
  EXPECT_THROW(c.validate(), ConfigError);  // 32 px dataset with the 96 px network
  c = config_from_json({{"architecture", "huge"}});
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Report, LabelsAndHashes) {
  EXPECT_EQ(q_label(0.8), "q0.80");
  EXPECT_EQ(q_label(1.0), "q1.00");
  const std::string s = "abc";
  EXPECT_EQ(hex64(fnv1a64(std::span<const char>(s.data(), s.size()))), "e71fa2190541574b");
  EXPECT_TRUE(finite_or_null(std::numeric_limits<double>::infinity()).is_null());
  EXPECT_EQ(finite_or_null(2.5), 2.5);
}

// ---------------------------------------------------------------- command line

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "tsbc_harness_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    write_config(root_ / "tiny.json", tiny_config(root_ / "run"));
    const CliResult r = run_cli(cfg_arg() + " generate", root_);
    ASSERT_EQ(r.status, 0) << r.err;
    const CliResult t = run_cli(cfg_arg() + " train", root_);
    ASSERT_EQ(t.status, 0) << t.err;
    train_summary_ = json::parse(t.out);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static void write_config(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }
  static std::string cfg_arg() { return "--config " + (root_ / "tiny.json").string(); }
  static fs::path run_dir() { return root_ / "run"; }
  static std::string weights() { return (run_dir() / "train" / "q0.80_seed1.tbcw").string(); }

  static fs::path root_;
  static json train_summary_;
};

fs::path Cli::root_;
json Cli::train_summary_;

TEST_F(Cli, GenerateWritesDatasetAndSummary) {
  EXPECT_TRUE(fs::exists(run_dir() / "dataset.tbcd"));
  const auto recs = read_report((run_dir() / "generate.jsonl").string());
  ASSERT_FALSE(recs.empty());
  EXPECT_EQ(recs.back()["type"], "generate");
  EXPECT_EQ(recs.back()["trajectories"], 6);
  EXPECT_EQ(recs.back()["noisy"], 1);
  EXPECT_EQ(recs.back()["test_trajectories"], 2);
}

TEST_F(Cli, GenerateIsDeterministic) {
  const fs::path other = root_ / "gen2";
  const CliResult r = run_cli(cfg_arg() + " --out " + other.string() + " generate", root_);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(file_hash((other / "dataset.tbcd").string()), file_hash((run_dir() / "dataset.tbcd").string()));
  const CliResult s = run_cli(cfg_arg() + " --out " + other.string() + " generate --dataset-seed 9", root_);
  ASSERT_EQ(s.status, 0) << s.err;
  EXPECT_NE(json::parse(s.out)["hash"], json::parse(r.out)["hash"]);
}

TEST_F(Cli, TrainReportIsWellFormed) {
  EXPECT_EQ(train_summary_["type"], "train");
  EXPECT_EQ(train_summary_["q"], 0.8);
  EXPECT_EQ(train_summary_["baseline"], false);
  const auto recs = read_report((run_dir() / "train" / "report.jsonl").string());
  ASSERT_GE(recs.size(), 5u);
  EXPECT_EQ(recs.front()["type"], "config");
  std::size_t epochs = 0;
  for (const auto& r : recs) {
    if (r["type"] != "epoch") continue;
    ++epochs;
    EXPECT_TRUE(r["test_nll"].is_number());
    EXPECT_TRUE(r["train_loss"].is_number());
    std::size_t total = 0;
    for (const auto& b : r["weight_histogram"]) total += b.get<std::size_t>();
    EXPECT_GT(total, 0u);
  }
  EXPECT_EQ(epochs, 2u);
  EXPECT_EQ(recs.back()["type"], "summary");
  EXPECT_EQ(recs.back()["mean_test_nll_curve"].size(), 2u);
}

TEST_F(Cli, TrainIsDeterministicAndSeedSensitive) {
  const std::string first = file_hash(weights());
  const fs::path other = root_ / "train2";
  const std::string ds = " --dataset " + (run_dir() / "dataset.tbcd").string();
  ASSERT_EQ(run_cli(cfg_arg() + " --out " + other.string() + " train" + ds, root_).status, 0);
  EXPECT_EQ(file_hash((other / "train" / "q0.80_seed1.tbcw").string()), first);
  ASSERT_EQ(run_cli(cfg_arg() + " --out " + other.string() + " --seed 2 train" + ds, root_).status, 0);
  EXPECT_NE(file_hash((other / "train" / "q0.80_seed2.tbcw").string()), first);
}

TEST_F(Cli, QOneIsTaggedBaseline) {
  const fs::path other = root_ / "baseline";
  const std::string ds = " --dataset " + (run_dir() / "dataset.tbcd").string();
  const CliResult r =
      run_cli(cfg_arg() + " --out " + other.string() + " train --q 1 --epochs 1" + ds, root_);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["baseline"], true);
  EXPECT_TRUE(fs::exists(other / "train" / "q1.00_seed1.tbcw"));
}

TEST_F(Cli, SweepRanksEveryQ) {
  const fs::path other = root_ / "sweep";
  const std::string ds = " --dataset " + (run_dir() / "dataset.tbcd").string();
  const CliResult r = run_cli(cfg_arg() + " --out " + other.string() + " sweep --epochs 1" + ds, root_);
  ASSERT_EQ(r.status, 0) << r.err;
  const json s = json::parse(r.out);
  EXPECT_EQ(s["type"], "sweep");
  ASSERT_EQ(s["table"].size(), 2u);
  double best = 1e300;
  for (const auto& row : s["table"]) best = std::min(best, row["mean_test_nll"].get<double>());
  EXPECT_EQ(s["best_mean_test_nll"].get<double>(), best);
  EXPECT_TRUE(fs::exists(other / "sweep" / "q1.00" / "q1.00_seed1.tbcw"));
  EXPECT_TRUE(fs::exists(other / "sweep" / "q0.80" / "q0.80_seed1.tbcw"));
  const auto recs = read_report((other / "sweep" / "report.jsonl").string());
  EXPECT_EQ(recs.back()["type"], "sweep");
}

TEST_F(Cli, RolloutWritesMetricsAndFrames) {
  const fs::path other = root_ / "roll";
  const CliResult r =
      run_cli(cfg_arg() + " --out " + other.string() + " rollout --dump-frames --weights " + weights(), root_);
  ASSERT_EQ(r.status, 0) << r.err;
  const json s = json::parse(r.out);
  EXPECT_EQ(s["type"], "rollout_summary");
  EXPECT_EQ(s["count"], 2);
  const auto recs = read_report((other / "rollout" / "metrics.jsonl").string());
  ASSERT_EQ(recs.size(), 3u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(recs[i]["type"], "rollout");
    EXPECT_EQ(recs[i]["stopped"].get<bool>(), !recs[i]["stop_overshoot"].is_null());
    EXPECT_GE(recs[i]["steering_roughness"].get<double>(), 0.0);
  }
  EXPECT_TRUE(fs::exists(other / "rollout" / "frames" / "rollout_000" / "frame_0000.ppm"));
  const CliResult again =
      run_cli(cfg_arg() + " --out " + other.string() + " rollout --weights " + weights(), root_);
  EXPECT_EQ(json::parse(again.out), s);
}

TEST_F(Cli, VisualizeEmitsFourDistinctVariants) {
  const fs::path other = root_ / "vis";
  const std::string ds = " --dataset " + (run_dir() / "dataset.tbcd").string();
  const CliResult r = run_cli(cfg_arg() + " --out " + other.string() + " visualize --all --frames 0,3 --weights " +
                                  weights() + ds,
                              root_);
  ASSERT_EQ(r.status, 0) << r.err;
  const json s = json::parse(r.out);
  ASSERT_EQ(s["maps"].size(), 8u);
  std::set<std::string> hashes;
  for (const auto& m : s["maps"]) {
    EXPECT_TRUE(fs::exists(other / "visualize" / m["map"].get<std::string>()));
    EXPECT_TRUE(fs::exists(other / "visualize" / m["overlay"].get<std::string>()));
    hashes.insert(m["hash"].get<std::string>());
  }
  EXPECT_EQ(hashes.size(), 8u);

  // Without --all only the flag-selected variant is written, and the
  // default selection is byte-identical to the original map above.
  const fs::path single = root_ / "vis1";
  const CliResult o =
      run_cli(cfg_arg() + " --out " + single.string() + " visualize --weights " + weights() + ds, root_);
  ASSERT_EQ(o.status, 0) << o.err;
  const json so = json::parse(o.out);
  ASSERT_EQ(so["maps"].size(), 1u);
  EXPECT_EQ(so["maps"][0]["variant"], "original");
  EXPECT_EQ(slurp(single / "visualize" / "test_frame_0000_original.pgm"),
            slurp(other / "visualize" / "test_frame_0000_original.pgm"));
  const CliResult b = run_cli(cfg_arg() + " --out " + single.string() +
                                  " visualize --normalize --include-fcn --weights " + weights() + ds,
                              root_);
  ASSERT_EQ(b.status, 0) << b.err;
  EXPECT_EQ(json::parse(b.out)["maps"][0]["variant"], "both");
}

json error_of(const CliResult& r) {
  EXPECT_EQ(r.status, 2);
  EXPECT_TRUE(r.out.empty()) << r.out;
  json e;
  try {
    e = json::parse(r.err);
  } catch (const json::parse_error&) {
    ADD_FAILURE() << "stderr is not JSON: " << r.err;
    return e;
  }
  EXPECT_EQ(e["type"], "error");
  EXPECT_TRUE(e["message"].is_string());
  return e;
}

TEST_F(Cli, FailuresAreStructured) {
  EXPECT_EQ(error_of(run_cli("", root_))["kind"], "usage_error");
  EXPECT_EQ(error_of(run_cli(cfg_arg() + " rollout", root_))["kind"], "usage_error");
  EXPECT_EQ(error_of(run_cli(cfg_arg() + " train --q 1.5", root_))["kind"], "config_error");
  EXPECT_EQ(error_of(run_cli(cfg_arg() + " train --dataset /nonexistent.tbcd", root_))["kind"], "io_error");
  write_config(root_ / "bad.json", {{"bogus", 1}});
  EXPECT_EQ(error_of(run_cli("--config " + (root_ / "bad.json").string() + " generate", root_))["kind"],
            "config_error");
  std::ofstream(root_ / "broken.tbcd") << "TBCDxx";
  EXPECT_EQ(
      error_of(run_cli(cfg_arg() + " train --dataset " + (root_ / "broken.tbcd").string(), root_))["kind"],
      "format_error");
  EXPECT_EQ(error_of(run_cli(cfg_arg() + " visualize --frames 100000 --weights " + weights(), root_))["kind"],
            "config_error");
}

}  // namespace
}  // namespace tsbc::harness
