// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.
//
// Batch-run layer behind the CLI: flat `key = value` run configs and the
// gen / train / eval / explain / oracle / sweep commands with their fixed
// output layouts.

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "leci/metrics.hpp"
#include "leci/motif_gen.hpp"
#include "leci/train.hpp"

namespace leci {

inline constexpr int kReportSchemaVersion = 1;

struct RunConfig {
  GenConfig gen;
  TrainConfig train;
  std::string method = "leci";
  std::size_t seeds = 1;
  bool run_probes = false;
  // Defaults for --data / --out; empty when unset.
  std::string data_dir;
  std::string out_dir;
  // Grid axes from `sweep.<key> = a,b,...`, in file order.
  std::vector<std::pair<std::string, std::vector<std::string>>> sweep;
};

// Sets one key; throws ConfigError naming the key on unknown keys or bad
// values. `sweep.<key>` entries are validated against the known keys.
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_key(const RunConfig& cfg, const std::string& key);
std::vector<std::string> known_keys();

// `key = value` lines, `#` starts a comment, blank lines ignored. Later
// assignments win.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

// Every key with its resolved value, one `key = value` per line, in the
// order of known_keys(); re-parsing the echo reproduces the config.
std::string resolved_config_text(const RunConfig& cfg);

// Validates both halves; throws ConfigError.
void validate(const RunConfig& cfg);

// Formats mean and std of fractions as percentages, "xx.xx(x.xx)".
std::string format_mean_std(const std::vector<double>& values);

using Logger = std::function<void(const std::string&)>;

// gen: train/id_val/ood_val/ood_test .jsonl, manifest.json, config.txt.
void run_gen(const RunConfig& cfg, const std::filesystem::path& out_dir);
std::string manifest_json(const RunConfig& cfg, const DatasetSplit& split);

struct SeedReport {
  std::uint64_t seed = 0;
  std::size_t best_ood_val_epoch = 0;
  std::size_t best_id_val_epoch = 0;
  MetricsReport at_ood_val;  // model selected by ood_val accuracy
  MetricsReport at_id_val;   // model selected by id_val accuracy
  MetricsReport final_epoch;
};

struct TrainRunReport {
  std::string method;
  std::vector<SeedReport> seeds;
  std::string to_json(const RunConfig& cfg) const;
};

// train: per seed a directory seed_<k>/ with model_final.ckpt,
// model_ood_val.ckpt, model_id_val.ckpt, epochlogs.jsonl and report.json;
// plus a top-level report.json and config.txt. Seeds are train.seed + k.
TrainRunReport run_train(const RunConfig& cfg, const DatasetSplit& data,
                         const std::filesystem::path& out_dir,
                         const Logger& log = {});

MetricsReport run_eval(const std::filesystem::path& model_path,
                       const DatasetSplit& data, const EvalOptions& opts);

struct ExplainRequest {
  std::string split = "ood_test";
  std::vector<std::size_t> graph_ids;
  std::optional<double> threshold;
  std::optional<std::size_t> top_k;
};

// Writes graph_<id>.dot per requested graph and explain.json; returns the
// explanations in request order.
std::vector<Explanation> run_explain(const std::filesystem::path& model_path,
                                     const DatasetSplit& data,
                                     const ExplainRequest& req,
                                     const std::filesystem::path& out_dir);

OracleReport run_oracle();

struct SweepPoint {
  std::size_t index = 0;
  std::vector<std::pair<std::string, std::string>> assignment;
  double mean_best_ood_val_acc = 0.0;
  double mean_ood_test_acc = 0.0;  // at the ood_val-selected epoch
};

// Cartesian product of the sweep axes; point i is written to run_<i>/ and
// ranking.json orders points by ood_val accuracy (ties by index). At most
// `jobs` points run concurrently, further capped by LECI_THREADS.
std::vector<SweepPoint> expand_sweep(const RunConfig& cfg);
std::vector<SweepPoint> run_sweep(const RunConfig& cfg, const DatasetSplit& data,
                                  const std::filesystem::path& out_dir,
                                  unsigned jobs, const Logger& log = {});

// LECI_THREADS when set and positive, otherwise hardware concurrency.
unsigned worker_cap();

}  // namespace leci
