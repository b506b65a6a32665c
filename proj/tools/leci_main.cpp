// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.
//
// leci {gen|train|eval|explain|oracle|sweep}: thin front end over the C API.
// Exit status is the leci_status of the failing call (0 on success).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "leci/leci.h"

namespace {

struct Failure {
  leci_status status;
};

void check(leci_status s) {
  if (s != LECI_OK) {
    std::cerr << "leci: " << leci_last_error() << "\n";
    throw Failure{s};
  }
}

struct CString {
  char* p = nullptr;
  ~CString() { leci_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

using ConfigPtr = std::unique_ptr<leci_config, decltype(&leci_config_free)>;

struct CommonOpts {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::string data;
};

void add_config_opts(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config,-c", o.config, "key = value run config")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", o.sets, "override a config key (key=value), repeatable");
}

// File values first, then --set overrides, then the dedicated flags.
ConfigPtr build_config(const CommonOpts& o,
                       const std::vector<std::pair<std::string, std::string>>& flags) {
  leci_config* raw = nullptr;
  check(o.config.empty() ? leci_config_new(&raw) : leci_config_load(o.config.c_str(), &raw));
  ConfigPtr cfg(raw, leci_config_free);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "leci: --set expects key=value, got '" << kv << "'\n";
      throw Failure{LECI_ERR_CONFIG};
    }
    check(leci_config_set(cfg.get(), CLI::detail::trim_copy(kv.substr(0, eq)).c_str(),
                          CLI::detail::trim_copy(kv.substr(eq + 1)).c_str()));
  }
  for (const auto& [k, v] : flags) check(leci_config_set(cfg.get(), k.c_str(), v.c_str()));
  return cfg;
}

// Flag value, else the config key, else an error naming both.
std::string resolve_dir(const std::string& flag_value, const leci_config* cfg,
                        const char* key, const char* flag) {
  if (!flag_value.empty()) return flag_value;
  CString v;
  check(leci_config_get(cfg, key, &v.p));
  if (v.str().empty()) {
    std::cerr << "leci: " << flag << " not given and config key '" << key << "' is unset\n";
    throw Failure{LECI_ERR_CONFIG};
  }
  return v.str();
}

void print_line(const char* line, void*) {
  std::fputs(line, stderr);
  std::fputc('\n', stderr);
}

void write_out(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  f << text;
  if (!f) {
    std::cerr << "leci: cannot write " << p << "\n";
    throw Failure{LECI_ERR_CONFIG};
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Invariant subgraph learning on synthetic motif graphs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(leci_version()));

  // gen
  CommonOpts gen_o;
  auto* gen = app.add_subcommand("gen", "generate a dataset");
  add_config_opts(gen, gen_o);
  gen->add_option("--out,-o", gen_o.out, "output directory");

  // train
  CommonOpts train_o;
  std::string method;
  std::optional<std::size_t> seeds, epochs;
  std::optional<std::uint64_t> seed;
  bool train_probes = false;
  auto* train = app.add_subcommand("train", "train one or more seeds");
  add_config_opts(train, train_o);
  train->add_option("--data,-d", train_o.data, "dataset directory");
  train->add_option("--out,-o", train_o.out, "output directory");
  train->add_option("--method", method, "leci or erm")->check(CLI::IsMember({"leci", "erm"}));
  train->add_option("--seeds", seeds, "number of seeds")->check(CLI::PositiveNumber);
  train->add_option("--seed", seed, "first training seed");
  train->add_option("--epochs", epochs, "training epochs");
  train->add_flag("--probes", train_probes, "run independence probes in reports");

  // eval
  std::string eval_model, eval_data, eval_out;
  bool eval_probes = false;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--model,-m", eval_model, "checkpoint")->required();
  eval->add_option("--data,-d", eval_data, "dataset directory")->required();
  eval->add_option("--out,-o", eval_out, "also write report.json here");
  eval->add_flag("--probes", eval_probes, "run independence probes");

  // explain
  std::string ex_model, ex_data, ex_out, ex_split = "ood_test";
  std::vector<std::size_t> ex_ids;
  std::optional<double> ex_threshold;
  std::optional<std::size_t> ex_top_k;
  auto* explain = app.add_subcommand("explain", "write DOT explanations");
  explain->add_option("--model,-m", ex_model, "checkpoint")->required();
  explain->add_option("--data,-d", ex_data, "dataset directory")->required();
  explain->add_option("--out,-o", ex_out, "output directory")->required();
  explain->add_option("--split", ex_split, "split to explain")
      ->check(CLI::IsMember({"train", "id_val", "ood_val", "ood_test"}));
  explain->add_option("--ids", ex_ids, "graph indices within the split")
      ->required()
      ->delimiter(',');
  auto* thr = explain->add_option("--threshold", ex_threshold, "select edges with p > t");
  auto* topk = explain->add_option("--top-k", ex_top_k, "select the k most probable edges");
  thr->excludes(topk);

  // oracle
  std::string oracle_out;
  auto* oracle = app.add_subcommand("oracle", "exhaustive independence check");
  oracle->add_option("--out,-o", oracle_out, "also write oracle.json here");

  // sweep
  CommonOpts sweep_o;
  unsigned jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "grid over sweep.<key> lists");
  add_config_opts(sweep, sweep_o);
  sweep->add_option("--data,-d", sweep_o.data, "dataset directory");
  sweep->add_option("--out,-o", sweep_o.out, "output directory");
  sweep->add_option("--jobs,-j", jobs, "concurrent runs")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : LECI_ERR_ARGUMENT;
  }

  try {
    if (*gen) {
      auto cfg = build_config(gen_o, {});
      const auto out = resolve_dir(gen_o.out, cfg.get(), "out_dir", "--out");
      check(leci_run_gen(cfg.get(), out.c_str()));
      std::cout << out << "\n";
    } else if (*train) {
      std::vector<std::pair<std::string, std::string>> flags;
      if (!method.empty()) flags.emplace_back("method", method);
      if (seeds) flags.emplace_back("seeds", std::to_string(*seeds));
      if (seed) flags.emplace_back("seed", std::to_string(*seed));
      if (epochs) flags.emplace_back("epochs", std::to_string(*epochs));
      if (train_probes) flags.emplace_back("run_probes", "true");
      auto cfg = build_config(train_o, flags);
      const auto data = resolve_dir(train_o.data, cfg.get(), "data_dir", "--data");
      const auto out = resolve_dir(train_o.out, cfg.get(), "out_dir", "--out");
      CString report;
      check(leci_run_train(cfg.get(), data.c_str(), out.c_str(), print_line, nullptr,
                           &report.p));
      std::cout << report.str() << "\n";
    } else if (*eval) {
      CString report;
      check(leci_run_eval(eval_model.c_str(), eval_data.c_str(), eval_probes, &report.p));
      if (!eval_out.empty()) write_out(std::filesystem::path(eval_out) / "report.json",
                                       report.str() + "\n");
      std::cout << report.str() << "\n";
    } else if (*explain) {
      if (!ex_threshold && !ex_top_k) {
        std::cerr << "leci: explain needs one of --threshold or --top-k\n";
        return LECI_ERR_ARGUMENT;
      }
      CString report;
      check(leci_run_explain(ex_model.c_str(), ex_data.c_str(), ex_split.c_str(),
                             ex_ids.data(), ex_ids.size(), ex_threshold.has_value(),
                             ex_threshold.value_or(0.0), ex_top_k.has_value(),
                             ex_top_k.value_or(0), ex_out.c_str(), &report.p));
      std::cout << report.str() << "\n";
    } else if (*oracle) {
      CString report;
      const leci_status s = leci_run_oracle(&report.p);
      if (!oracle_out.empty())
        write_out(std::filesystem::path(oracle_out) / "oracle.json", report.str() + "\n");
      std::cout << report.str() << "\n";
      check(s);
    } else if (*sweep) {
      auto cfg = build_config(sweep_o, {});
      const auto data = resolve_dir(sweep_o.data, cfg.get(), "data_dir", "--data");
      const auto out = resolve_dir(sweep_o.out, cfg.get(), "out_dir", "--out");
      CString ranking;
      check(leci_run_sweep(cfg.get(), data.c_str(), out.c_str(), jobs, print_line, nullptr,
                           &ranking.p));
      std::cout << ranking.str() << "\n";
    }
  } catch (const Failure& f) {
    return f.status;
  }
  return 0;
}
