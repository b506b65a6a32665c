// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.

#include "leci/leci.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>

#include "json.hpp"

#include "leci/error.hpp"
#include "leci/run.hpp"

struct leci_config {
  leci::RunConfig cfg;
};
struct leci_dataset {
  leci::DatasetSplit split;
};
struct leci_model {
  std::unique_ptr<leci::GraphModel> model;
};

namespace {

thread_local std::string g_last_error;

leci_status fail(leci_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Runs f, translating exceptions into status codes.
template <class F>
leci_status guarded(F&& f) {
  g_last_error.clear();
  try {
    return f();
  } catch (const leci::ConfigError& e) {
    return fail(LECI_ERR_CONFIG, e.what());
  } catch (const leci::ValidationError& e) {
    return fail(LECI_ERR_CONFIG, e.what());
  } catch (const leci::ParseError& e) {
    return fail(LECI_ERR_CONFIG, e.line() > 0 ? "line " + std::to_string(e.line()) +
                                                    ": " + e.what()
                                              : std::string(e.what()));
  } catch (const leci::NumericError& e) {
    return fail(LECI_ERR_NUMERIC, e.what());
  } catch (const leci::ContractError& e) {
    return fail(LECI_ERR_ARGUMENT, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(LECI_ERR_CONFIG, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(LECI_ERR_CONFIG, e.what());
  } catch (const std::exception& e) {
    return fail(LECI_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(LECI_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

#define LECI_REQUIRE_ARG(cond) \
  if (!(cond)) return fail(LECI_ERR_ARGUMENT, "null argument: " #cond)

const std::vector<leci::Graph>& part(const leci_dataset* d, const char* split) {
  for (const char* n : leci::kSplitNames)
    if (std::strcmp(split, n) == 0) return leci::split_part(d->split, n);
  throw leci::ConfigError(std::string("unknown split '") + split + "'");
}

leci::Logger make_logger(leci_log_fn log, void* user) {
  if (!log) return {};
  return [log, user](const std::string& line) { log(line.c_str(), user); };
}

}  // namespace

extern "C" {

const char* leci_version(void) { return "1.0.0"; }
const char* leci_last_error(void) { return g_last_error.c_str(); }
void leci_string_free(char* s) { std::free(s); }

leci_status leci_config_new(leci_config** out) {
  LECI_REQUIRE_ARG(out);
  return guarded([&] {
    *out = new leci_config{};
    return LECI_OK;
  });
}

leci_status leci_config_load(const char* path, leci_config** out) {
  LECI_REQUIRE_ARG(path && out);
  return guarded([&] {
    *out = new leci_config{leci::load_run_config(path)};
    return LECI_OK;
  });
}

leci_status leci_config_parse(const char* text, leci_config** out) {
  LECI_REQUIRE_ARG(text && out);
  return guarded([&] {
    *out = new leci_config{leci::parse_run_config(text)};
    return LECI_OK;
  });
}

leci_status leci_config_set(leci_config* cfg, const char* key, const char* value) {
  LECI_REQUIRE_ARG(cfg && key && value);
  return guarded([&] {
    leci::set_key(cfg->cfg, key, value);
    return LECI_OK;
  });
}

leci_status leci_config_get(const leci_config* cfg, const char* key, char** out) {
  LECI_REQUIRE_ARG(cfg && key && out);
  return guarded([&] {
    put(out, leci::get_key(cfg->cfg, key));
    return LECI_OK;
  });
}

leci_status leci_config_echo(const leci_config* cfg, char** out) {
  LECI_REQUIRE_ARG(cfg && out);
  return guarded([&] {
    put(out, leci::resolved_config_text(cfg->cfg));
    return LECI_OK;
  });
}

leci_status leci_config_validate(const leci_config* cfg) {
  LECI_REQUIRE_ARG(cfg);
  return guarded([&] {
    leci::validate(cfg->cfg);
    return LECI_OK;
  });
}

void leci_config_free(leci_config* cfg) { delete cfg; }

leci_status leci_dataset_generate(const leci_config* cfg, leci_dataset** out) {
  LECI_REQUIRE_ARG(cfg && out);
  return guarded([&] {
    leci::validate(cfg->cfg.gen);
    *out = new leci_dataset{leci::generate(cfg->cfg.gen, leci::worker_cap())};
    return LECI_OK;
  });
}

leci_status leci_dataset_load(const char* dir, leci_dataset** out) {
  LECI_REQUIRE_ARG(dir && out);
  return guarded([&] {
    if (!std::filesystem::is_directory(dir))
      throw leci::ConfigError(std::string("data: directory not found: ") + dir);
    *out = new leci_dataset{leci::load_split_dir(dir)};
    return LECI_OK;
  });
}

leci_status leci_dataset_save(const leci_dataset* data, const char* dir) {
  LECI_REQUIRE_ARG(data && dir);
  return guarded([&] {
    std::filesystem::create_directories(dir);
    leci::save_split_dir(data->split, dir);
    return LECI_OK;
  });
}

leci_status leci_dataset_size(const leci_dataset* data, const char* split, size_t* out) {
  LECI_REQUIRE_ARG(data && split && out);
  return guarded([&] {
    *out = part(data, split).size();
    return LECI_OK;
  });
}

void leci_dataset_free(leci_dataset* data) { delete data; }

leci_status leci_model_train(const leci_config* cfg, const leci_dataset* data,
                             leci_model** out, char** logs_jsonl) {
  LECI_REQUIRE_ARG(cfg && data && out);
  return guarded([&] {
    leci::validate(cfg->cfg);
    std::string logs;
    auto cb = [&](const leci::EpochLog& l) { logs += leci::epoch_log_json(l) + "\n"; };
    leci::TrainResult res = cfg->cfg.method == "erm"
                                ? leci::train_erm(data->split, cfg->cfg.train, cb)
                                : leci::train(data->split, cfg->cfg.train, cb);
    put(logs_jsonl, logs);
    *out = new leci_model{std::move(res.model)};
    return LECI_OK;
  });
}

leci_status leci_model_load(const char* path, leci_model** out) {
  LECI_REQUIRE_ARG(path && out);
  return guarded([&] {
    if (!std::filesystem::exists(path))
      throw leci::ConfigError(std::string("model: file not found: ") + path);
    *out = new leci_model{leci::load_model(path)};
    return LECI_OK;
  });
}

leci_status leci_model_save(const leci_model* model, const char* path) {
  LECI_REQUIRE_ARG(model && path);
  return guarded([&] {
    model->model->save(path);
    return LECI_OK;
  });
}

leci_status leci_model_method(const leci_model* model, char** out) {
  LECI_REQUIRE_ARG(model && out);
  return guarded([&] {
    put(out, model->model->method());
    return LECI_OK;
  });
}

leci_status leci_model_accuracy(const leci_model* model, const leci_dataset* data,
                                const char* split, double* out) {
  LECI_REQUIRE_ARG(model && data && split && out);
  return guarded([&] {
    const auto& graphs = part(data, split);
    if (graphs.empty()) throw leci::ConfigError(std::string("split '") + split + "' is empty");
    *out = leci::accuracy(*model->model, graphs);
    return LECI_OK;
  });
}

leci_status leci_model_edge_probs(const leci_model* model, const leci_dataset* data,
                                  const char* split, size_t index, double* probs,
                                  size_t cap, size_t* count) {
  LECI_REQUIRE_ARG(model && data && split && count && (probs || cap == 0));
  return guarded([&] {
    const auto& graphs = part(data, split);
    if (index >= graphs.size())
      throw leci::ConfigError("graph index " + std::to_string(index) + " out of range");
    const leci::Batch b = leci::make_batch(std::vector<const leci::Graph*>{&graphs[index]});
    const auto p = model->model->edge_probabilities(b);
    if (p.size() != b.num_edges())
      throw leci::ConfigError("model '" + model->model->method() + "' has no edge selector");
    *count = p.size();
    for (size_t i = 0; i < p.size() && i < cap; ++i) probs[i] = p[i];
    return LECI_OK;
  });
}

leci_status leci_model_evaluate(const leci_model* model, const leci_dataset* data,
                                int run_probes, char** report_json) {
  LECI_REQUIRE_ARG(model && data && report_json);
  return guarded([&] {
    leci::EvalOptions opts;
    opts.run_probes = run_probes != 0;
    put(report_json, leci::evaluate(*model->model, data->split, opts).to_json());
    return LECI_OK;
  });
}

void leci_model_free(leci_model* model) { delete model; }

leci_status leci_run_gen(const leci_config* cfg, const char* out_dir) {
  LECI_REQUIRE_ARG(cfg && out_dir);
  return guarded([&] {
    leci::run_gen(cfg->cfg, out_dir);
    return LECI_OK;
  });
}

leci_status leci_run_train(const leci_config* cfg, const char* data_dir, const char* out_dir,
                           leci_log_fn log, void* user, char** report_json) {
  LECI_REQUIRE_ARG(cfg && data_dir && out_dir);
  return guarded([&] {
    leci::validate(cfg->cfg);
    if (!std::filesystem::is_directory(data_dir))
      throw leci::ConfigError(std::string("data: directory not found: ") + data_dir);
    const leci::DatasetSplit data = leci::load_split_dir(data_dir);
    const auto rep = leci::run_train(cfg->cfg, data, out_dir, make_logger(log, user));
    put(report_json, rep.to_json(cfg->cfg));
    return LECI_OK;
  });
}

leci_status leci_run_eval(const char* model_path, const char* data_dir, int run_probes,
                          char** report_json) {
  LECI_REQUIRE_ARG(model_path && data_dir && report_json);
  return guarded([&] {
    if (!std::filesystem::is_directory(data_dir))
      throw leci::ConfigError(std::string("data: directory not found: ") + data_dir);
    leci::EvalOptions opts;
    opts.run_probes = run_probes != 0;
    put(report_json,
        leci::run_eval(model_path, leci::load_split_dir(data_dir), opts).to_json());
    return LECI_OK;
  });
}

leci_status leci_run_explain(const char* model_path, const char* data_dir, const char* split,
                             const size_t* graph_ids, size_t num_ids, int has_threshold,
                             double threshold, int has_top_k, size_t top_k,
                             const char* out_dir, char** report_json) {
  LECI_REQUIRE_ARG(model_path && data_dir && split && out_dir && (graph_ids || num_ids == 0));
  LECI_REQUIRE_ARG(!has_threshold != !has_top_k);
  return guarded([&] {
    if (!std::filesystem::is_directory(data_dir))
      throw leci::ConfigError(std::string("data: directory not found: ") + data_dir);
    leci::ExplainRequest req;
    req.split = split;
    req.graph_ids.assign(graph_ids, graph_ids + num_ids);
    if (has_threshold) req.threshold = threshold;
    if (has_top_k) req.top_k = top_k;
    const auto ex =
        leci::run_explain(model_path, leci::load_split_dir(data_dir), req, out_dir);
    if (report_json) {
      nlohmann::ordered_json j = nlohmann::ordered_json::array();
      for (std::size_t i = 0; i < ex.size(); ++i)
        j.push_back({{"graph", req.graph_ids[i]},
                     {"selected", ex[i].selected},
                     {"warnings", ex[i].warnings}});
      put(report_json, j.dump(2));
    }
    return LECI_OK;
  });
}

leci_status leci_run_oracle(char** report_json) {
  return guarded([&] {
    const leci::OracleReport rep = leci::run_oracle();
    put(report_json, rep.to_json());
    if (!rep.pass())
      return fail(LECI_ERR_ORACLE, std::to_string(rep.counterexamples_total) +
                                       " oracle counterexample(s)");
    return LECI_OK;
  });
}

leci_status leci_run_sweep(const leci_config* cfg, const char* data_dir, const char* out_dir,
                           unsigned jobs, leci_log_fn log, void* user, char** ranking_json) {
  LECI_REQUIRE_ARG(cfg && data_dir && out_dir);
  return guarded([&] {
    if (!std::filesystem::is_directory(data_dir))
      throw leci::ConfigError(std::string("data: directory not found: ") + data_dir);
    leci::run_sweep(cfg->cfg, leci::load_split_dir(data_dir), out_dir, jobs,
                    make_logger(log, user));
    put(ranking_json, leci::read_file(std::filesystem::path(out_dir) / "ranking.json"));
    return LECI_OK;
  });
}

}  // extern "C"
