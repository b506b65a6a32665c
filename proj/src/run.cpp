// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.

#include "leci/run.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "leci/error.hpp"

namespace leci {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != v.size())
    throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  return static_cast<std::size_t>(out);
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out))
    throw ConfigError(key + ": expected a real number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

// Re-raises parse failures of enum values as errors naming the key.
template <class F>
auto named(const std::string& key, F f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

struct KeySpec {
  const char* name;
  bool gen;  // part of dataset generation
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<KeySpec>& key_table() {
  using C = RunConfig;
  using S = const std::string&;
  static const std::vector<KeySpec> table = {
      {"data_seed", true, [](C& c, S v) { c.gen.seed = to_size("data_seed", v); },
       [](const C& c) { return std::to_string(c.gen.seed); }},
      {"split_mode", true,
       [](C& c, S v) { c.gen.split_mode = named("split_mode", [&] { return parse_split_mode(v); }); },
       [](const C& c) { return to_string(c.gen.split_mode); }},
      {"n_per_class_per_env", true,
       [](C& c, S v) { c.gen.n_per_class_per_env = to_size("n_per_class_per_env", v); },
       [](const C& c) { return std::to_string(c.gen.n_per_class_per_env); }},
      {"eval_per_class", true,
       [](C& c, S v) { c.gen.eval_per_class = to_size("eval_per_class", v); },
       [](const C& c) { return std::to_string(c.gen.eval_per_class); }},
      {"train_bases", true,
       [](C& c, S v) {
         c.gen.train_bases.clear();
         for (const auto& b : split_list(v))
           c.gen.train_bases.push_back(named("train_bases", [&] { return parse_base(b); }));
       },
       [](const C& c) {
         std::string out;
         for (auto b : c.gen.train_bases) out += (out.empty() ? "" : ",") + to_string(b);
         return out;
       }},
      {"oodval_base", true,
       [](C& c, S v) { c.gen.oodval_base = named("oodval_base", [&] { return parse_base(v); }); },
       [](const C& c) { return to_string(c.gen.oodval_base); }},
      {"oodtest_base", true,
       [](C& c, S v) { c.gen.oodtest_base = named("oodtest_base", [&] { return parse_base(v); }); },
       [](const C& c) { return to_string(c.gen.oodtest_base); }},
      {"base_size_min", true, [](C& c, S v) { c.gen.base_size_min = to_size("base_size_min", v); },
       [](const C& c) { return std::to_string(c.gen.base_size_min); }},
      {"base_size_max", true, [](C& c, S v) { c.gen.base_size_max = to_size("base_size_max", v); },
       [](const C& c) { return std::to_string(c.gen.base_size_max); }},
      {"size_bucket_edges", true,
       [](C& c, S v) {
         c.gen.size_bucket_edges.clear();
         for (const auto& x : split_list(v))
           c.gen.size_bucket_edges.push_back(to_size("size_bucket_edges", x));
       },
       [](const C& c) {
         std::string out;
         for (auto x : c.gen.size_bucket_edges) out += (out.empty() ? "" : ",") + std::to_string(x);
         return out;
       }},
      {"size_oodval_min", true,
       [](C& c, S v) { c.gen.size_oodval_min = to_size("size_oodval_min", v); },
       [](const C& c) { return std::to_string(c.gen.size_oodval_min); }},
      {"size_oodval_max", true,
       [](C& c, S v) { c.gen.size_oodval_max = to_size("size_oodval_max", v); },
       [](const C& c) { return std::to_string(c.gen.size_oodval_max); }},
      {"size_oodtest_min", true,
       [](C& c, S v) { c.gen.size_oodtest_min = to_size("size_oodtest_min", v); },
       [](const C& c) { return std::to_string(c.gen.size_oodtest_min); }},
      {"size_oodtest_max", true,
       [](C& c, S v) { c.gen.size_oodtest_max = to_size("size_oodtest_max", v); },
       [](const C& c) { return std::to_string(c.gen.size_oodtest_max); }},
      {"feature_mode", true,
       [](C& c, S v) {
         c.gen.feature_mode = named("feature_mode", [&] { return parse_feature_mode(v); });
       },
       [](const C& c) { return to_string(c.gen.feature_mode); }},
      {"noise_edge_prob", true,
       [](C& c, S v) { c.gen.noise_edge_prob = to_double("noise_edge_prob", v); },
       [](const C& c) { return fmt_double(c.gen.noise_edge_prob); }},

      {"method", false,
       [](C& c, S v) {
         if (v != "leci" && v != "erm")
           throw ConfigError("method: expected leci or erm, got '" + v + "'");
         c.method = v;
       },
       [](const C& c) { return c.method; }},
      {"seed", false, [](C& c, S v) { c.train.seed = to_size("seed", v); },
       [](const C& c) { return std::to_string(c.train.seed); }},
      {"seeds", false, [](C& c, S v) { c.seeds = to_size("seeds", v); },
       [](const C& c) { return std::to_string(c.seeds); }},
      {"epochs", false, [](C& c, S v) { c.train.epochs = to_size("epochs", v); },
       [](const C& c) { return std::to_string(c.train.epochs); }},
      {"batch_size", false, [](C& c, S v) { c.train.batch_size = to_size("batch_size", v); },
       [](const C& c) { return std::to_string(c.train.batch_size); }},
      {"lr", false, [](C& c, S v) { c.train.lr = to_double("lr", v); },
       [](const C& c) { return fmt_double(c.train.lr); }},
      {"weight_decay", false,
       [](C& c, S v) { c.train.weight_decay = to_double("weight_decay", v); },
       [](const C& c) { return fmt_double(c.train.weight_decay); }},
      {"lambda_L_max", false,
       [](C& c, S v) { c.train.lambda_l_max = to_double("lambda_L_max", v); },
       [](const C& c) { return fmt_double(c.train.lambda_l_max); }},
      {"lambda_E_max", false,
       [](C& c, S v) { c.train.lambda_e_max = to_double("lambda_E_max", v); },
       [](const C& c) { return fmt_double(c.train.lambda_e_max); }},
      {"lambda_PFSC_max", false,
       [](C& c, S v) { c.train.lambda_pfsc_max = to_double("lambda_PFSC_max", v); },
       [](const C& c) { return fmt_double(c.train.lambda_pfsc_max); }},
      {"warmup_epochs", false,
       [](C& c, S v) { c.train.warmup_epochs = to_size("warmup_epochs", v); },
       [](const C& c) { return std::to_string(c.train.warmup_epochs); }},
      {"ramp_shape", false,
       [](C& c, S v) { c.train.ramp_shape = named("ramp_shape", [&] { return parse_ramp_shape(v); }); },
       [](const C& c) { return to_string(c.train.ramp_shape); }},
      {"info_r", false,
       [](C& c, S v) {
         if (v == "none")
           c.train.info_r.reset();
         else
           c.train.info_r = to_double("info_r", v);
       },
       [](const C& c) { return c.train.info_r ? fmt_double(*c.train.info_r) : "none"; }},
      {"info_weight", false,
       [](C& c, S v) { c.train.info_weight = to_double("info_weight", v); },
       [](const C& c) { return fmt_double(c.train.info_weight); }},
      {"strict_alternation", false,
       [](C& c, S v) { c.train.strict_alternation = to_bool("strict_alternation", v); },
       [](const C& c) { return std::string(c.train.strict_alternation ? "true" : "false"); }},
      {"max_inner_epochs", false,
       [](C& c, S v) { c.train.max_inner_epochs = to_size("max_inner_epochs", v); },
       [](const C& c) { return std::to_string(c.train.max_inner_epochs); }},
      {"hidden_dim", false, [](C& c, S v) { c.train.hidden_dim = to_size("hidden_dim", v); },
       [](const C& c) { return std::to_string(c.train.hidden_dim); }},
      {"num_layers", false, [](C& c, S v) { c.train.num_layers = to_size("num_layers", v); },
       [](const C& c) { return std::to_string(c.train.num_layers); }},
      {"dropout", false, [](C& c, S v) { c.train.dropout = to_double("dropout", v); },
       [](const C& c) { return fmt_double(c.train.dropout); }},
      {"use_virtual_node", false,
       [](C& c, S v) { c.train.use_virtual_node = to_bool("use_virtual_node", v); },
       [](const C& c) { return std::string(c.train.use_virtual_node ? "true" : "false"); }},
      {"tau", false, [](C& c, S v) { c.train.tau = to_double("tau", v); },
       [](const C& c) { return fmt_double(c.train.tau); }},
      {"hard", false, [](C& c, S v) { c.train.hard = to_bool("hard", v); },
       [](const C& c) { return std::string(c.train.hard ? "true" : "false"); }},
      {"use_pfsc", false, [](C& c, S v) { c.train.use_pfsc = to_bool("use_pfsc", v); },
       [](const C& c) { return std::string(c.train.use_pfsc ? "true" : "false"); }},
      {"use_env_adv", false, [](C& c, S v) { c.train.use_env_adv = to_bool("use_env_adv", v); },
       [](const C& c) { return std::string(c.train.use_env_adv ? "true" : "false"); }},
      {"use_label_adv", false,
       [](C& c, S v) { c.train.use_label_adv = to_bool("use_label_adv", v); },
       [](const C& c) { return std::string(c.train.use_label_adv ? "true" : "false"); }},
      {"run_probes", false, [](C& c, S v) { c.run_probes = to_bool("run_probes", v); },
       [](const C& c) { return std::string(c.run_probes ? "true" : "false"); }},
      {"data_dir", false, [](C& c, S v) { c.data_dir = v; },
       [](const C& c) { return c.data_dir; }},
      {"out_dir", false, [](C& c, S v) { c.out_dir = v; },
       [](const C& c) { return c.out_dir; }},
  };
  return table;
}

const KeySpec* find_key(const std::string& key) {
  for (const auto& k : key_table())
    if (key == k.name) return &k;
  return nullptr;
}

ojson parse_json(const std::string& text) { return ojson::parse(text); }

// Generation keys are omitted from training reports: the data comes from
// disk there and its own manifest describes it.
ojson config_object(const RunConfig& cfg, bool with_gen = true) {
  ojson j;
  for (const auto& k : key_table())
    if (with_gen || !k.gen) j[k.name] = k.get(cfg);
  if (!cfg.sweep.empty()) {
    ojson s;
    for (const auto& [key, values] : cfg.sweep) s[key] = values;
    j["sweep"] = s;
  }
  return j;
}

void write_text(const fs::path& p, const std::string& text) { write_file(p, text); }

}  // namespace

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& k : key_table()) out.emplace_back(k.name);
  return out;
}

std::string get_key(const RunConfig& cfg, const std::string& key) {
  const KeySpec* spec = find_key(key);
  if (!spec) throw ConfigError(key + ": unknown key");
  return spec->get(cfg);
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  static const std::string kSweep = "sweep.";
  if (key.rfind(kSweep, 0) == 0) {
    const std::string inner = key.substr(kSweep.size());
    const KeySpec* spec = find_key(inner);
    if (!spec) throw ConfigError(key + ": unknown key '" + inner + "'");
    if (spec->gen || inner == "data_dir" || inner == "out_dir")
      throw ConfigError(key + ": only training keys can be swept");
    const auto values = split_list(value);
    if (values.empty()) throw ConfigError(key + ": empty value list");
    RunConfig probe = cfg;
    for (const auto& v : values) spec->set(probe, v);  // reject bad values early
    for (auto& [k, vs] : cfg.sweep)
      if (k == inner) {
        vs = values;
        return;
      }
    cfg.sweep.emplace_back(inner, values);
    return;
  }
  const KeySpec* spec = find_key(key);
  if (!spec) throw ConfigError(key + ": unknown key");
  spec->set(cfg, trim(value));
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    set_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config: file not found: " + path.string());
  return parse_run_config(read_file(path));
}

std::string resolved_config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : key_table()) out += std::string(k.name) + " = " + k.get(cfg) + "\n";
  for (const auto& [key, values] : cfg.sweep) {
    out += "sweep." + key + " = ";
    for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + values[i];
    out += "\n";
  }
  return out;
}

void validate(const RunConfig& cfg) {
  validate(cfg.gen);
  validate(cfg.train);
  if (cfg.seeds == 0) throw ConfigError("seeds: must be positive");
}

std::string format_mean_std(const std::vector<double>& values) {
  if (values.empty()) return "nan(nan)";
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f(%.2f)", 100.0 * mean, 100.0 * std::sqrt(var));
  return buf;
}

// ---- gen ------------------------------------------------------------------

std::string manifest_json(const RunConfig& cfg, const DatasetSplit& split) {
  ojson j;
  j["format"] = "leci-manifest";
  j["version"] = 1;
  j["variant"] = is_motif2(cfg.gen) ? "motif2" : "motif";
  ojson c;
  for (const auto& k : key_table())
    if (k.gen) c[k.name] = k.get(cfg);
  j["config"] = c;
  const EnvManifest names = env_names(cfg.gen);
  j["envs"] = {{"train", names.train},
               {"id_val", names.id_val},
               {"ood_val", names.ood_val},
               {"ood_test", names.ood_test}};
  ojson counts;
  for (const char* name : kSplitNames) counts[name] = split_part(split, name).size();
  j["counts"] = counts;
  return j.dump(2) + "\n";
}

void run_gen(const RunConfig& cfg, const fs::path& out_dir) {
  validate(cfg.gen);
  const DatasetSplit split = generate(cfg.gen, worker_cap());
  fs::create_directories(out_dir);
  save_split_dir(split, out_dir);
  write_text(out_dir / "manifest.json", manifest_json(cfg, split));
  write_text(out_dir / "config.txt", resolved_config_text(cfg));
}

// ---- train ----------------------------------------------------------------

namespace {

ojson metrics_object(const MetricsReport& r) { return parse_json(r.to_json()); }

SeedReport train_one_seed(const RunConfig& cfg, const DatasetSplit& data,
                          std::uint64_t seed, const fs::path& dir, const Logger& log) {
  fs::create_directories(dir);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  std::ofstream epochlog(dir / "epochlogs.jsonl", std::ios::binary | std::ios::trunc);
  if (!epochlog) throw ConfigError("cannot write " + (dir / "epochlogs.jsonl").string());
  auto on_epoch = [&](const EpochLog& l) {
    epochlog << epoch_log_json(l) << '\n';
    epochlog.flush();
    if (log) {
      char buf[256];
      std::snprintf(buf, sizeof buf,
                    "seed %llu epoch %zu L_inv %.4f L_E %.4f L_L %.4f L_PFSC %.4f "
                    "train %.3f id_val %.3f ood_val %.3f ood_test %.3f",
                    static_cast<unsigned long long>(seed), l.epoch, l.loss_inv,
                    l.loss_env, l.loss_label, l.loss_pfsc, l.train_acc, l.id_val_acc,
                    l.ood_val_acc, l.ood_test_acc);
      log(buf);
    }
  };
  TrainResult res = cfg.method == "erm" ? train_erm(data, tc, on_epoch)
                                        : train(data, tc, on_epoch);
  SeedReport rep;
  rep.seed = seed;
  rep.best_ood_val_epoch = res.best_ood_val_epoch;
  rep.best_id_val_epoch = res.best_id_val_epoch;

  EvalOptions eo;
  eo.probe.seed = seed;
  GraphModel& model = *res.model;
  rep.final_epoch = evaluate(model, data, eo);
  model.save(dir / "model_final.ckpt");

  load_param_values(model.params(), res.best_id_val_params);
  rep.at_id_val = evaluate(model, data, eo);
  model.save(dir / "model_id_val.ckpt");

  eo.run_probes = cfg.run_probes;
  load_param_values(model.params(), res.best_ood_val_params);
  rep.at_ood_val = evaluate(model, data, eo);
  model.save(dir / "model_ood_val.ckpt");

  ojson j;
  j["schema_version"] = kReportSchemaVersion;
  j["method"] = cfg.method;
  j["seed"] = seed;
  j["best_ood_val_epoch"] = rep.best_ood_val_epoch;
  j["best_id_val_epoch"] = rep.best_id_val_epoch;
  j["ood_val_selected"] = metrics_object(rep.at_ood_val);
  j["id_val_selected"] = metrics_object(rep.at_id_val);
  j["final"] = metrics_object(rep.final_epoch);
  write_text(dir / "report.json", j.dump(2) + "\n");
  return rep;
}

}  // namespace

std::string TrainRunReport::to_json(const RunConfig& cfg) const {
  ojson j;
  j["schema_version"] = kReportSchemaVersion;
  j["method"] = method;
  j["num_seeds"] = seeds.size();
  j["config"] = config_object(cfg, false);
  std::vector<double> test_ood, test_id, id_id, val_ood, test_final;
  ojson per_seed = ojson::array();
  for (const auto& s : seeds) {
    test_ood.push_back(s.at_ood_val.ood_test_acc);
    test_id.push_back(s.at_id_val.ood_test_acc);
    id_id.push_back(s.at_id_val.id_val_acc);
    val_ood.push_back(s.at_ood_val.ood_val_acc);
    test_final.push_back(s.final_epoch.ood_test_acc);
    ojson e;
    e["seed"] = s.seed;
    e["best_ood_val_epoch"] = s.best_ood_val_epoch;
    e["best_id_val_epoch"] = s.best_id_val_epoch;
    e["ood_val_selected"] = metrics_object(s.at_ood_val);
    e["id_val_selected"] = metrics_object(s.at_id_val);
    e["final"] = metrics_object(s.final_epoch);
    per_seed.push_back(e);
  }
  j["summary"] = {{"ood_test_acc@ood_val", format_mean_std(test_ood)},
                  {"ood_test_acc@id_val", format_mean_std(test_id)},
                  {"id_val_acc@id_val", format_mean_std(id_id)},
                  {"ood_val_acc@ood_val", format_mean_std(val_ood)},
                  {"ood_test_acc@final", format_mean_std(test_final)}};
  j["seeds"] = per_seed;
  return j.dump(2) + "\n";
}

TrainRunReport run_train(const RunConfig& cfg, const DatasetSplit& data,
                         const fs::path& out_dir, const Logger& log) {
  validate(cfg);
  if (data.train.empty()) throw ConfigError("data: training split is empty");
  fs::create_directories(out_dir);
  write_text(out_dir / "config.txt", resolved_config_text(cfg));
  TrainRunReport rep;
  rep.method = cfg.method;
  for (std::size_t k = 0; k < cfg.seeds; ++k) {
    const std::uint64_t seed = cfg.train.seed + k;
    rep.seeds.push_back(
        train_one_seed(cfg, data, seed, out_dir / ("seed_" + std::to_string(k)), log));
  }
  write_text(out_dir / "report.json", rep.to_json(cfg));
  return rep;
}

// ---- eval / explain / oracle ----------------------------------------------

MetricsReport run_eval(const fs::path& model_path, const DatasetSplit& data,
                       const EvalOptions& opts) {
  if (!fs::exists(model_path)) throw ConfigError("model: file not found: " + model_path.string());
  const auto model = load_model(model_path);
  return evaluate(*model, data, opts);
}

std::vector<Explanation> run_explain(const fs::path& model_path, const DatasetSplit& data,
                                     const ExplainRequest& req, const fs::path& out_dir) {
  if (req.threshold.has_value() == req.top_k.has_value())
    throw ConfigError("explain: give exactly one of --threshold or --top-k");
  if (!fs::exists(model_path)) throw ConfigError("model: file not found: " + model_path.string());
  const auto model = load_model(model_path);
  const auto& graphs = named("split", [&]() -> const std::vector<Graph>& {
    for (const char* n : kSplitNames)
      if (req.split == n) return split_part(data, n);
    throw ConfigError("unknown split '" + req.split + "'");
  });
  fs::create_directories(out_dir);
  std::vector<Explanation> out;
  ojson list = ojson::array();
  for (auto id : req.graph_ids) {
    if (id >= graphs.size())
      throw ConfigError("graph id " + std::to_string(id) + " out of range for split " +
                        req.split + " (" + std::to_string(graphs.size()) + " graphs)");
    const Batch b = make_batch(std::vector<const Graph*>{&graphs[id]});
    auto probs = model->edge_probabilities(b);
    if (probs.size() != b.num_edges())
      throw ConfigError("explain: model '" + model->method() + "' has no edge selector");
    Explanation ex = explain_from_probs(graphs[id], std::move(probs), req.threshold, req.top_k);
    write_text(out_dir / ("graph_" + std::to_string(id) + ".dot"), ex.dot);
    ojson e;
    e["graph"] = id;
    e["selected"] = ex.selected;
    e["probs"] = ex.probs;
    e["warnings"] = ex.warnings;
    list.push_back(e);
    out.push_back(std::move(ex));
  }
  write_text(out_dir / "explain.json", list.dump(2) + "\n");
  return out;
}

OracleReport run_oracle() { return oracle_check_lemma1(build_micro_universe()); }

// ---- sweep ----------------------------------------------------------------

unsigned worker_cap() {
  if (const char* env = std::getenv("LECI_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<SweepPoint> expand_sweep(const RunConfig& cfg) {
  std::vector<SweepPoint> points(1);
  for (const auto& [key, values] : cfg.sweep) {
    std::vector<SweepPoint> next;
    for (const auto& p : points)
      for (const auto& v : values) {
        SweepPoint q = p;
        q.assignment.emplace_back(key, v);
        next.push_back(std::move(q));
      }
    points = std::move(next);
  }
  for (std::size_t i = 0; i < points.size(); ++i) points[i].index = i;
  return points;
}

std::vector<SweepPoint> run_sweep(const RunConfig& cfg, const DatasetSplit& data,
                                  const fs::path& out_dir, unsigned jobs,
                                  const Logger& log) {
  std::vector<SweepPoint> points = expand_sweep(cfg);
  std::vector<RunConfig> configs;
  for (const auto& p : points) {
    RunConfig c = cfg;
    c.sweep.clear();
    for (const auto& [k, v] : p.assignment) set_key(c, k, v);
    validate(c);
    configs.push_back(std::move(c));
  }
  fs::create_directories(out_dir);
  write_text(out_dir / "config.txt", resolved_config_text(cfg));

  const unsigned workers =
      std::max(1u, std::min({jobs == 0 ? 1u : jobs, worker_cap(),
                             static_cast<unsigned>(points.size())}));
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= points.size()) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      try {
        Logger point_log;
        if (log)
          point_log = [&, i](const std::string& line) {
            std::lock_guard lock(mu);
            log("run_" + std::to_string(i) + " " + line);
          };
        const TrainRunReport rep =
            run_train(configs[i], data, out_dir / ("run_" + std::to_string(i)), point_log);
        double val = 0.0, test = 0.0;
        for (const auto& s : rep.seeds) {
          val += s.at_ood_val.ood_val_acc;
          test += s.at_ood_val.ood_test_acc;
        }
        points[i].mean_best_ood_val_acc = val / static_cast<double>(rep.seeds.size());
        points[i].mean_ood_test_acc = test / static_cast<double>(rep.seeds.size());
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<SweepPoint> ranked = points;
  std::stable_sort(ranked.begin(), ranked.end(), [](const SweepPoint& a, const SweepPoint& b) {
    return a.mean_best_ood_val_acc > b.mean_best_ood_val_acc;
  });
  ojson j;
  j["schema_version"] = kReportSchemaVersion;
  j["ranked_by"] = "ood_val_acc";
  ojson list = ojson::array();
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    ojson e;
    e["rank"] = r + 1;
    e["run"] = "run_" + std::to_string(ranked[r].index);
    ojson a;
    for (const auto& [k, v] : ranked[r].assignment) a[k] = v;
    e["assignment"] = a;
    e["ood_val_acc"] = ranked[r].mean_best_ood_val_acc;
    e["ood_test_acc"] = ranked[r].mean_ood_test_acc;
    list.push_back(e);
  }
  j["ranking"] = list;
  write_text(out_dir / "ranking.json", j.dump(2) + "\n");
  return ranked;
}

}  // namespace leci
