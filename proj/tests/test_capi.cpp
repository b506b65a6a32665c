// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.
//
// Exercises the shared library through the C header only.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "doctest.h"
#include "leci/leci.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("leci_capi_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Takes ownership of a library-allocated string.
std::string take(char* s) {
  std::string out = s ? s : "";
  leci_string_free(s);
  return out;
}

leci_config* tiny_config() {
  leci_config* cfg = nullptr;
  REQUIRE(leci_config_parse("n_per_class_per_env = 2\neval_per_class = 2\nepochs = 3\n"
                            "warmup_epochs = 1\nhidden_dim = 8\nnum_layers = 2\n",
                            &cfg) == LECI_OK);
  return cfg;
}

}  // namespace

TEST_CASE("version and error reporting") {
  CHECK(std::string(leci_version()) == "1.0.0");
  leci_config* cfg = nullptr;
  CHECK(leci_config_parse("bogus = 1\n", &cfg) == LECI_ERR_CONFIG);
  CHECK(cfg == nullptr);
  CHECK(std::string(leci_last_error()).find("bogus") != std::string::npos);
  CHECK(leci_config_new(nullptr) == LECI_ERR_ARGUMENT);
  CHECK(leci_config_load("/nonexistent/run.cfg", &cfg) == LECI_ERR_CONFIG);
  leci_dataset* d = nullptr;
  CHECK(leci_dataset_load("/nonexistent", &d) == LECI_ERR_CONFIG);
  leci_model* m = nullptr;
  CHECK(leci_model_load("/nonexistent/model.ckpt", &m) == LECI_ERR_CONFIG);
  leci_config_free(nullptr);
  leci_dataset_free(nullptr);
  leci_model_free(nullptr);
}

TEST_CASE("config set, get, echo, validate") {
  leci_config* cfg = nullptr;
  REQUIRE(leci_config_new(&cfg) == LECI_OK);
  CHECK(leci_config_set(cfg, "epochs", "9") == LECI_OK);
  char* v = nullptr;
  REQUIRE(leci_config_get(cfg, "epochs", &v) == LECI_OK);
  CHECK(take(v) == "9");
  CHECK(leci_config_set(cfg, "epochs", "nine") == LECI_ERR_CONFIG);
  CHECK(leci_config_set(cfg, nullptr, "1") == LECI_ERR_ARGUMENT);
  CHECK(leci_config_validate(cfg) == LECI_ERR_CONFIG);  // warmup 30 >= epochs 9
  CHECK(leci_config_set(cfg, "warmup_epochs", "2") == LECI_OK);
  CHECK(leci_config_validate(cfg) == LECI_OK);
  char* echo = nullptr;
  REQUIRE(leci_config_echo(cfg, &echo) == LECI_OK);
  const std::string text = take(echo);
  CHECK(text.find("epochs = 9") != std::string::npos);
  leci_config* back = nullptr;
  REQUIRE(leci_config_parse(text.c_str(), &back) == LECI_OK);
  char* echo2 = nullptr;
  REQUIRE(leci_config_echo(back, &echo2) == LECI_OK);
  CHECK(take(echo2) == text);
  leci_config_free(back);
  leci_config_free(cfg);
}

TEST_CASE("dataset, model and command round trip") {
  auto dir = scratch("roundtrip");
  leci_config* cfg = tiny_config();
  leci_dataset* data = nullptr;
  REQUIRE(leci_dataset_generate(cfg, &data) == LECI_OK);
  size_t n = 0;
  CHECK(leci_dataset_size(data, "train", &n) == LECI_OK);
  CHECK(n == 18);
  CHECK(leci_dataset_size(data, "nope", &n) == LECI_ERR_CONFIG);
  REQUIRE(leci_dataset_save(data, (dir / "data").c_str()) == LECI_OK);

  leci_model* model = nullptr;
  char* logs = nullptr;
  REQUIRE(leci_model_train(cfg, data, &model, &logs) == LECI_OK);
  const std::string log_text = take(logs);
  CHECK(std::count(log_text.begin(), log_text.end(), '\n') == 3);
  char* method = nullptr;
  REQUIRE(leci_model_method(model, &method) == LECI_OK);
  CHECK(take(method) == "leci");

  double acc = -1;
  CHECK(leci_model_accuracy(model, data, "ood_test", &acc) == LECI_OK);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  double probs[64];
  size_t count = 0;
  REQUIRE(leci_model_edge_probs(model, data, "train", 0, probs, 64, &count) == LECI_OK);
  CHECK(count > 0);
  for (size_t i = 0; i < std::min<size_t>(count, 64); ++i) {
    CHECK(probs[i] > 0.0);
    CHECK(probs[i] < 1.0);
  }
  CHECK(leci_model_edge_probs(model, data, "train", 9999, probs, 64, &count) != LECI_OK);

  REQUIRE(leci_model_save(model, (dir / "m.ckpt").c_str()) == LECI_OK);
  leci_model* loaded = nullptr;
  REQUIRE(leci_model_load((dir / "m.ckpt").c_str(), &loaded) == LECI_OK);
  double acc2 = -1;
  CHECK(leci_model_accuracy(loaded, data, "ood_test", &acc2) == LECI_OK);
  CHECK(acc2 == acc);
  char* rep = nullptr;
  REQUIRE(leci_model_evaluate(loaded, data, 0, &rep) == LECI_OK);
  auto j = nlohmann::json::parse(take(rep));
  CHECK(j["ood_test_acc"] == acc);

  char* eval = nullptr;
  REQUIRE(leci_run_eval((dir / "m.ckpt").c_str(), (dir / "data").c_str(), 0, &eval) == LECI_OK);
  CHECK(nlohmann::json::parse(take(eval))["ood_test_acc"] == acc);

  const size_t ids[] = {1};
  char* ex = nullptr;
  CHECK(leci_run_explain((dir / "m.ckpt").c_str(), (dir / "data").c_str(), "ood_test", ids, 1,
                         1, 0.5, 1, 3, (dir / "ex").c_str(), &ex) == LECI_ERR_ARGUMENT);
  REQUIRE(leci_run_explain((dir / "m.ckpt").c_str(), (dir / "data").c_str(), "ood_test", ids,
                           1, 0, 0.0, 1, 3, (dir / "ex").c_str(), &ex) == LECI_OK);
  auto exj = nlohmann::json::parse(take(ex));
  CHECK(exj[0]["selected"].size() == 3);
  CHECK(fs::exists(dir / "ex" / "graph_1.dot"));

  leci_model_free(loaded);
  leci_model_free(model);
  leci_dataset_free(data);
  leci_config_free(cfg);
}

TEST_CASE("run commands write their layouts") {
  auto dir = scratch("commands");
  leci_config* cfg = tiny_config();
  REQUIRE(leci_run_gen(cfg, (dir / "data").c_str()) == LECI_OK);
  CHECK(fs::exists(dir / "data" / "manifest.json"));

  int lines = 0;
  auto cb = [](const char*, void* user) { ++*static_cast<int*>(user); };
  char* rep = nullptr;
  REQUIRE(leci_run_train(cfg, (dir / "data").c_str(), (dir / "train").c_str(), cb, &lines,
                         &rep) == LECI_OK);
  CHECK(lines >= 3);
  CHECK(nlohmann::json::parse(take(rep))["method"] == "leci");
  CHECK(fs::exists(dir / "train" / "seed_0" / "model_final.ckpt"));

  CHECK(leci_config_set(cfg, "sweep.lambda_E_max", "1,2") == LECI_OK);
  char* ranking = nullptr;
  REQUIRE(leci_run_sweep(cfg, (dir / "data").c_str(), (dir / "sweep").c_str(), 1, nullptr,
                         nullptr, &ranking) == LECI_OK);
  CHECK(nlohmann::json::parse(take(ranking))["ranking"].size() == 2);
  CHECK(fs::exists(dir / "sweep" / "run_1"));

  char* oracle = nullptr;
  CHECK(leci_run_oracle(&oracle) == LECI_OK);
  CHECK(nlohmann::json::parse(take(oracle))["pass"] == true);

  // Non-finite data surfaces as a numeric error.
  std::ifstream in(dir / "data" / "train.jsonl");
  std::string all((std::istreambuf_iterator<char>(in)), {});
  in.close();
  auto pos = all.find("\"x\":[[") + 6;
  all.replace(pos, all.find(']', pos) - pos, "1e999");
  std::ofstream(dir / "data" / "train.jsonl") << all;
  leci_dataset* bad = nullptr;
  const leci_status st = leci_dataset_load((dir / "data").c_str(), &bad);
  if (st == LECI_OK) {
    leci_model* m = nullptr;
    CHECK(leci_model_train(cfg, bad, &m, nullptr) == LECI_ERR_NUMERIC);
    leci_dataset_free(bad);
  } else {
    CHECK(st == LECI_ERR_CONFIG);
  }
  leci_config_free(cfg);
}
