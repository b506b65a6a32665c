// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.

#include <filesystem>

#include "json.hpp"

#include "common.hpp"
#include "doctest.h"
#include "leci/error.hpp"
#include "leci/run.hpp"

using namespace leci;
namespace fs = std::filesystem;

TEST_CASE("config parsing: comments, overrides, unknown keys") {
  RunConfig c = parse_run_config(
      "# comment\n"
      "epochs = 12   # trailing\n"
      "\n"
      "lambda_E_max=3.5\n"
      "train_bases = wheel, ladder\n"
      "epochs = 20\n"
      "use_pfsc = false\n");
  CHECK(c.train.epochs == 20);
  CHECK(c.train.lambda_e_max == 3.5);
  CHECK(c.gen.train_bases == std::vector<BaseKind>{BaseKind::kWheel, BaseKind::kLadder});
  CHECK_FALSE(c.train.use_pfsc);

  CHECK_THROWS_WITH_AS(parse_run_config("bogus = 1\n"), doctest::Contains("bogus"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("epochs = ten\n"), doctest::Contains("epochs"),
                       ConfigError);
  CHECK_THROWS_AS(parse_run_config("just a line\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("oodtest_base = hexagon\n"), ConfigError);
}

TEST_CASE("echo re-parses to the same config") {
  RunConfig c = parse_run_config(
      "epochs = 7\nwarmup_epochs = 2\nfeature_mode = env_color\ninfo_r = 0.4\n"
      "ramp_shape = dann_sigmoid\nsize_bucket_edges = 5,9,13\nmethod = erm\n");
  const std::string echo = resolved_config_text(c);
  RunConfig back = parse_run_config(echo);
  CHECK(resolved_config_text(back) == echo);
  for (const auto& k : known_keys()) {
    CAPTURE(k);
    CHECK(get_key(back, k) == get_key(c, k));
  }
  CHECK(get_key(c, "method") == "erm");
  CHECK_THROWS_AS(get_key(c, "nope"), ConfigError);
}

TEST_CASE("validation covers both halves") {
  RunConfig c;
  CHECK_NOTHROW(validate(c));
  c.train.warmup_epochs = c.train.epochs;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = RunConfig{};
  c.gen.n_per_class_per_env = 0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  CHECK_THROWS_AS(parse_run_config("method = svm\n"), ConfigError);
}

TEST_CASE("sweep expansion is a cartesian product in file order") {
  RunConfig c = parse_run_config("sweep.lambda_E_max = 1,2\nsweep.lambda_L_max = 0.5, 1, 3\n");
  auto pts = expand_sweep(c);
  REQUIRE(pts.size() == 6);
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK(pts[i].index == i);
  using A = std::vector<std::pair<std::string, std::string>>;
  CHECK(pts[0].assignment == A{{"lambda_E_max", "1"}, {"lambda_L_max", "0.5"}});
  CHECK(pts[5].assignment == A{{"lambda_E_max", "2"}, {"lambda_L_max", "3"}});
  CHECK_THROWS_AS(parse_run_config("sweep.bogus = 1,2\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("sweep.oodtest_base = path,tree\n"), ConfigError);
  CHECK(expand_sweep(RunConfig{}).size() == 1);
}

TEST_CASE("mean and std formatting") {
  CHECK(format_mean_std({0.5}) == "50.00(0.00)");
  CHECK(format_mean_std({0.6, 0.8}) == "70.00(10.00)");
  CHECK(format_mean_std({1.0 / 3, 1.0 / 3, 1.0 / 3}) == "33.33(0.00)");
}

TEST_CASE("gen, train, eval, explain end to end") {
  auto dir = test::scratch_dir("run_e2e");
  RunConfig c = parse_run_config(
      "n_per_class_per_env = 2\neval_per_class = 2\nepochs = 3\nwarmup_epochs = 1\n"
      "hidden_dim = 8\nnum_layers = 2\nseeds = 2\n");
  run_gen(c, dir / "data");
  for (const char* f : {"train.jsonl", "id_val.jsonl", "ood_val.jsonl", "ood_test.jsonl",
                        "manifest.json", "config.txt"})
    CHECK(fs::exists(dir / "data" / f));
  auto manifest = nlohmann::json::parse(read_file(dir / "data" / "manifest.json"));
  CHECK(manifest["envs"]["ood_test"][0] == "path");

  DatasetSplit data = load_split_dir(dir / "data");
  TrainRunReport rep = run_train(c, data, dir / "train");
  REQUIRE(rep.seeds.size() == 2);
  CHECK(rep.seeds[1].seed == rep.seeds[0].seed + 1);
  for (const char* f : {"model_final.ckpt", "model_ood_val.ckpt", "model_id_val.ckpt",
                        "epochlogs.jsonl", "report.json"})
    CHECK(fs::exists(dir / "train" / "seed_0" / f));
  auto report = nlohmann::json::parse(read_file(dir / "train" / "report.json"));
  CHECK(report.contains("summary"));
  CHECK(report["config"].contains("epochs"));
  CHECK_FALSE(report["config"].contains("oodtest_base"));

  MetricsReport m = run_eval(dir / "train" / "seed_0" / "model_final.ckpt", data, {});
  CHECK(m.ood_test_acc == doctest::Approx(rep.seeds[0].final_epoch.ood_test_acc));
  REQUIRE(m.edge_selection);

  ExplainRequest req;
  req.graph_ids = {0, 2};
  req.top_k = 4;
  auto ex = run_explain(dir / "train" / "seed_0" / "model_final.ckpt", data, req, dir / "ex");
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].selected.size() == 4);
  CHECK(fs::exists(dir / "ex" / "graph_2.dot"));
  CHECK(fs::exists(dir / "ex" / "explain.json"));
  req.graph_ids = {999};
  CHECK_THROWS(run_explain(dir / "train" / "seed_0" / "model_final.ckpt", data, req, dir / "ex"));
}

TEST_CASE("oracle command passes") { CHECK(run_oracle().pass()); }
