// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.

#include <cmath>
#include <limits>
#include <set>

#include "common.hpp"
#include "doctest.h"
#include "leci/error.hpp"
#include "leci/train.hpp"

using namespace leci;

namespace {

ModelConfig small_model(std::size_t feat = 2) {
  ModelConfig m;
  m.feature_dim = feat;
  m.hidden_dim = 6;
  m.num_layers = 2;
  m.dropout = 0.0;
  return m;
}

Batch random_batch(std::uint64_t seed, std::size_t feat = 2) {
  Rng rng(seed);
  std::vector<Graph> gs;
  for (int i = 0; i < 6; ++i) {
    Graph g = test::random_graph(rng, 5 + i % 3, feat, 0.5);
    g.y = i % 3;
    g.env = (i / 3) % 3;
    gs.push_back(g);
  }
  gs[0].env = 2;
  return make_batch(gs);
}

TrainConfig tiny_train() {
  TrainConfig c;
  c.epochs = 3;
  c.warmup_epochs = 1;
  c.batch_size = 8;
  c.hidden_dim = 8;
  c.num_layers = 2;
  c.dropout = 0.2;
  return c;
}

// Gradient of every parameter, in store order (zeros when untouched).
std::vector<std::vector<double>> grads(const ParamStore& store) {
  std::vector<std::vector<double>> out;
  for (const auto& [_, t] : store.items())
    out.push_back(t.has_grad() ? t.grad() : std::vector<double>(t.numel(), 0.0));
  return out;
}

std::vector<std::vector<double>> group_values(const ParamStore& store,
                                              const std::string& group) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, t] : store.items())
    if (LeciModel::group_of(name) == group) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

double manual_nll(const Tensor& logits, const std::vector<std::int64_t>& y) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double mx = -1e300;
    for (std::size_t c = 0; c < logits.cols(); ++c) mx = std::max(mx, logits(i, c));
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(logits(i, c) - mx);
    total -= logits(i, static_cast<std::size_t>(y[i])) - mx - std::log(z);
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace

TEST_CASE("losses are the negative mean log-likelihoods") {
  LeciModel m(small_model(), 4);
  Batch b = random_batch(1);
  NoGradGuard ng;
  LeciStep s = leci_forward(m, b, {1.0, 2.0, 0.5}, false, Rng(0));
  CHECK(s.loss_inv.item() == doctest::Approx(manual_nll(s.inv_logits, b.y)).epsilon(1e-13));
  CHECK(s.loss_env.item() == doctest::Approx(manual_nll(s.env_logits, b.env)).epsilon(1e-13));
  CHECK(s.loss_label.item() ==
        doctest::Approx(manual_nll(s.label_logits, b.y)).epsilon(1e-13));
  const double total =
      s.loss_inv.item() + s.loss_env.item() + s.loss_label.item() + s.loss_pfsc.item();
  CHECK(s.total.item() == doctest::Approx(total).epsilon(1e-13));

  // The transform starts at zero: purified features are the raw features.
  for (std::size_t i = 0; i < b.x.size(); ++i) CHECK(s.x_purified.data()[i] == b.x[i]);

  // PFSC pools node log-probabilities per graph before the likelihood.
  ForwardCtx ctx;
  PfscResult pf = loss_pfsc(m, b, 0.0, ctx);
  double want = 0.0;
  for (std::size_t g = 0; g < b.num_graphs; ++g) want -= pf.graph_logp(g, b.env[g]);
  CHECK(pf.loss.item() == doctest::Approx(want / 6).epsilon(1e-13));
  // With all-zero logits every term is ln 3.
  CHECK(manual_nll(Tensor::zeros(4, 3), {0, 1, 2, 0}) == doctest::Approx(std::log(3.0)));
}

TEST_CASE("composite loss gradients match finite differences for non-reversed groups") {
  LeciModel m(small_model(), 6);
  Batch b = random_batch(2);
  const Lambdas lam{0.7, 1.3, 0.4};
  auto f = [&] { return leci_forward(m, b, lam, true, Rng(3), 0.3, 0.5).total; };
  std::vector<Tensor> leaves;
  for (const auto& [name, t] : m.params().items()) {
    const auto g = LeciModel::group_of(name);
    if (g == "inv" || g == "env" || g == "label" || g == "pfsc_fe") leaves.push_back(t);
  }
  REQUIRE(!leaves.empty());
  auto gc = test::grad_check(f, leaves, 1e-5, 8);
  CHECK(gc.max_rel_err < 1e-6);
}

TEST_CASE("invariant loss gradient reaches the selector unreversed") {
  LeciModel m(small_model(), 7);
  Rng rng(2);
  Batch b = make_batch(std::vector<Graph>{test::random_graph(rng, 6, 2, 0.5),
                                          test::random_graph(rng, 5, 2, 0.5)});
  b.y = {0, 2};
  auto f = [&] {
    Rng r(0);
    ForwardCtx ctx{true, &r};
    Tensor x = m.purify(b, ctx);
    return loss_inv(m, b, x, sigmoid(m.selector().edge_logits(b, x, ctx)), ctx);
  };
  std::vector<Tensor> leaves;
  for (const auto& [name, t] : m.params().items())
    if (LeciModel::group_of(name) == "selector") leaves.push_back(t);
  CHECK(test::grad_check(f, leaves, 1e-5, 8).max_rel_err < 1e-6);
}

TEST_CASE("gradient reversal scales the selector gradient by -lambda") {
  LeciModel m(small_model(), 8);
  Batch b = random_batch(3);

  // Reference: plain gradient of the env-discriminator NLL through w_C.
  auto run = [&](std::optional<double> lambda) {
    m.params().zero_grad();
    ForwardCtx ctx;
    Tensor x = m.purify(b, ctx);
    Tensor w = sigmoid(m.selector().edge_logits(b, x, ctx));
    Tensor loss = lambda ? loss_ea(m, b, x, w, *lambda, ctx)
                         : nll_loss(log_softmax(m.env().logits(b, x, w, ctx)), b.env);
    backward(loss);
    return grads(m.params());
  };
  const auto plain = run(std::nullopt);
  const auto& items = m.params().items();
  for (double lambda : {0.5, 1.0, 2.0, 4.0, 10.0}) {
    CAPTURE(lambda);
    const auto rev = run(lambda);
    const bool pow2 = lambda != 10.0;
    double worst = 0.0;
    bool exact = true;
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto g = LeciModel::group_of(items[i].first);
      for (std::size_t k = 0; k < plain[i].size(); ++k) {
        if (g == "env") {
          exact = exact && rev[i][k] == plain[i][k];
        } else if (g == "selector") {
          const double want = -lambda * plain[i][k];
          exact = exact && rev[i][k] == want;
          worst = std::max(worst, std::abs(rev[i][k] - want) / std::max(1e-300, std::abs(want)));
        }
      }
    }
    if (pow2)
      CHECK(exact);
    else
      CHECK(worst <= 1e-12);
  }

  // lambda = 0 cuts the selector off entirely.
  const auto zero = run(0.0);
  for (std::size_t i = 0; i < items.size(); ++i)
    if (LeciModel::group_of(items[i].first) == "selector")
      for (double v : zero[i]) CHECK(v == 0.0);
  CHECK_THROWS_AS(run(-1.0), ContractError);
}

TEST_CASE("each loss only reaches its own groups") {
  LeciModel m(small_model(), 10);
  Batch b = random_batch(4);
  auto touched = [&](auto pick) {
    m.params().zero_grad();
    LeciStep s = leci_forward(m, b, {1.0, 1.0, 1.0}, true, Rng(1));
    backward(pick(s));
    std::set<std::string> out;
    const auto g = grads(m.params());
    for (std::size_t i = 0; i < g.size(); ++i)
      for (double v : g[i])
        if (v != 0.0) {
          out.insert(LeciModel::group_of(m.params().items()[i].first));
          break;
        }
    return out;
  };
  using S = std::set<std::string>;
  CHECK(touched([](LeciStep& s) { return s.loss_inv; }) == S{"pfsc_t", "selector", "inv"});
  CHECK(touched([](LeciStep& s) { return s.loss_env; }) == S{"pfsc_t", "selector", "env"});
  CHECK(touched([](LeciStep& s) { return s.loss_label; }) ==
        S{"pfsc_t", "selector", "label"});
  CHECK(touched([](LeciStep& s) { return s.loss_pfsc; }) == S{"pfsc_t", "pfsc_fe"});
}

TEST_CASE("ramp schedule") {
  TrainConfig c;
  c.epochs = 13;
  c.warmup_epochs = 2;
  c.lambda_l_max = 5;
  c.lambda_e_max = 10;
  c.lambda_pfsc_max = 1;
  for (std::size_t e : {0u, 1u, 2u}) {
    Lambdas l = ramp(e, c);
    CHECK(l.label == 0.0);
    CHECK(l.env == 0.0);
    CHECK(l.pfsc == 0.0);
  }
  CHECK(ramp(7, c).label == doctest::Approx(2.5));
  CHECK(ramp(7, c).env == doctest::Approx(5.0));
  CHECK(ramp(12, c).label == 5.0);
  CHECK(ramp(12, c).env == 10.0);
  CHECK(ramp(12, c).pfsc == 1.0);
  c.ramp_shape = RampShape::kDannSigmoid;
  const double mid = (2 / (1 + std::exp(-5.0)) - 1) / (2 / (1 + std::exp(-10.0)) - 1);
  CHECK(ramp(7, c).env == doctest::Approx(10 * mid).epsilon(1e-14));
  CHECK(ramp(12, c).env == 10.0);
  CHECK(ramp(2, c).env == 0.0);
  CHECK(parse_ramp_shape("dann_sigmoid") == RampShape::kDannSigmoid);
  CHECK_THROWS_AS(parse_ramp_shape("cosine"), ConfigError);
}

TEST_CASE("first Adam step moves each parameter by about lr against the gradient") {
  ParamStore store;
  Tensor p = store.add("p", Tensor::from({1, 3}, {1.0, -2.0, 0.5}, true));
  Adam opt(store, {.lr = 0.1});
  backward(sum(mul(p, Tensor::from({1, 3}, {3.0, -0.01, 0.0}))));
  opt.step();
  CHECK(p(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p(0, 1) == doctest::Approx(-1.9).epsilon(1e-5));
  CHECK(p(0, 2) == 0.5);
}

TEST_CASE("zero adversarial strength leaves the predictor path untouched") {
  DatasetSplit split = generate(test::tiny_gen(0, 2));
  TrainConfig c = tiny_train();
  c.lambda_l_max = c.lambda_e_max = c.lambda_pfsc_max = 0.0;
  c.eval_each_epoch = false;
  TrainResult with = train(split, c);
  c.use_env_adv = c.use_label_adv = false;
  TrainResult without = train(split, c);
  for (const char* g : {"selector", "inv", "pfsc_t"}) {
    CAPTURE(g);
    CHECK(group_values(with.model->params(), g) == group_values(without.model->params(), g));
  }

  // Re-drawn discriminators change nothing on the predictor path either.
  c.use_env_adv = c.use_label_adv = true;
  auto fresh = std::make_unique<LeciModel>(model_config_for(split, c),
                                           Rng(c.seed).fork(1).next_u64());
  for (const char* g : {"env", "label", "pfsc_fe"}) fresh->reinit_group(g, 12345);
  TrainResult other = train(std::move(fresh), split, c);
  for (const char* g : {"selector", "inv", "pfsc_t"}) {
    CAPTURE(g);
    CHECK(group_values(with.model->params(), g) == group_values(other.model->params(), g));
  }
  CHECK(group_values(with.model->params(), "env") != group_values(other.model->params(), "env"));
}

TEST_CASE("training is deterministic for a fixed seed") {
  DatasetSplit split = generate(test::tiny_gen(1, 2));
  TrainConfig c = tiny_train();
  TrainResult a = train(split, c);
  TrainResult b = train(split, c);
  REQUIRE(a.logs.size() == 3);
  CHECK(a.logs == b.logs);
  CHECK(param_values(a.model->params()) == param_values(b.model->params()));
  c.seed = 1;
  CHECK(train(split, c).logs != a.logs);
  CHECK(a.logs[0].lambda_e == 0.0);
  CHECK(a.logs[2].lambda_e == c.lambda_e_max);
}

TEST_CASE("non-finite losses raise NumericError naming the term") {
  DatasetSplit split = generate(test::tiny_gen(2, 2));
  split.train[0].x[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(split, tiny_train());
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("at epoch 0") != std::string::npos);
  }
}

TEST_CASE("config validation and edge cases") {
  TrainConfig c = tiny_train();
  c.warmup_epochs = 3;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = tiny_train();
  c.info_r = 1.5;
  CHECK_THROWS_AS(validate(c), ConfigError);

  DatasetSplit split = generate(test::tiny_gen(3, 2));
  for (const char* name : kSplitNames)
    for (auto& g : split_part(split, name)) g.env = 0;
  CHECK_THROWS_WITH_AS(train(split, tiny_train()), doctest::Contains(">=2 environments"),
                       ConfigError);
  c = tiny_train();
  c.use_env_adv = false;
  CHECK_NOTHROW(train(split, c));

  DatasetSplit empty;
  CHECK_THROWS_AS(train(empty, tiny_train()), ConfigError);
}

TEST_CASE("erm with no epochs returns the initial model") {
  DatasetSplit split = generate(test::tiny_gen(4, 2));
  TrainConfig c = tiny_train();
  c.epochs = 0;
  TrainResult r = train_erm(split, c);
  CHECK(r.logs.empty());
  REQUIRE(r.model);
  CHECK(r.model->method() == "erm");
  CHECK(r.model->edge_probabilities(make_batch(split.train)).empty());
}

TEST_CASE("model save and load round trip") {
  DatasetSplit split = generate(test::tiny_gen(5, 2));
  TrainResult r = train(split, tiny_train());
  auto dir = test::scratch_dir("train_model");
  r.model->save(dir / "model.bin");
  auto back = load_model(dir / "model.bin");
  CHECK(back->method() == "leci");
  Batch b = make_batch(split.ood_test);
  CHECK(std::ranges::equal(back->predict_logits(b).data(), r.model->predict_logits(b).data()));
  CHECK(back->edge_probabilities(b) == r.model->edge_probabilities(b));
}
