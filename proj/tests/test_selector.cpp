// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.

#include <cmath>
#include <regex>

#include "common.hpp"
#include "doctest.h"
#include "leci/error.hpp"
#include "leci/selector.hpp"

using namespace leci;

namespace {

Selector make_selector(ParamStore& store, std::size_t feat, std::uint64_t seed = 2) {
  Rng rng(seed);
  SelectorConfig cfg;
  cfg.gin = GinConfig{.input_dim = feat, .num_layers = 2, .hidden_dim = 6, .dropout = 0.0};
  return Selector(store, "sel", cfg, rng);
}

std::size_t count_red(const std::string& dot) {
  std::size_t n = 0;
  for (auto p = dot.find("color=red"); p != std::string::npos; p = dot.find("color=red", p + 1))
    ++n;
  return n;
}

}  // namespace

TEST_CASE("edge logits are symmetric in edge orientation") {
  // The symmetrized logit equals the mean of the edge MLP on both
  // concatenation orders, so reversing every edge changes nothing.
  ParamStore store;
  Selector sel = make_selector(store, 2);
  Rng rng(3);
  Graph g = test::random_graph(rng, 7, 2, 0.5);
  Batch b = make_batch(std::vector<Graph>{g});
  Batch flipped = b;
  std::swap(flipped.edge_u, flipped.edge_v);
  ForwardCtx ctx;
  NoGradGuard ng;
  Tensor a = sel.edge_logits(b, ctx);
  Tensor c = sel.edge_logits(flipped, ctx);
  REQUIRE(a.rows() == b.num_edges());
  CHECK(a.cols() == 1);
  for (std::size_t e = 0; e < a.rows(); ++e) CHECK(a(e, 0) == doctest::Approx(c(e, 0)).epsilon(1e-14));
  auto probs = edge_probs(sel, b);
  for (std::size_t e = 0; e < probs.size(); ++e) {
    CHECK(probs[e] > 0.0);
    CHECK(probs[e] < 1.0);
    CHECK(probs[e] == doctest::Approx(1.0 / (1.0 + std::exp(-a(e, 0)))).epsilon(1e-14));
  }
}

TEST_CASE("selector gradients match finite differences") {
  ParamStore store;
  Selector sel = make_selector(store, 2);
  Rng rng(5);
  Batch b = make_batch(std::vector<Graph>{test::random_graph(rng, 6, 2, 0.5),
                                          test::random_graph(rng, 5, 2, 0.6)});
  Tensor x = Tensor::from({b.num_nodes, 2}, b.x, true);
  auto f = [&] {
    Rng r(0);
    ForwardCtx ctx{true, &r};
    return test::weighted_sum(sel.edge_logits(b, x, ctx));
  };
  std::vector<Tensor> leaves = {x};
  for (const auto& [name, t] : store.items()) leaves.push_back(t);
  CHECK(test::grad_check(f, leaves, 1e-5, 16).max_rel_err < 1e-6);
}

TEST_CASE("selection weights are complementary") {
  Rng rng(7);
  Tensor logits = test::random_tensor(50, 1, rng, -3, 3, false);
  Selection ev = select_from_logits(logits, 1.0, false, false, nullptr);
  Selection tr = select_from_logits(logits, 1.0, false, true, &rng);
  for (std::size_t e = 0; e < 50; ++e) {
    CHECK(ev.w_causal(e, 0) + ev.w_spurious(e, 0) == doctest::Approx(1.0));
    CHECK(ev.w_causal(e, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-logits(e, 0)))));
    CHECK(tr.w_causal(e, 0) + tr.w_spurious(e, 0) == doctest::Approx(1.0));
    CHECK(tr.w_causal(e, 0) >= 0.0);
    CHECK(tr.w_causal(e, 0) <= 1.0);
  }
}

TEST_CASE("explain by threshold and top-k") {
  Graph g = test::make_graph(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
  g.motif_mask = {true, true, false, false};
  const std::vector<double> p = {0.9, 0.4, 0.7, 0.4};

  Explanation t = explain_from_probs(g, p, 0.5, std::nullopt);
  CHECK(t.selected == std::vector<std::size_t>{0, 2});
  CHECK(t.warnings.empty());
  CHECK(count_red(t.dot) == 2);

  // Ties go to the lower edge index.
  Explanation k = explain_from_probs(g, p, std::nullopt, 3);
  CHECK(k.selected == std::vector<std::size_t>{0, 1, 2});

  Explanation big = explain_from_probs(g, p, std::nullopt, 9);
  CHECK(big.selected.size() == 4);
  REQUIRE(big.warnings.size() == 1);
  CHECK(big.warnings[0].find("clamped") != std::string::npos);

  CHECK_THROWS_AS(explain_from_probs(g, p, 0.5, 2), ContractError);
  CHECK_THROWS_AS(explain_from_probs(g, p, std::nullopt, std::nullopt), ContractError);
  CHECK_THROWS_AS(explain_from_probs(g, {0.5}, 0.5, std::nullopt), ContractError);
}

TEST_CASE("dot output marks motif nodes and selected edges") {
  Graph g = test::make_graph(3, {{0, 1}, {1, 2}});
  g.motif_mask = {true, false};
  const std::string dot = to_dot(g, {0.25, 0.75}, {1});
  CHECK(dot.rfind("graph G {", 0) == 0);
  CHECK(dot.find("0 [style=filled, fillcolor=green]") != std::string::npos);
  CHECK(dot.find("1 [style=filled, fillcolor=green]") != std::string::npos);
  CHECK(dot.find("2 [style") == std::string::npos);
  CHECK(dot.find("0 -- 1 [label=\"0.2500\"];") != std::string::npos);
  CHECK(dot.find("1 -- 2 [label=\"0.7500\", color=red") != std::string::npos);
}

TEST_CASE("info regularizer is the Bernoulli KL") {
  Rng rng(9);
  Tensor l = test::random_tensor(20, 1, rng, -4, 4);
  const double r = 0.3;
  double want = 0.0;
  for (double v : l.data()) {
    const double p = 1.0 / (1.0 + std::exp(-v));
    want += p * std::log(p / r) + (1 - p) * std::log((1 - p) / (1 - r));
  }
  want /= 20;
  CHECK(info_regularizer(l, r).item() == doctest::Approx(want).epsilon(1e-12));
  // Zero exactly at p == r.
  Tensor at = Tensor::full(3, 1, std::log(r / (1 - r)));
  CHECK(std::abs(info_regularizer(at, r).item()) < 1e-15);
  CHECK(test::grad_check([&] { return info_regularizer(l, r); }, {l}).max_rel_err < 1e-7);
  CHECK_THROWS_AS(info_regularizer(l, 0.0), ContractError);
}
