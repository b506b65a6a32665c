// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.

#include "leci/selector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "leci/error.hpp"

namespace leci {

Selector::Selector(ParamStore& store, const std::string& name,
                   const SelectorConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  require(cfg.tau > 0.0, "Selector: tau must be positive");
  Rng gin_rng = rng.fork(0);
  Rng mlp_rng = rng.fork(1);
  embed_ = GinEncoder(store, name + ".gin", cfg.gin, gin_rng);
  const std::size_t h = cfg.gin.hidden_dim;
  edge_mlp_ = make_mlp(store, name + ".edge_mlp", {2 * h, h, 1}, cfg.gin.dropout,
                       mlp_rng);
}

Tensor Selector::edge_logits(const Batch& batch, const Tensor& x,
                             ForwardCtx& ctx) const {
  Tensor ones = Tensor::full(batch.num_edges(), 1, 1.0);
  Tensor h = embed_.encode(batch, x, ones, ctx);
  Tensor hu = gather_rows(h, batch.edge_u);
  Tensor hv = gather_rows(h, batch.edge_v);
  Tensor fwd = edge_mlp_.forward(concat_last_dim(hu, hv), ctx);
  Tensor rev = edge_mlp_.forward(concat_last_dim(hv, hu), ctx);
  return scale(add(fwd, rev), 0.5);
}

Tensor Selector::edge_logits(const Batch& batch, ForwardCtx& ctx) const {
  return edge_logits(batch, batch_features(batch), ctx);
}

std::vector<double> edge_probs(const Selector& sel, const Batch& batch) {
  NoGradGuard ng;
  ForwardCtx ctx;
  Tensor p = sigmoid(sel.edge_logits(batch, ctx));
  return {p.data().begin(), p.data().end()};
}

Selection select_from_logits(const Tensor& logits, double tau, bool hard,
                             bool train, Rng* rng) {
  Selection s;
  s.logits = logits;
  if (train) {
    require(rng != nullptr, "select: training mode needs an rng");
    s.w_causal = gumbel_sigmoid(logits, tau, hard, *rng);
  } else {
    s.w_causal = sigmoid(logits);
  }
  s.w_spurious = one_minus(s.w_causal);
  return s;
}

Selection select(const Selector& sel, const Batch& batch, const Tensor& x,
                 ForwardCtx& ctx) {
  Tensor logits = sel.edge_logits(batch, x, ctx);
  return select_from_logits(logits, sel.config().tau, sel.config().hard,
                            ctx.train, ctx.rng);
}

Explanation explain_from_probs(const Graph& graph, std::vector<double> probs,
                               std::optional<double> threshold,
                               std::optional<std::size_t> top_k) {
  require(threshold.has_value() != top_k.has_value(),
          "explain: give exactly one of threshold or top_k");
  require(probs.size() == graph.edges.size(),
          "explain: probability count != edge count");
  Explanation ex;
  if (threshold) {
    for (std::size_t e = 0; e < probs.size(); ++e)
      if (probs[e] > *threshold) ex.selected.push_back(e);
  } else {
    std::size_t k = *top_k;
    if (k > probs.size()) {
      ex.warnings.push_back("top_k " + std::to_string(k) + " clamped to " +
                            std::to_string(probs.size()));
      k = probs.size();
    }
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return probs[a] > probs[b];
    });
    ex.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(ex.selected.begin(), ex.selected.end());
  }
  ex.dot = to_dot(graph, probs, ex.selected);
  ex.probs = std::move(probs);
  return ex;
}

std::string to_dot(const Graph& graph, const std::vector<double>& probs,
                   const std::vector<std::size_t>& selected) {
  std::vector<bool> sel(graph.edges.size(), false);
  for (auto e : selected) sel[e] = true;
  std::vector<bool> motif_node(graph.num_nodes, false);
  for (std::size_t e = 0; e < graph.edges.size(); ++e)
    if (e < graph.motif_mask.size() && graph.motif_mask[e]) {
      motif_node[graph.edges[e].u] = true;
      motif_node[graph.edges[e].v] = true;
    }
  std::string out = "graph G {\n  node [shape=circle];\n";
  for (std::size_t v = 0; v < graph.num_nodes; ++v) {
    out += "  " + std::to_string(v);
    if (motif_node[v]) out += " [style=filled, fillcolor=green]";
    out += ";\n";
  }
  char buf[32];
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%.4f", probs[e]);
    out += "  " + std::to_string(graph.edges[e].u) + " -- " +
           std::to_string(graph.edges[e].v) + " [label=\"" + buf + "\"";
    if (sel[e]) out += ", color=red, penwidth=2";
    out += "];\n";
  }
  out += "}\n";
  return out;
}

Tensor info_regularizer(const Tensor& logits, double r) {
  require(r > 0.0 && r < 1.0, "info_regularizer: r must be in (0,1)");
  // KL = p log(p/r) + (1-p) log((1-p)/(1-r)), with log p = log_sigmoid(l)
  // and log(1-p) = log_sigmoid(-l).
  Tensor p = sigmoid(logits);
  Tensor q = one_minus(p);
  Tensor logp = log_sigmoid(logits);
  Tensor logq = log_sigmoid(scale(logits, -1.0));
  Tensor kl = add(mul(p, add_scalar(logp, -std::log(r))),
                  mul(q, add_scalar(logq, -std::log1p(-r))));
  return mean(kl);
}

}  // namespace leci
