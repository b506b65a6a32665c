// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.

#include "leci/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "json.hpp"

#include "leci/error.hpp"

namespace leci {

std::vector<std::int64_t> argmax_rows(const Tensor& logits) {
  std::vector<std::int64_t> out(logits.rows());
  const std::size_t c = logits.cols();
  const auto d = logits.data();
  for (std::size_t r = 0; r < out.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k)
      if (d[r * c + k] > d[r * c + best]) best = k;
    out[r] = static_cast<std::int64_t>(best);
  }
  return out;
}

void for_each_batch(const std::vector<Graph>& graphs, std::size_t batch_size,
                    const std::function<void(const Batch&, std::size_t)>& fn) {
  require(batch_size > 0, "for_each_batch: batch_size must be positive");
  for (std::size_t i = 0; i < graphs.size(); i += batch_size) {
    std::vector<const Graph*> part;
    for (std::size_t k = i; k < std::min(graphs.size(), i + batch_size); ++k)
      part.push_back(&graphs[k]);
    fn(make_batch(part), i);
  }
}

double accuracy(const GraphModel& model, const std::vector<Graph>& graphs,
                std::size_t batch_size) {
  require(!graphs.empty(), "accuracy: empty graph list");
  std::size_t hits = 0;
  for_each_batch(graphs, batch_size, [&](const Batch& b, std::size_t) {
    const auto pred = argmax_rows(model.predict_logits(b));
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == b.y[i];
  });
  return static_cast<double>(hits) / static_cast<double>(graphs.size());
}

// ---- edge selection -------------------------------------------------------

SelectionScore edge_selection_score(const std::vector<Graph>& graphs,
                                    const std::vector<std::vector<double>>& probs) {
  require(probs.size() == graphs.size(), "edge_selection_score: size mismatch");
  SelectionScore s;
  for (std::size_t g = 0; g < graphs.size(); ++g) {
    const Graph& gr = graphs[g];
    if (gr.motif_mask.size() != gr.edges.size())
      throw ConfigError("edge_selection_score: graph " + std::to_string(g) +
                        " has no motif_mask");
    require(probs[g].size() == gr.edges.size(),
            "edge_selection_score: probability count != edge count");
    const auto k = static_cast<std::size_t>(
        std::count(gr.motif_mask.begin(), gr.motif_mask.end(), true));
    std::vector<std::size_t> order(gr.edges.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return probs[g][a] > probs[g][b];
    });
    for (std::size_t i = 0; i < k; ++i) s.true_positive += gr.motif_mask[order[i]];
    s.selected += k;
    s.relevant += k;
  }
  if (s.selected > 0)
    s.precision = static_cast<double>(s.true_positive) / static_cast<double>(s.selected);
  if (s.relevant > 0)
    s.recall = static_cast<double>(s.true_positive) / static_cast<double>(s.relevant);
  if (s.precision + s.recall > 0.0)
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

SelectionScore edge_selection_score(const GraphModel& model,
                                    const std::vector<Graph>& graphs) {
  std::vector<std::vector<double>> probs;
  for_each_batch(graphs, 256, [&](const Batch& b, std::size_t) {
    const auto p = model.edge_probabilities(b);
    if (p.size() != b.num_edges())
      throw ConfigError("edge_selection_score: model '" + model.method() +
                        "' has no edge selector");
    for (std::size_t g = 0; g < b.num_graphs; ++g)
      probs.emplace_back(p.begin() + static_cast<std::ptrdiff_t>(b.edge_offset[g]),
                         p.begin() + static_cast<std::ptrdiff_t>(b.edge_offset[g + 1]));
  });
  return edge_selection_score(graphs, probs);
}

// ---- probes ---------------------------------------------------------------

namespace {

// Materializes a view as plain graphs, so the probe can reshuffle freely.
std::vector<Graph> apply_view(const ProbeView& view, const std::vector<Graph>& graphs) {
  std::vector<Graph> out;
  out.reserve(graphs.size());
  NoGradGuard ng;
  for_each_batch(graphs, 256, [&](const Batch& b, std::size_t first) {
    auto [x, w] = view(b);
    require(x.rows() == b.num_nodes && w.rows() == b.num_edges(),
            "probe view: shape mismatch");
    const std::size_t d = x.cols();
    for (std::size_t g = 0; g < b.num_graphs; ++g) {
      Graph gr = graphs[first + g];
      const std::size_t n0 = b.node_offset[g], n1 = b.node_offset[g + 1];
      const std::size_t e0 = b.edge_offset[g], e1 = b.edge_offset[g + 1];
      gr.feature_dim = d;
      gr.x.assign(x.data().begin() + static_cast<std::ptrdiff_t>(n0 * d),
                  x.data().begin() + static_cast<std::ptrdiff_t>(n1 * d));
      gr.edge_weight.assign(w.data().begin() + static_cast<std::ptrdiff_t>(e0),
                            w.data().begin() + static_cast<std::ptrdiff_t>(e1));
      for (double& v : gr.edge_weight) v = std::clamp(v, 0.0, 1.0);
      out.push_back(std::move(gr));
    }
  });
  return out;
}

std::int64_t target_of(const Graph& g, ProbeTarget t) {
  return t == ProbeTarget::kEnv ? g.env : g.y;
}

}  // namespace

ProbeResult independence_probe(const ProbeView& view, ProbeTarget target,
                               const std::vector<Graph>& train_graphs,
                               const std::vector<Graph>& heldout_graphs,
                               const ProbeConfig& cfg) {
  require(!train_graphs.empty() && !heldout_graphs.empty(),
          "independence_probe: empty graph list");
  ProbeResult res;
  res.num_classes = target == ProbeTarget::kEnv ? count_envs(train_graphs)
                                                : count_classes(train_graphs);
  res.chance = 1.0 / static_cast<double>(res.num_classes);
  res.test_size = heldout_graphs.size();

  std::vector<Graph> tr = apply_view(view, train_graphs);
  const std::vector<Graph> te = apply_view(view, heldout_graphs);
  for (Graph& g : tr) g.y = target_of(g, target);

  GinConfig gin;
  gin.input_dim = tr.front().feature_dim;
  gin.num_layers = cfg.num_layers;
  gin.hidden_dim = cfg.hidden_dim;
  gin.dropout = 0.0;
  ParamStore store;
  const Rng root(cfg.seed);
  Rng init = root.fork(0);
  GraphClassifier clf = make_graph_classifier(store, "probe", gin, res.num_classes, init);
  Adam opt(store, {cfg.lr, 0.9, 0.999, 1e-8, 0.0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle = root.fork(1 + epoch);
    std::vector<std::size_t> order(tr.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle.below(i)]);
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      std::vector<const Graph*> part;
      for (std::size_t k = i; k < std::min(order.size(), i + cfg.batch_size); ++k)
        part.push_back(&tr[order[k]]);
      Batch b = make_batch(part);
      ForwardCtx ctx{true, &shuffle};
      Tensor loss = nll_loss(
          log_softmax(clf.logits(b, batch_features(b), batch_edge_weights(b), ctx)), b.y);
      backward(loss);
      opt.step();
      store.zero_grad();
    }
    std::size_t hits = 0;
    {
      NoGradGuard ng;
      for_each_batch(te, 256, [&](const Batch& b, std::size_t first) {
        ForwardCtx ctx;
        const auto pred =
            argmax_rows(clf.logits(b, batch_features(b), batch_edge_weights(b), ctx));
        for (std::size_t i = 0; i < pred.size(); ++i)
          hits += pred[i] == target_of(te[first + i], target);
      });
    }
    res.best_accuracy = std::max(
        res.best_accuracy, static_cast<double>(hits) / static_cast<double>(te.size()));
  }
  return res;
}

ProbeView causal_view(const LeciModel& model) {
  return [&model](const Batch& b) {
    ForwardCtx ctx;
    Tensor x = model.purify(b, ctx);
    Selection s = select(model.selector(), b, x, ctx);
    return std::pair{x, s.w_causal};
  };
}

ProbeView spurious_view(const LeciModel& model) {
  return [&model](const Batch& b) {
    ForwardCtx ctx;
    Tensor x = model.purify(b, ctx);
    Selection s = select(model.selector(), b, x, ctx);
    return std::pair{x, s.w_spurious};
  };
}

ProbeView raw_view() {
  return [](const Batch& b) {
    return std::pair{batch_features(b), Tensor::full(b.num_edges(), 1, 1.0)};
  };
}

ProbeView constant_weight_view(double w) {
  return [w](const Batch& b) {
    return std::pair{batch_features(b), Tensor::full(b.num_edges(), 1, w)};
  };
}

// ---- mutual information ---------------------------------------------------

double plugin_mi(const std::vector<std::vector<double>>& joint) {
  double total = 0.0;
  std::size_t cols = 0;
  for (const auto& row : joint) {
    cols = std::max(cols, row.size());
    for (double v : row) {
      require(v >= 0.0, "plugin_mi: negative count");
      total += v;
    }
  }
  require(total > 0.0, "plugin_mi: all-zero table");
  std::vector<double> pa(joint.size(), 0.0), pb(cols, 0.0);
  for (std::size_t a = 0; a < joint.size(); ++a)
    for (std::size_t b = 0; b < joint[a].size(); ++b) {
      pa[a] += joint[a][b] / total;
      pb[b] += joint[a][b] / total;
    }
  double mi = 0.0;
  for (std::size_t a = 0; a < joint.size(); ++a)
    for (std::size_t b = 0; b < joint[a].size(); ++b) {
      const double p = joint[a][b] / total;
      if (p > 0.0) mi += p * std::log(p / (pa[a] * pb[b]));
    }
  return std::max(mi, 0.0);
}

// ---- oracle ---------------------------------------------------------------

namespace {

constexpr double kZeroMi = 1e-12;

// 2 x 2 table over (variable, Z_S) under the universe distribution.
template <class Var>
double subset_mi(const MicroUniverse& u, const std::vector<std::string>& subset,
                 std::size_t cardinality, Var var) {
  std::vector<std::vector<double>> joint(cardinality, std::vector<double>(2, 0.0));
  for (const auto& o : u.outcomes) {
    bool all = true;
    for (const auto& label : subset)
      all = all && std::find(o.edge_labels.begin(), o.edge_labels.end(), label) !=
                       o.edge_labels.end();
    joint[static_cast<std::size_t>(var(o))][all ? 1 : 0] += o.prob;
  }
  return plugin_mi(joint);
}

std::vector<std::string> labels_of(const MicroOutcome& o, std::uint32_t mask) {
  std::vector<std::string> out;
  for (std::size_t e = 0; e < o.edge_labels.size(); ++e)
    if (mask >> e & 1u) out.push_back(o.edge_labels[e]);
  return out;
}

}  // namespace

double subset_mi_env(const MicroUniverse& u, const std::vector<std::string>& subset) {
  return subset_mi(u, subset, u.num_envs, [](const MicroOutcome& o) { return o.env; });
}

double subset_mi_label(const MicroUniverse& u, const std::vector<std::string>& subset) {
  return subset_mi(u, subset, u.num_labels,
                   [](const MicroOutcome& o) { return o.label; });
}

OracleReport oracle_check_lemma1(const MicroUniverse& u) {
  OracleReport r;
  r.outcomes = u.outcomes.size();
  for (const auto& o : u.outcomes)
    if (o.edges.size() > 12)
      throw ConfigError("oracle: outcome with " + std::to_string(o.edges.size()) +
                        " edges exceeds the 2^12 subset limit");

  auto record = [&](OracleCounterexample c) {
    ++r.counterexamples_total;
    if (r.counterexamples.size() < 16) r.counterexamples.push_back(std::move(c));
  };

  bool lemma = true, theorem = true;
  for (std::size_t oi = 0; oi < u.outcomes.size(); ++oi) {
    const MicroOutcome& o = u.outcomes[oi];
    const std::size_t m = o.edges.size();
    const std::uint32_t full = (1u << m) - 1u;
    std::uint32_t causal = 0;
    for (std::size_t e = 0; e < m; ++e)
      if (o.causal[e]) causal |= 1u << e;

    double best_label_mi = -1.0;
    double causal_label_mi = 0.0;
    std::vector<std::uint32_t> unique_hits;
    for (std::uint32_t s = 0; s <= full; ++s) {
      ++r.subsets_checked;
      const auto labels = labels_of(o, s);
      const double mi_e = subset_mi_env(u, labels);
      const bool independent = mi_e <= kZeroMi;
      const bool inside = (s & ~causal) == 0;
      if (independent != inside) {
        lemma = false;
        record({oi, labels, mi_e, inside,
                inside ? "subset of G_C depends on E" : "E-independent subset leaves G_C"});
      }
      if (!independent) continue;
      ++r.independent_subsets;
      const double mi_y = subset_mi_label(u, labels);
      best_label_mi = std::max(best_label_mi, mi_y);
      if (s == causal) causal_label_mi = mi_y;
      // Complement carries no label information.
      if (subset_mi_label(u, labels_of(o, full & ~s)) <= kZeroMi) unique_hits.push_back(s);
    }
    if (causal_label_mi + kZeroMi < best_label_mi) {
      theorem = false;
      record({oi, labels_of(o, causal), 0.0, true,
              "G_C does not attain the largest I(Y; G_p)"});
    }
    if (unique_hits.size() != 1 || unique_hits.front() != causal) {
      theorem = false;
      for (auto s : unique_hits)
        if (s != causal)
          record({oi, labels_of(o, s), 0.0, (s & ~causal) == 0,
                  "another subset satisfies both independence conditions"});
      if (std::find(unique_hits.begin(), unique_hits.end(), causal) == unique_hits.end())
        record({oi, labels_of(o, causal), 0.0, true,
                "G_C fails the independence conditions"});
    }
    r.mi_env_causal += subset_mi_env(u, labels_of(o, causal));
    r.mi_env_spurious += subset_mi_env(u, labels_of(o, full & ~causal));
  }
  if (!u.outcomes.empty()) {
    r.mi_env_causal /= static_cast<double>(u.outcomes.size());
    r.mi_env_spurious /= static_cast<double>(u.outcomes.size());
  }
  r.lemma1_holds = lemma;
  r.theorem1_holds = theorem;
  return r;
}

std::string OracleReport::to_json() const {
  nlohmann::ordered_json j;
  j["pass"] = pass();
  j["outcomes"] = outcomes;
  j["subsets_checked"] = subsets_checked;
  j["independent_subsets"] = independent_subsets;
  j["lemma1_holds"] = lemma1_holds;
  j["theorem1_holds"] = theorem1_holds;
  j["mi_env_causal"] = mi_env_causal;
  j["mi_env_spurious"] = mi_env_spurious;
  j["counterexamples_total"] = counterexamples_total;
  auto& list = j["counterexamples"] = nlohmann::ordered_json::array();
  for (const auto& c : counterexamples) {
    nlohmann::ordered_json e;
    e["outcome"] = c.outcome;
    e["subset"] = c.subset;
    e["mi_env"] = c.mi_env;
    e["subset_of_causal"] = c.subset_of_causal;
    e["reason"] = c.reason;
    list.push_back(e);
  }
  return j.dump(2);
}

// ---- report ---------------------------------------------------------------

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["train_acc"] = train_acc;
  j["id_val_acc"] = id_val_acc;
  j["ood_val_acc"] = ood_val_acc;
  j["ood_test_acc"] = ood_test_acc;
  if (env_probe_acc) {
    j["env_probe_acc"] = *env_probe_acc;
    j["env_chance"] = env_chance;
  }
  if (label_probe_acc) {
    j["label_probe_acc"] = *label_probe_acc;
    j["label_chance"] = label_chance;
  }
  if (edge_selection) {
    j["edge_precision"] = edge_selection->precision;
    j["edge_recall"] = edge_selection->recall;
    j["edge_f1"] = edge_selection->f1;
  }
  return j.dump(2);
}

MetricsReport evaluate(const GraphModel& model, const DatasetSplit& split,
                       const EvalOptions& opts) {
  MetricsReport r;
  auto acc = [&](const std::vector<Graph>& g) {
    return g.empty() ? 0.0 : accuracy(model, g);
  };
  r.train_acc = acc(split.train);
  r.id_val_acc = acc(split.id_val);
  r.ood_val_acc = acc(split.ood_val);
  r.ood_test_acc = acc(split.ood_test);
  if (!split.train.empty()) {
    r.env_chance = 1.0 / static_cast<double>(count_envs(split.train));
    r.label_chance = 1.0 / static_cast<double>(count_classes(split.train));
  }
  const auto* leci = dynamic_cast<const LeciModel*>(&model);
  if (!leci) return r;
  const bool masks = !split.ood_test.empty() &&
                     std::all_of(split.ood_test.begin(), split.ood_test.end(),
                                 [](const Graph& g) {
                                   return g.motif_mask.size() == g.edges.size();
                                 });
  if (masks) r.edge_selection = edge_selection_score(model, split.ood_test);
  if (opts.run_probes && !split.train.empty() && !split.id_val.empty()) {
    r.env_probe_acc = independence_probe(causal_view(*leci), ProbeTarget::kEnv,
                                         split.train, split.id_val, opts.probe)
                          .best_accuracy;
    r.label_probe_acc = independence_probe(spurious_view(*leci), ProbeTarget::kLabel,
                                           split.train, split.id_val, opts.probe)
                            .best_accuracy;
  }
  return r;
}

}  // namespace leci
