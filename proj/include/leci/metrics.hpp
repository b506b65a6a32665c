// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "leci/graph.hpp"
#include "leci/motif_gen.hpp"
#include "leci/train.hpp"

namespace leci {

// Index of the largest entry of each row; ties go to the lowest index.
std::vector<std::int64_t> argmax_rows(const Tensor& logits);

// Fraction of graphs whose argmax logit matches y, in eval mode.
double accuracy(const GraphModel& model, const std::vector<Graph>& graphs,
                std::size_t batch_size = 256);

// Calls fn(batch, first_graph_index) on consecutive slices of graphs.
void for_each_batch(const std::vector<Graph>& graphs, std::size_t batch_size,
                    const std::function<void(const Batch&, std::size_t)>& fn);

struct SelectionScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t true_positive = 0;
  std::size_t selected = 0;
  std::size_t relevant = 0;
};

// Per graph, takes the k most probable edges with k = number of motif edges
// (ties to the lower edge index) and micro-averages against motif_mask.
SelectionScore edge_selection_score(const std::vector<Graph>& graphs,
                                    const std::vector<std::vector<double>>& probs);
// Throws ConfigError when the model has no selector.
SelectionScore edge_selection_score(const GraphModel& model,
                                    const std::vector<Graph>& graphs);

// Maps a batch to the (features, edge weights) a probe sees; called without
// gradient tracking.
using ProbeView = std::function<std::pair<Tensor, Tensor>(const Batch&)>;
enum class ProbeTarget { kEnv, kLabel };

struct ProbeConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::size_t hidden_dim = 32;
  std::size_t num_layers = 3;
  double lr = 3e-3;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  double best_accuracy = 0.0;  // best held-out accuracy over epochs
  double chance = 0.0;         // 1 / number of classes
  std::size_t num_classes = 0;
  std::size_t test_size = 0;
};

// Trains a fresh GIN classifier on the view of `train_graphs` and reports its
// best accuracy on the view of `heldout_graphs`.
ProbeResult independence_probe(const ProbeView& view, ProbeTarget target,
                               const std::vector<Graph>& train_graphs,
                               const std::vector<Graph>& heldout_graphs,
                               const ProbeConfig& cfg);

// Views of a frozen LECI model: (X', w_C) and (X', w_S) in eval mode, and the
// raw graph with unit weights.
ProbeView causal_view(const LeciModel& model);
ProbeView spurious_view(const LeciModel& model);
ProbeView raw_view();
ProbeView constant_weight_view(double w);

// Plug-in mutual information in nats of a nonnegative count table.
double plugin_mi(const std::vector<std::vector<double>>& joint);

// ---- micro-universe oracle ------------------------------------------------

struct OracleCounterexample {
  std::size_t outcome = 0;
  std::vector<std::string> subset;  // edge labels
  double mi_env = 0.0;
  bool subset_of_causal = false;
  std::string reason;
};

struct OracleReport {
  std::size_t outcomes = 0;
  std::size_t subsets_checked = 0;
  std::size_t independent_subsets = 0;
  std::size_t counterexamples_total = 0;
  std::vector<OracleCounterexample> counterexamples;  // first few
  bool lemma1_holds = false;
  bool theorem1_holds = false;
  double mi_env_causal = 0.0;    // I(E; G_C pattern) averaged over outcomes
  double mi_env_spurious = 0.0;  // I(E; G_S pattern) averaged over outcomes
  bool pass() const { return counterexamples_total == 0; }
  std::string to_json() const;
};

// Random variable of an edge subset S of some outcome: Z_S(G) = 1 iff every
// labeled edge of S occurs in G. Returns I(E; Z_S) or I(Y; Z_S) exactly.
double subset_mi_env(const MicroUniverse& u, const std::vector<std::string>& subset);
double subset_mi_label(const MicroUniverse& u, const std::vector<std::string>& subset);

// Exhaustively checks, for every edge subset G_p of every outcome:
//   I(E; G_p) = 0  <=>  G_p is contained in G_C,
// and that G_C is the only subset with I(E; G_p) = 0 and
// I(Y; G - G_p) = 0, while attaining the largest I(Y; G_p) among the
// environment-independent subsets. Throws ConfigError when an outcome has
// more than 12 edges.
OracleReport oracle_check_lemma1(const MicroUniverse& u);

// ---- report ---------------------------------------------------------------

struct MetricsReport {
  double train_acc = 0.0, id_val_acc = 0.0, ood_val_acc = 0.0, ood_test_acc = 0.0;
  std::optional<double> env_probe_acc;
  double env_chance = 0.0;
  std::optional<double> label_probe_acc;
  double label_chance = 0.0;
  std::optional<SelectionScore> edge_selection;
  std::string to_json() const;
};

struct EvalOptions {
  bool run_probes = false;
  ProbeConfig probe;
};

MetricsReport evaluate(const GraphModel& model, const DatasetSplit& split,
                       const EvalOptions& opts = {});

}  // namespace leci
