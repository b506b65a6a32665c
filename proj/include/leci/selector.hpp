// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "leci/gnn.hpp"

namespace leci {

struct SelectorConfig {
  GinConfig gin;
  double tau = 1.0;
  bool hard = false;
};

// Edge selector: GIN node embeddings -> per-edge MLP on concatenated endpoint
// embeddings -> logit, symmetrized over both orientations of each edge.
class Selector {
 public:
  Selector() = default;
  Selector(ParamStore& store, const std::string& name, const SelectorConfig& cfg,
           Rng& rng);

  // Ex1 logits: (mlp(h_u || h_v) + mlp(h_v || h_u)) / 2.
  Tensor edge_logits(const Batch& batch, const Tensor& x, ForwardCtx& ctx) const;
  Tensor edge_logits(const Batch& batch, ForwardCtx& ctx) const;

  const SelectorConfig& config() const { return cfg_; }
  const Mlp& edge_mlp() const { return edge_mlp_; }

 private:
  SelectorConfig cfg_;
  GinEncoder embed_;
  Mlp edge_mlp_;
};

// Per-edge probability sigmoid(logit) in (0,1).
std::vector<double> edge_probs(const Selector& sel, const Batch& batch);

struct Selection {
  Tensor logits;
  Tensor w_causal;    // w_C
  Tensor w_spurious;  // w_S = 1 - w_C
};

// Train mode draws Gumbel-sigmoid weights; eval mode uses sigmoid(logits).
Selection select_from_logits(const Tensor& logits, double tau, bool hard,
                             bool train, Rng* rng);
Selection select(const Selector& sel, const Batch& batch, const Tensor& x,
                 ForwardCtx& ctx);

struct Explanation {
  std::vector<std::size_t> selected;  // edge indices, ascending
  std::vector<double> probs;          // one per edge
  std::vector<std::string> warnings;
  std::string dot;
};

// Exactly one of threshold / top_k must be set. threshold selects edges with
// probability > threshold; top_k takes the k most probable edges, ties broken
// by lower edge index (k above the edge count is clamped with a warning).
Explanation explain_from_probs(const Graph& graph, std::vector<double> probs,
                               std::optional<double> threshold,
                               std::optional<std::size_t> top_k);

// Selected edges are drawn red; motif nodes green.
std::string to_dot(const Graph& graph, const std::vector<double>& probs,
                   const std::vector<std::size_t>& selected);

// Mean KL(Bernoulli(sigmoid(logit)) || Bernoulli(r)) over edges.
Tensor info_regularizer(const Tensor& logits, double r);

}  // namespace leci
