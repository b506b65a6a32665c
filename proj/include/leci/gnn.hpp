// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "leci/graph.hpp"
#include "leci/rng.hpp"
#include "leci/tensor.hpp"

namespace leci {

struct ForwardCtx {
  bool train = false;
  Rng* rng = nullptr;  // required when train is set (dropout)
};

// Ordered collection of named trainable tensors, plus non-trainable buffers
// (batch-norm running statistics) that are checkpointed alongside them.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor t);
  Tensor add_buffer(const std::string& name, Tensor t);
  const std::vector<std::pair<std::string, Tensor>>& items() const {
    return params_;
  }
  const std::vector<std::pair<std::string, Tensor>>& buffers() const {
    return buffers_;
  }
  Tensor find(const std::string& name) const;
  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;
  void zero_grad();

  // Header line (JSON) followed by the raw little-endian f64 payload of every
  // array in order (parameters, then buffers). `meta` is an arbitrary JSON object string stored in the
  // header.
  void save(const std::filesystem::path& path, const std::string& meta) const;
  // Overwrites values of matching parameters; names and shapes must match.
  // Returns the stored meta JSON text.
  std::string load(const std::filesystem::path& path);
  static std::string read_meta(const std::filesystem::path& path);

  void copy_values_from(const ParamStore& other);

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::pair<std::string, Tensor>> buffers_;
};

// Glorot-uniform weights, zero bias.
struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
  Tensor forward(const Tensor& x) const;
  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
};

enum class Init { kGlorot, kZero };

Linear make_linear(ParamStore& store, const std::string& name, std::size_t in,
                   std::size_t out, Rng& rng, Init init = Init::kGlorot);

// Linear layers with ReLU (and dropout) between them, none after the last.
struct Mlp {
  std::vector<Linear> layers;
  double dropout = 0.0;
  Tensor forward(const Tensor& x, ForwardCtx& ctx) const;
};

Mlp make_mlp(ParamStore& store, const std::string& name,
             const std::vector<std::size_t>& dims, double dropout, Rng& rng,
             Init last_init = Init::kGlorot);

// Per-feature normalization with learned scale and shift; running statistics
// live in the store's buffers.
struct BatchNorm {
  Tensor gamma, beta;
  mutable Tensor running_mean, running_var;
  Tensor forward(const Tensor& x, const ForwardCtx& ctx) const;
};

BatchNorm make_batch_norm(ParamStore& store, const std::string& name, std::size_t dim);

struct GinConfig {
  std::size_t input_dim = 1;
  std::size_t num_layers = 3;
  std::size_t hidden_dim = 32;
  double dropout = 0.5;
  bool use_virtual_node = false;
};

void validate(const GinConfig& cfg);

// Sum-aggregation GIN with scalar edge weights and epsilon fixed at 0:
//   h_v <- MLP((1 + eps) h_v + sum_{u ~ v} w_uv h_u)
// Each layer MLP is Linear-BN-ReLU-Linear, followed by BN; layers are
// separated by ReLU, and dropout follows every layer. With a virtual node,
// each graph gets one extra node joined with weight 1 to all of its nodes; it
// shares the layer MLPs and normalizers with the real nodes.
class GinEncoder {
 public:
  GinEncoder() = default;
  GinEncoder(ParamStore& store, const std::string& name, const GinConfig& cfg,
             Rng& rng);

  // x: num_nodes x input_dim, edge_weight: num_edges x 1 with values in [0,1].
  Tensor encode(const Batch& batch, const Tensor& x, const Tensor& edge_weight,
                ForwardCtx& ctx) const;

  const GinConfig& config() const { return cfg_; }

 private:
  struct Layer {
    Linear lin1, lin2;
    BatchNorm bn_inner, bn_outer;
  };
  GinConfig cfg_;
  std::vector<Layer> layers_;
};

// Mean of each graph's node embeddings (virtual nodes never enter here).
Tensor graph_readout(const Tensor& node_emb, const Batch& batch);

// Linear classifier over graph embeddings.
Tensor classify(const Linear& head, const Tensor& graph_emb);

// GIN encoder + mean readout + linear head.
struct GraphClassifier {
  GinEncoder encoder;
  Linear head;
  Tensor logits(const Batch& batch, const Tensor& x, const Tensor& edge_weight,
                ForwardCtx& ctx) const;
};

GraphClassifier make_graph_classifier(ParamStore& store, const std::string& name,
                                      const GinConfig& cfg,
                                      std::size_t num_classes, Rng& rng);

Tensor batch_features(const Batch& batch);
Tensor batch_edge_weights(const Batch& batch);

}  // namespace leci
