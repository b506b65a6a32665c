// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "leci/gnn.hpp"
#include "leci/graph.hpp"
#include "leci/selector.hpp"

namespace leci {

// ---- models ---------------------------------------------------------------

struct ModelConfig {
  std::size_t feature_dim = 1;
  std::size_t num_classes = 3;
  std::size_t num_envs = 3;
  std::size_t hidden_dim = 32;
  std::size_t num_layers = 3;
  double dropout = 0.5;
  bool use_virtual_node = false;
  double tau = 1.0;
  bool hard = false;
  bool use_pfsc = true;
  bool use_env_adv = true;
  bool use_label_adv = true;
};

std::string model_config_json(const ModelConfig& cfg, const std::string& method);
ModelConfig model_config_from_json(const std::string& json, std::string* method);

// Eval-mode interface shared by LECI and ERM models.
class GraphModel {
 public:
  virtual ~GraphModel() = default;
  virtual std::string method() const = 0;
  virtual const ModelConfig& config() const = 0;
  virtual ParamStore& params() = 0;
  virtual const ParamStore& params() const = 0;
  // Class logits in eval mode (no dropout, no sampling noise).
  virtual Tensor predict_logits(const Batch& batch) const = 0;
  // Per-edge selection probabilities; empty for models without a selector.
  virtual std::vector<double> edge_probabilities(const Batch& batch) const {
    (void)batch;
    return {};
  }

  void save(const std::filesystem::path& path) const;
};

// Parameter groups: pfsc_t (phi_T), pfsc_fe (phi_FE), selector (theta),
// inv (phi_inv), env (phi_E), label (phi_L). Each group is initialized from
// its own forked stream, so groups never influence each other's init.
class LeciModel : public GraphModel {
 public:
  LeciModel(const ModelConfig& cfg, std::uint64_t seed);

  std::string method() const override { return "leci"; }
  const ModelConfig& config() const override { return cfg_; }
  ParamStore& params() override { return params_; }
  const ParamStore& params() const override { return params_; }
  Tensor predict_logits(const Batch& batch) const override;
  std::vector<double> edge_probabilities(const Batch& batch) const override;

  // X' = X + MLP_T(X) when PFSC is on, X otherwise.
  Tensor purify(const Batch& batch, ForwardCtx& ctx) const;

  // Re-draws one group's parameters from `seed`.
  void reinit_group(const std::string& group, std::uint64_t seed);
  static std::string group_of(const std::string& param_name);

  const Selector& selector() const { return selector_; }
  const GraphClassifier& inv() const { return inv_; }
  const GraphClassifier& env() const { return env_; }
  const GraphClassifier& label() const { return label_; }
  const Mlp& pfsc_transform() const { return pfsc_transform_; }
  const Mlp& pfsc_disc() const { return pfsc_disc_; }

 private:
  void build(std::uint64_t seed);

  ModelConfig cfg_;
  ParamStore params_;
  Mlp pfsc_transform_;
  Mlp pfsc_disc_;
  Selector selector_;
  GraphClassifier inv_;
  GraphClassifier env_;
  GraphClassifier label_;
};

// Plain GIN classifier on full graphs.
class ErmModel : public GraphModel {
 public:
  ErmModel(const ModelConfig& cfg, std::uint64_t seed);
  std::string method() const override { return "erm"; }
  const ModelConfig& config() const override { return cfg_; }
  ParamStore& params() override { return params_; }
  const ParamStore& params() const override { return params_; }
  Tensor predict_logits(const Batch& batch) const override;
  Tensor logits(const Batch& batch, ForwardCtx& ctx) const;

 private:
  ModelConfig cfg_;
  ParamStore params_;
  GraphClassifier clf_;
};

std::unique_ptr<GraphModel> load_model(const std::filesystem::path& path);

// ---- losses ---------------------------------------------------------------

// -mean log P_inv(Y | G_C): g_inv on the batch with edge weights w_C.
Tensor loss_inv(const LeciModel& m, const Batch& batch, const Tensor& x,
                const Tensor& w_c, ForwardCtx& ctx);
// -mean log P_E(E | G_C) with w_C routed through grad_reverse(., lambda_e):
// minimizing it trains phi_E and pushes theta the other way. The features
// pass through the same reversal, so phi_T is adversarial here too and
// receives nothing at lambda = 0.
Tensor loss_ea(const LeciModel& m, const Batch& batch, const Tensor& x,
               const Tensor& w_c, double lambda_e, ForwardCtx& ctx);
// -mean log P_L(Y | G_S) with w_S (and the features) routed through
// grad_reverse(., lambda_l).
Tensor loss_la(const LeciModel& m, const Batch& batch, const Tensor& x,
               const Tensor& w_s, double lambda_l, ForwardCtx& ctx);

struct PfscResult {
  Tensor loss;         // -mean over graphs of mean-node log P_FE(E | X')
  Tensor x_purified;   // X', consumed by every downstream module
  Tensor graph_logp;   // num_graphs x |E| pooled node log-probabilities
};
PfscResult loss_pfsc(const LeciModel& m, const Batch& batch, double lambda_pfsc,
                     ForwardCtx& ctx);

struct Lambdas {
  double label = 0.0;
  double env = 0.0;
  double pfsc = 0.0;
};

struct LeciStep {
  Tensor x_purified;
  Selection selection;
  Tensor inv_logits, env_logits, label_logits;
  Tensor loss_inv, loss_env, loss_label, loss_pfsc, loss_info;
  Tensor total;
};

// One full forward pass. Each sub-module draws from its own stream forked
// from `rng`, so disabling one module never shifts another's randomness.
LeciStep leci_forward(const LeciModel& m, const Batch& batch, const Lambdas& lam,
                      bool train, const Rng& rng, double info_r = 0.0,
                      double info_weight = 0.0);

// ---- schedule & optimizer -------------------------------------------------

enum class RampShape { kLinear, kDannSigmoid };
RampShape parse_ramp_shape(const std::string& s);
std::string to_string(RampShape s);

struct TrainConfig {
  std::size_t epochs = 150;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double lambda_l_max = 5.0;
  double lambda_e_max = 10.0;
  double lambda_pfsc_max = 1.0;
  std::size_t warmup_epochs = 30;
  RampShape ramp_shape = RampShape::kLinear;
  std::uint64_t seed = 0;
  std::optional<double> info_r;  // KL target; regularizer off when unset
  double info_weight = 1.0;
  bool strict_alternation = false;
  std::size_t max_inner_epochs = 50;
  // Model shape.
  std::size_t hidden_dim = 32;
  std::size_t num_layers = 3;
  double dropout = 0.5;
  bool use_virtual_node = false;
  double tau = 1.0;
  bool hard = false;
  bool use_pfsc = true;
  bool use_env_adv = true;
  bool use_label_adv = true;
  // Evaluate the held-out splits every epoch (needed for model selection).
  bool eval_each_epoch = true;
};

void validate(const TrainConfig& cfg);

// Zero before warmup, then linear or DANN-sigmoid in progress
// p = (epoch - warmup) / (epochs - 1 - warmup), reaching the maxima at the
// final epoch.
Lambdas ramp(std::size_t epoch, const TrainConfig& cfg);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 added to the gradient
};

class Adam {
 public:
  Adam(ParamStore& store, AdamConfig cfg);
  // Updates every parameter, or only those with active[i] set.
  void step();
  void step(const std::vector<bool>& active);

 private:
  ParamStore* store_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::vector<std::size_t> t_;
};

// ---- training -------------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;
  double loss_inv = 0.0;
  double loss_env = 0.0;
  double loss_label = 0.0;
  double loss_pfsc = 0.0;
  double train_acc = 0.0;
  double id_val_acc = 0.0;
  double ood_val_acc = 0.0;
  double ood_test_acc = 0.0;
  // Eval-mode discriminator accuracies on id_val.
  double env_disc_acc_on_gc = 0.0;
  double label_disc_acc_on_gs = 0.0;
  double pfsc_disc_acc = 0.0;
  double lambda_l = 0.0;
  double lambda_e = 0.0;
  double lambda_pfsc = 0.0;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

std::string epoch_log_json(const EpochLog& log);

struct TrainResult {
  std::unique_ptr<GraphModel> model;  // final-epoch parameters
  std::vector<EpochLog> logs;
  std::size_t best_ood_val_epoch = 0;
  std::size_t best_id_val_epoch = 0;
  // Parameter then buffer values at the selected epochs, in ParamStore order.
  std::vector<std::vector<double>> best_ood_val_params;
  std::vector<std::vector<double>> best_id_val_params;
};

void load_param_values(ParamStore& store,
                       const std::vector<std::vector<double>>& values);
std::vector<std::vector<double>> param_values(const ParamStore& store);

using EpochCallback = std::function<void(const EpochLog&)>;

ModelConfig model_config_for(const DatasetSplit& split, const TrainConfig& cfg);

// Joint min-max training: every step minimizes L_inv + L_E + L_L + L_PFSC
// (+ info regularizer) with one Adam over all groups; gradient reversal makes
// the selector and phi_T ascend the adversarial terms. Throws NumericError
// naming the term and epoch on a non-finite loss.
TrainResult train(const DatasetSplit& split, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});
// Same loop starting from an existing model.
TrainResult train(std::unique_ptr<LeciModel> model, const DatasetSplit& split,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

TrainResult train_erm(const DatasetSplit& split, const TrainConfig& cfg,
                      const EpochCallback& on_epoch = {});

}  // namespace leci
