// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.

#include "leci/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"

#include "leci/error.hpp"
#include "leci/metrics.hpp"

namespace leci {

namespace {

// Stream ids for parameter-group initialization.
enum GroupStream : std::uint64_t {
  kStreamPfscT = 1,
  kStreamPfscFe = 2,
  kStreamSelector = 3,
  kStreamInv = 4,
  kStreamEnv = 5,
  kStreamLabel = 6,
};

// Stream ids inside one forward pass.
enum PassStream : std::uint64_t {
  kPassPfsc = 1,
  kPassSelector = 2,
  kPassGumbel = 3,
  kPassInv = 4,
  kPassEnv = 5,
  kPassLabel = 6,
};

GinConfig gin_for(const ModelConfig& cfg) {
  GinConfig g;
  g.input_dim = cfg.feature_dim;
  g.num_layers = cfg.num_layers;
  g.hidden_dim = cfg.hidden_dim;
  g.dropout = cfg.dropout;
  g.use_virtual_node = cfg.use_virtual_node;
  return g;
}

Tensor nll_of_logits(const Tensor& logits, const std::vector<std::int64_t>& target) {
  return nll_loss(log_softmax(logits), target);
}

}  // namespace

std::string model_config_json(const ModelConfig& cfg, const std::string& method) {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["feature_dim"] = cfg.feature_dim;
  j["num_classes"] = cfg.num_classes;
  j["num_envs"] = cfg.num_envs;
  j["hidden_dim"] = cfg.hidden_dim;
  j["num_layers"] = cfg.num_layers;
  j["dropout"] = cfg.dropout;
  j["use_virtual_node"] = cfg.use_virtual_node;
  j["tau"] = cfg.tau;
  j["hard"] = cfg.hard;
  j["use_pfsc"] = cfg.use_pfsc;
  j["use_env_adv"] = cfg.use_env_adv;
  j["use_label_adv"] = cfg.use_label_adv;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text, std::string* method) {
  const auto j = nlohmann::json::parse(text);
  ModelConfig c;
  if (method) *method = j.value("method", "leci");
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.num_envs = j.at("num_envs").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.use_virtual_node = j.at("use_virtual_node").get<bool>();
  c.tau = j.at("tau").get<double>();
  c.hard = j.at("hard").get<bool>();
  c.use_pfsc = j.at("use_pfsc").get<bool>();
  c.use_env_adv = j.at("use_env_adv").get<bool>();
  c.use_label_adv = j.at("use_label_adv").get<bool>();
  return c;
}

void GraphModel::save(const std::filesystem::path& path) const {
  params().save(path, model_config_json(config(), method()));
}

// ---- LeciModel ------------------------------------------------------------

LeciModel::LeciModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  build(seed);
}

void LeciModel::build(std::uint64_t seed) {
  const Rng root(seed);
  const GinConfig gin = gin_for(cfg_);
  validate(gin);
  if (cfg_.use_pfsc) {
    Rng r = root.fork(kStreamPfscT);
    // Last layer starts at zero, so X' = X at initialization.
    pfsc_transform_ = make_mlp(params_, "pfsc_t", {cfg_.feature_dim, cfg_.hidden_dim,
                                                   cfg_.feature_dim},
                               0.0, r, Init::kZero);
    Rng r2 = root.fork(kStreamPfscFe);
    pfsc_disc_ = make_mlp(params_, "pfsc_fe",
                          {cfg_.feature_dim, cfg_.hidden_dim, cfg_.num_envs}, 0.0, r2);
  }
  {
    Rng r = root.fork(kStreamSelector);
    selector_ = Selector(params_, "selector", {gin, cfg_.tau, cfg_.hard}, r);
  }
  {
    Rng r = root.fork(kStreamInv);
    inv_ = make_graph_classifier(params_, "inv", gin, cfg_.num_classes, r);
  }
  if (cfg_.use_env_adv) {
    Rng r = root.fork(kStreamEnv);
    env_ = make_graph_classifier(params_, "env", gin, cfg_.num_envs, r);
  }
  if (cfg_.use_label_adv) {
    Rng r = root.fork(kStreamLabel);
    label_ = make_graph_classifier(params_, "label", gin, cfg_.num_classes, r);
  }
}

std::string LeciModel::group_of(const std::string& param_name) {
  return param_name.substr(0, param_name.find('.'));
}

void LeciModel::reinit_group(const std::string& group, std::uint64_t seed) {
  LeciModel fresh(cfg_, seed);
  bool found = false;
  auto copy = [&](const auto& src, const auto& dst) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (group_of(dst[i].first) != group) continue;
      found = true;
      auto values = src[i].second.data();
      Tensor t = dst[i].second;
      std::copy(values.begin(), values.end(), t.mutable_data().begin());
    }
  };
  copy(fresh.params_.items(), params_.items());
  copy(fresh.params_.buffers(), params_.buffers());
  require(found, "reinit_group: unknown group '" + group + "'");
}

Tensor LeciModel::purify(const Batch& batch, ForwardCtx& ctx) const {
  Tensor x = batch_features(batch);
  require(batch.feature_dim == cfg_.feature_dim,
          "LeciModel: batch feature dim " + std::to_string(batch.feature_dim) +
              " != model feature dim " + std::to_string(cfg_.feature_dim));
  if (!cfg_.use_pfsc) return x;
  return add(x, pfsc_transform_.forward(x, ctx));
}

Tensor LeciModel::predict_logits(const Batch& batch) const {
  NoGradGuard ng;
  ForwardCtx ctx;
  Tensor x = purify(batch, ctx);
  Selection s = select(selector_, batch, x, ctx);
  return inv_.logits(batch, x, s.w_causal, ctx);
}

std::vector<double> LeciModel::edge_probabilities(const Batch& batch) const {
  NoGradGuard ng;
  ForwardCtx ctx;
  Tensor x = purify(batch, ctx);
  Tensor p = sigmoid(selector_.edge_logits(batch, x, ctx));
  return {p.data().begin(), p.data().end()};
}

// ---- ErmModel -------------------------------------------------------------

ErmModel::ErmModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  Rng r = Rng(seed).fork(kStreamInv);
  clf_ = make_graph_classifier(params_, "erm", gin_for(cfg_), cfg_.num_classes, r);
}

Tensor ErmModel::logits(const Batch& batch, ForwardCtx& ctx) const {
  require(batch.feature_dim == cfg_.feature_dim,
          "ErmModel: batch feature dim mismatch");
  return clf_.logits(batch, batch_features(batch), batch_edge_weights(batch), ctx);
}

Tensor ErmModel::predict_logits(const Batch& batch) const {
  NoGradGuard ng;
  ForwardCtx ctx;
  return logits(batch, ctx);
}

std::unique_ptr<GraphModel> load_model(const std::filesystem::path& path) {
  std::string method;
  const ModelConfig cfg = model_config_from_json(ParamStore::read_meta(path), &method);
  std::unique_ptr<GraphModel> m;
  if (method == "leci")
    m = std::make_unique<LeciModel>(cfg, 0);
  else if (method == "erm")
    m = std::make_unique<ErmModel>(cfg, 0);
  else
    throw ValidationError("method", "unknown model method '" + method + "'");
  m->params().load(path);
  return m;
}

// ---- losses ---------------------------------------------------------------

Tensor loss_inv(const LeciModel& m, const Batch& batch, const Tensor& x,
                const Tensor& w_c, ForwardCtx& ctx) {
  require(batch.num_graphs > 0, "loss_inv: empty batch");
  return nll_of_logits(m.inv().logits(batch, x, w_c, ctx), batch.y);
}

Tensor loss_ea(const LeciModel& m, const Batch& batch, const Tensor& x,
               const Tensor& w_c, double lambda_e, ForwardCtx& ctx) {
  if (m.config().num_envs < 2)
    throw ConfigError("EA requires >=2 environments");
  require(m.config().use_env_adv, "loss_ea: model has no environment discriminator");
  return nll_of_logits(m.env().logits(batch, grad_reverse(x, lambda_e),
                                      grad_reverse(w_c, lambda_e), ctx),
                       batch.env);
}

Tensor loss_la(const LeciModel& m, const Batch& batch, const Tensor& x,
               const Tensor& w_s, double lambda_l, ForwardCtx& ctx) {
  require(m.config().use_label_adv, "loss_la: model has no label discriminator");
  return nll_of_logits(m.label().logits(batch, grad_reverse(x, lambda_l),
                                        grad_reverse(w_s, lambda_l), ctx),
                       batch.y);
}

PfscResult loss_pfsc(const LeciModel& m, const Batch& batch, double lambda_pfsc,
                     ForwardCtx& ctx) {
  PfscResult r;
  r.x_purified = m.purify(batch, ctx);
  if (!m.config().use_pfsc) {
    r.loss = Tensor::scalar(0.0);
    return r;
  }
  Tensor node_logp =
      log_softmax(m.pfsc_disc().forward(grad_reverse(r.x_purified, lambda_pfsc), ctx));
  r.graph_logp = segment_mean(node_logp, batch.node_graph_id, batch.num_graphs);
  r.loss = nll_loss(r.graph_logp, batch.env);
  return r;
}

LeciStep leci_forward(const LeciModel& m, const Batch& batch, const Lambdas& lam,
                      bool train, const Rng& rng, double info_r, double info_weight) {
  LeciStep s;
  Rng r_pfsc = rng.fork(kPassPfsc), r_sel = rng.fork(kPassSelector),
      r_gumbel = rng.fork(kPassGumbel), r_inv = rng.fork(kPassInv),
      r_env = rng.fork(kPassEnv), r_label = rng.fork(kPassLabel);
  const ModelConfig& cfg = m.config();

  ForwardCtx c_pfsc{train, &r_pfsc};
  PfscResult pf = loss_pfsc(m, batch, lam.pfsc, c_pfsc);
  s.x_purified = pf.x_purified;
  s.loss_pfsc = pf.loss;
  const Tensor& x = s.x_purified;

  ForwardCtx c_sel{train, &r_sel};
  Tensor logits = m.selector().edge_logits(batch, x, c_sel);
  s.selection = select_from_logits(logits, cfg.tau, cfg.hard, train, &r_gumbel);

  ForwardCtx c_inv{train, &r_inv};
  s.inv_logits = m.inv().logits(batch, x, s.selection.w_causal, c_inv);
  s.loss_inv = nll_of_logits(s.inv_logits, batch.y);
  Tensor total = s.loss_inv;

  if (cfg.use_env_adv) {
    if (cfg.num_envs < 2) throw ConfigError("EA requires >=2 environments");
    ForwardCtx c_env{train, &r_env};
    s.env_logits = m.env().logits(batch, grad_reverse(x, lam.env),
                                  grad_reverse(s.selection.w_causal, lam.env), c_env);
    s.loss_env = nll_of_logits(s.env_logits, batch.env);
    total = add(total, s.loss_env);
  } else {
    s.loss_env = Tensor::scalar(0.0);
  }
  if (cfg.use_label_adv) {
    ForwardCtx c_label{train, &r_label};
    s.label_logits =
        m.label().logits(batch, grad_reverse(x, lam.label),
                         grad_reverse(s.selection.w_spurious, lam.label), c_label);
    s.loss_label = nll_of_logits(s.label_logits, batch.y);
    total = add(total, s.loss_label);
  } else {
    s.loss_label = Tensor::scalar(0.0);
  }
  if (cfg.use_pfsc) total = add(total, s.loss_pfsc);
  if (info_r > 0.0 && info_weight > 0.0) {
    s.loss_info = scale(info_regularizer(logits, info_r), info_weight);
    total = add(total, s.loss_info);
  } else {
    s.loss_info = Tensor::scalar(0.0);
  }
  s.total = total;
  return s;
}

// ---- schedule & optimizer -------------------------------------------------

RampShape parse_ramp_shape(const std::string& s) {
  if (s == "linear") return RampShape::kLinear;
  if (s == "dann_sigmoid") return RampShape::kDannSigmoid;
  throw ConfigError("unknown ramp_shape '" + s + "'");
}

std::string to_string(RampShape s) {
  return s == RampShape::kLinear ? "linear" : "dann_sigmoid";
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs > 0 && cfg.warmup_epochs >= cfg.epochs)
    throw ConfigError("warmup_epochs: must be smaller than epochs");
  if (cfg.batch_size == 0) throw ConfigError("batch_size: must be positive");
  if (!(cfg.lr > 0.0)) throw ConfigError("lr: must be positive");
  if (cfg.weight_decay < 0.0) throw ConfigError("weight_decay: must be >= 0");
  if (cfg.lambda_l_max < 0.0) throw ConfigError("lambda_L_max: must be >= 0");
  if (cfg.lambda_e_max < 0.0) throw ConfigError("lambda_E_max: must be >= 0");
  if (cfg.lambda_pfsc_max < 0.0) throw ConfigError("lambda_PFSC_max: must be >= 0");
  if (!(cfg.tau > 0.0)) throw ConfigError("tau: must be positive");
  if (cfg.info_r && !(*cfg.info_r > 0.0 && *cfg.info_r < 1.0))
    throw ConfigError("info_r: must be in (0,1)");
  if (cfg.hidden_dim == 0) throw ConfigError("hidden_dim: must be positive");
  if (cfg.num_layers == 0) throw ConfigError("num_layers: must be positive");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0))
    throw ConfigError("dropout: must be in [0,1)");
}

Lambdas ramp(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch < cfg.warmup_epochs || cfg.epochs == 0) return {};
  const std::size_t span = cfg.epochs - 1 - cfg.warmup_epochs;
  double p = span == 0 ? 1.0
                       : static_cast<double>(epoch - cfg.warmup_epochs) /
                             static_cast<double>(span);
  p = std::clamp(p, 0.0, 1.0);
  double f = p;
  if (cfg.ramp_shape == RampShape::kDannSigmoid) {
    // Normalized so the final epoch reaches exactly the maximum.
    f = (2.0 / (1.0 + std::exp(-10.0 * p)) - 1.0) /
        (2.0 / (1.0 + std::exp(-10.0)) - 1.0);
    f = std::min(f, 1.0);
  }
  return {cfg.lambda_l_max * f, cfg.lambda_e_max * f, cfg.lambda_pfsc_max * f};
}

Adam::Adam(ParamStore& store, AdamConfig cfg) : store_(&store), cfg_(cfg) {
  for (const auto& [_, t] : store.items()) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
  t_.assign(store.size(), 0);
}

void Adam::step() { step(std::vector<bool>(store_->size(), true)); }

void Adam::step(const std::vector<bool>& active) {
  const auto& items = store_->items();
  require(items.size() == m_.size() && active.size() == m_.size(),
          "Adam: parameter list changed");
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!active[i]) continue;
    Tensor p = items[i].second;
    if (!p.has_grad() && cfg_.weight_decay == 0.0) continue;
    const std::vector<double> g = p.grad();
    auto w = p.mutable_data();
    ++t_[i];
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_[i]));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_[i]));
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k] + cfg_.weight_decay * w[k];
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
      w[k] -= cfg_.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg_.eps);
    }
  }
}

// ---- training -------------------------------------------------------------

std::string epoch_log_json(const EpochLog& l) {
  char buf[1024];
  std::snprintf(
      buf, sizeof buf,
      "{\"epoch\":%zu,\"loss_inv\":%.17g,\"loss_env\":%.17g,\"loss_label\":%.17g,"
      "\"loss_pfsc\":%.17g,\"train_acc\":%.17g,\"id_val_acc\":%.17g,"
      "\"ood_val_acc\":%.17g,\"ood_test_acc\":%.17g,\"env_disc_acc_on_gc\":%.17g,"
      "\"label_disc_acc_on_gs\":%.17g,\"pfsc_disc_acc\":%.17g,\"lambda_l\":%.17g,"
      "\"lambda_e\":%.17g,\"lambda_pfsc\":%.17g}",
      l.epoch, l.loss_inv, l.loss_env, l.loss_label, l.loss_pfsc, l.train_acc,
      l.id_val_acc, l.ood_val_acc, l.ood_test_acc, l.env_disc_acc_on_gc,
      l.label_disc_acc_on_gs, l.pfsc_disc_acc, l.lambda_l, l.lambda_e, l.lambda_pfsc);
  return buf;
}

std::vector<std::vector<double>> param_values(const ParamStore& store) {
  std::vector<std::vector<double>> out;
  for (const auto* list : {&store.items(), &store.buffers()})
    for (const auto& [_, t] : *list) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

void load_param_values(ParamStore& store,
                       const std::vector<std::vector<double>>& values) {
  require(store.items().size() + store.buffers().size() == values.size(),
          "load_param_values: count mismatch");
  std::size_t i = 0;
  for (const auto* list : {&store.items(), &store.buffers()})
    for (const auto& [_, tensor] : *list) {
      Tensor t = tensor;
      require(t.numel() == values[i].size(), "load_param_values: size mismatch");
      std::copy(values[i].begin(), values[i].end(), t.mutable_data().begin());
      ++i;
    }
}

ModelConfig model_config_for(const DatasetSplit& split, const TrainConfig& cfg) {
  if (split.train.empty()) throw ConfigError("training split is empty");
  ModelConfig m;
  m.feature_dim = split.train.front().feature_dim;
  m.num_classes = count_classes(split.train);
  m.num_envs = count_envs(split.train);
  m.hidden_dim = cfg.hidden_dim;
  m.num_layers = cfg.num_layers;
  m.dropout = cfg.dropout;
  m.use_virtual_node = cfg.use_virtual_node;
  m.tau = cfg.tau;
  m.hard = cfg.hard;
  m.use_pfsc = cfg.use_pfsc;
  m.use_env_adv = cfg.use_env_adv;
  m.use_label_adv = cfg.use_label_adv;
  return m;
}

namespace {

void check_finite(const Tensor& t, const char* term, std::size_t epoch) {
  if (!std::isfinite(t.item()))
    throw NumericError(std::string("non-finite ") + term + " at epoch " +
                       std::to_string(epoch));
}

std::vector<std::size_t> shuffled(std::size_t n, Rng rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

std::vector<std::vector<const Graph*>> make_minibatches(const std::vector<Graph>& g,
                                                       std::size_t batch_size,
                                                       const Rng& rng) {
  const auto order = shuffled(g.size(), rng);
  std::vector<std::vector<const Graph*>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    std::vector<const Graph*> b;
    for (std::size_t k = i; k < std::min(order.size(), i + batch_size); ++k)
      b.push_back(&g[order[k]]);
    out.push_back(std::move(b));
  }
  return out;
}

double match_count(const Tensor& logits, const std::vector<std::int64_t>& target) {
  const auto pred = argmax_rows(logits);
  double hits = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == target[i] ? 1.0 : 0.0;
  return hits;
}

// Eval-mode accuracies of the predictor and all three discriminators on one
// split, in a single pass.
struct LeciEval {
  double inv = 0.0, env = 0.0, label = 0.0, pfsc = 0.0;
};

LeciEval eval_leci(const LeciModel& m, const std::vector<Graph>& graphs) {
  LeciEval r;
  if (graphs.empty()) return r;
  NoGradGuard ng;
  const Rng unused(0);
  for_each_batch(graphs, 256, [&](const Batch& b, std::size_t) {
    LeciStep s = leci_forward(m, b, {}, false, unused);
    r.inv += match_count(s.inv_logits, b.y);
    if (s.env_logits.defined()) r.env += match_count(s.env_logits, b.env);
    if (s.label_logits.defined()) r.label += match_count(s.label_logits, b.y);
    if (m.config().use_pfsc) {
      ForwardCtx ctx;
      PfscResult pf = loss_pfsc(m, b, 0.0, ctx);
      r.pfsc += match_count(pf.graph_logp, b.env);
    }
  });
  const double n = static_cast<double>(graphs.size());
  r.inv /= n;
  r.env /= n;
  r.label /= n;
  r.pfsc /= n;
  return r;
}

struct Selection_ {
  double best_ood = -1.0, best_id = -1.0;
};

// Tracks the best epochs by ood_val and id_val accuracy (first best wins).
void track_selection(TrainResult& res, Selection_& sel, const EpochLog& log,
                     const ParamStore& params) {
  if (log.ood_val_acc > sel.best_ood) {
    sel.best_ood = log.ood_val_acc;
    res.best_ood_val_epoch = log.epoch;
    res.best_ood_val_params = param_values(params);
  }
  if (log.id_val_acc > sel.best_id) {
    sel.best_id = log.id_val_acc;
    res.best_id_val_epoch = log.epoch;
    res.best_id_val_params = param_values(params);
  }
}

std::vector<bool> group_mask(const ParamStore& store,
                             std::initializer_list<const char*> groups) {
  std::vector<bool> mask;
  for (const auto& [name, _] : store.items()) {
    const std::string g = LeciModel::group_of(name);
    bool on = false;
    for (const char* q : groups) on = on || g == q;
    mask.push_back(on);
  }
  return mask;
}

}  // namespace

TrainResult train(const DatasetSplit& split, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  validate(cfg);
  auto model = std::make_unique<LeciModel>(model_config_for(split, cfg),
                                           Rng(cfg.seed).fork(1).next_u64());
  return train(std::move(model), split, cfg, on_epoch);
}

TrainResult train(std::unique_ptr<LeciModel> model, const DatasetSplit& split,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  validate(cfg);
  if (model->config().use_env_adv && model->config().num_envs < 2)
    throw ConfigError("EA requires >=2 environments");
  TrainResult res;
  Adam opt(model->params(), {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const Rng master = Rng(cfg.seed).fork(2);
  const double info_r = cfg.info_r.value_or(0.0);
  const std::vector<bool> disc_mask =
      group_mask(model->params(), {"env", "label", "pfsc_fe"});
  std::vector<bool> main_mask(disc_mask.size());
  for (std::size_t i = 0; i < disc_mask.size(); ++i) main_mask[i] = !disc_mask[i];

  Selection_ sel;
  res.best_ood_val_params = res.best_id_val_params = param_values(model->params());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Lambdas lam = ramp(epoch, cfg);
    const Rng ep_rng = master.fork(epoch);

    if (cfg.strict_alternation) {
      // Discriminators alone until their summed loss settles: the spread of
      // the last 5 inner-epoch means drops below 1e-3.
      std::vector<double> history;
      for (std::size_t inner = 0; inner < cfg.max_inner_epochs; ++inner) {
        const Rng in_rng = ep_rng.fork(1'000'000 + inner);
        double total = 0.0;
        std::size_t count = 0;
        auto batches = make_minibatches(split.train, cfg.batch_size, in_rng.fork(0));
        for (std::size_t b = 0; b < batches.size(); ++b) {
          Batch batch = make_batch(batches[b]);
          LeciStep s = leci_forward(*model, batch, lam, true, in_rng.fork(1 + b));
          Tensor disc = add(add(s.loss_env, s.loss_label), s.loss_pfsc);
          check_finite(disc, "discriminator loss", epoch);
          backward(disc);
          opt.step(disc_mask);
          model->params().zero_grad();
          total += disc.item() * static_cast<double>(batch.num_graphs);
          count += batch.num_graphs;
        }
        history.push_back(total / static_cast<double>(count));
        if (history.size() >= 5) {
          auto first = history.end() - 5;
          auto [lo, hi] = std::minmax_element(first, history.end());
          if (*hi - *lo < 1e-3) break;
        }
      }
    }

    EpochLog log;
    log.epoch = epoch;
    log.lambda_l = lam.label;
    log.lambda_e = lam.env;
    log.lambda_pfsc = lam.pfsc;
    double hits = 0.0, seen = 0.0;
    auto batches = make_minibatches(split.train, cfg.batch_size, ep_rng.fork(0));
    for (std::size_t b = 0; b < batches.size(); ++b) {
      Batch batch = make_batch(batches[b]);
      LeciStep s = leci_forward(*model, batch, lam, true, ep_rng.fork(1 + b), info_r,
                                cfg.info_weight);
      check_finite(s.loss_inv, "L_inv", epoch);
      check_finite(s.loss_env, "L_E", epoch);
      check_finite(s.loss_label, "L_L", epoch);
      check_finite(s.loss_pfsc, "L_PFSC", epoch);
      check_finite(s.loss_info, "info regularizer", epoch);
      backward(s.total);
      if (cfg.strict_alternation)
        opt.step(main_mask);
      else
        opt.step();
      model->params().zero_grad();
      const double n = static_cast<double>(batch.num_graphs);
      log.loss_inv += s.loss_inv.item() * n;
      log.loss_env += s.loss_env.item() * n;
      log.loss_label += s.loss_label.item() * n;
      log.loss_pfsc += s.loss_pfsc.item() * n;
      hits += match_count(s.inv_logits, batch.y);
      seen += n;
    }
    log.loss_inv /= seen;
    log.loss_env /= seen;
    log.loss_label /= seen;
    log.loss_pfsc /= seen;
    log.train_acc = hits / seen;

    if (cfg.eval_each_epoch || epoch + 1 == cfg.epochs) {
      const LeciEval id = eval_leci(*model, split.id_val);
      log.id_val_acc = id.inv;
      log.env_disc_acc_on_gc = id.env;
      log.label_disc_acc_on_gs = id.label;
      log.pfsc_disc_acc = id.pfsc;
      log.ood_val_acc = split.ood_val.empty() ? 0.0 : accuracy(*model, split.ood_val);
      log.ood_test_acc = split.ood_test.empty() ? 0.0 : accuracy(*model, split.ood_test);
      track_selection(res, sel, log, model->params());
    }
    res.logs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  res.model = std::move(model);
  return res;
}

TrainResult train_erm(const DatasetSplit& split, const TrainConfig& cfg,
                      const EpochCallback& on_epoch) {
  validate(cfg);
  auto model = std::make_unique<ErmModel>(model_config_for(split, cfg),
                                          Rng(cfg.seed).fork(1).next_u64());
  TrainResult res;
  Adam opt(model->params(), {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const Rng master = Rng(cfg.seed).fork(2);
  Selection_ sel;
  res.best_ood_val_params = res.best_id_val_params = param_values(model->params());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Rng ep_rng = master.fork(epoch);
    EpochLog log;
    log.epoch = epoch;
    double hits = 0.0, seen = 0.0;
    auto batches = make_minibatches(split.train, cfg.batch_size, ep_rng.fork(0));
    for (std::size_t b = 0; b < batches.size(); ++b) {
      Batch batch = make_batch(batches[b]);
      Rng r = ep_rng.fork(1 + b).fork(kPassInv);
      ForwardCtx ctx{true, &r};
      Tensor logits = model->logits(batch, ctx);
      Tensor loss = nll_of_logits(logits, batch.y);
      check_finite(loss, "L_ERM", epoch);
      backward(loss);
      opt.step();
      model->params().zero_grad();
      const double n = static_cast<double>(batch.num_graphs);
      log.loss_inv += loss.item() * n;
      hits += match_count(logits, batch.y);
      seen += n;
    }
    log.loss_inv /= seen;
    log.train_acc = hits / seen;
    if (cfg.eval_each_epoch || epoch + 1 == cfg.epochs) {
      log.id_val_acc = split.id_val.empty() ? 0.0 : accuracy(*model, split.id_val);
      log.ood_val_acc = split.ood_val.empty() ? 0.0 : accuracy(*model, split.ood_val);
      log.ood_test_acc = split.ood_test.empty() ? 0.0 : accuracy(*model, split.ood_test);
      track_selection(res, sel, log, model->params());
    }
    res.logs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  res.model = std::move(model);
  return res;
}

}  // namespace leci
