// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.

#include "leci/gnn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "leci/error.hpp"

namespace leci {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

Tensor ParamStore::add(const std::string& name, Tensor t) {
  for (const auto& [n, _] : params_)
    require(n != name, "ParamStore: duplicate parameter '" + name + "'");
  params_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::add_buffer(const std::string& name, Tensor t) {
  for (const auto& [n, _] : buffers_)
    require(n != name, "ParamStore: duplicate buffer '" + name + "'");
  buffers_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::find(const std::string& name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return t;
  throw ContractError("ParamStore: no parameter '" + name + "'");
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

void ParamStore::copy_values_from(const ParamStore& other) {
  auto copy = [](auto& dst_list, const auto& src_list) {
    require(src_list.size() == dst_list.size(), "ParamStore: array count mismatch");
    for (std::size_t i = 0; i < dst_list.size(); ++i) {
      require(dst_list[i].first == src_list[i].first &&
                  dst_list[i].second.shape() == src_list[i].second.shape(),
              "ParamStore: layout mismatch at '" + dst_list[i].first + "'");
      auto src = src_list[i].second.data();
      auto dst = dst_list[i].second.mutable_data();
      std::copy(src.begin(), src.end(), dst.begin());
    }
  };
  copy(params_, other.params_);
  copy(buffers_, other.buffers_);
}

void ParamStore::save(const std::filesystem::path& path,
                      const std::string& meta) const {
  nlohmann::ordered_json header;
  header["format"] = "leci-params";
  header["version"] = 1;
  header["meta"] = nlohmann::ordered_json::parse(meta.empty() ? "{}" : meta);
  auto arrays = nlohmann::ordered_json::array();
  for (const auto& [name, t] : params_)
    arrays.push_back({{"name", name}, {"shape", t.shape()}});
  for (const auto& [name, t] : buffers_)
    arrays.push_back({{"name", name}, {"shape", t.shape()}, {"buffer", true}});
  header["arrays"] = arrays;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
  out << header.dump() << '\n';
  for (const auto* list : {&params_, &buffers_})
    for (const auto& [_, t] : *list)
      out.write(reinterpret_cast<const char*>(t.data().data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
  if (!out) throw ConfigError("write failed for '" + path.string() + "'");
}

namespace {

nlohmann::json read_header(std::ifstream& in, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line))
    throw ParseError("'" + path.string() + "': missing checkpoint header", 1);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("'" + path.string() + "': " + e.what(), 1);
  }
  if (h.value("format", "") != "leci-params" || h.value("version", 0) != 1)
    throw ParseError("'" + path.string() + "': not a leci-params v1 file", 1);
  return h;
}

}  // namespace

std::string ParamStore::read_meta(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  return read_header(in, path)["meta"].dump();
}

std::string ParamStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  const auto h = read_header(in, path);
  const auto& arrays = h.at("arrays");
  std::vector<std::pair<std::string, Tensor>*> all;
  for (auto& p : params_) all.push_back(&p);
  for (auto& b : buffers_) all.push_back(&b);
  if (arrays.size() != all.size())
    throw ValidationError("arrays", "checkpoint holds " +
                                        std::to_string(arrays.size()) +
                                        " arrays, model has " +
                                        std::to_string(all.size()));
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& [name, t] = *all[i];
    const auto& a = arrays[i];
    if (a.at("name").get<std::string>() != name)
      throw ValidationError("arrays", "expected '" + name + "', found '" +
                                          a.at("name").get<std::string>() + "'");
    if (a.at("shape").get<Shape>() != t.shape())
      throw ValidationError("arrays", "shape mismatch for '" + name + "'");
    auto dst = t.mutable_data();
    in.read(reinterpret_cast<char*>(dst.data()),
            static_cast<std::streamsize>(dst.size() * sizeof(double)));
    if (!in) throw ParseError("'" + path.string() + "': truncated payload", 0);
  }
  return h["meta"].dump();
}

Tensor Linear::forward(const Tensor& x) const {
  require(x.cols() == in_dim(), "Linear: input dim " + std::to_string(x.cols()) +
                                    " != " + std::to_string(in_dim()));
  return add(matmul(x, weight), bias);
}

Linear make_linear(ParamStore& store, const std::string& name, std::size_t in,
                   std::size_t out, Rng& rng, Init init) {
  std::vector<double> w(in * out, 0.0);
  if (init == Init::kGlorot) {
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    for (auto& v : w) v = (2.0 * rng.uniform() - 1.0) * a;
  }
  Linear l;
  l.weight = store.add(name + ".weight", Tensor::from({in, out}, std::move(w), true));
  l.bias = store.add(name + ".bias", Tensor::zeros(1, out, true));
  return l;
}

Tensor Mlp::forward(const Tensor& x, ForwardCtx& ctx) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(h);
    if (i + 1 < layers.size()) {
      h = relu(h);
      if (ctx.train && dropout > 0.0) h = leci::dropout(h, dropout, true, *ctx.rng);
    }
  }
  return h;
}

Mlp make_mlp(ParamStore& store, const std::string& name,
             const std::vector<std::size_t>& dims, double dropout, Rng& rng,
             Init last_init) {
  require(dims.size() >= 2, "make_mlp: need at least input and output dims");
  Mlp m;
  m.dropout = dropout;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    m.layers.push_back(make_linear(store, name + "." + std::to_string(i),
                                   dims[i], dims[i + 1], rng,
                                   i + 2 == dims.size() ? last_init : Init::kGlorot));
  return m;
}

Tensor BatchNorm::forward(const Tensor& x, const ForwardCtx& ctx) const {
  return batch_norm(x, gamma, beta, running_mean, running_var, ctx.train);
}

BatchNorm make_batch_norm(ParamStore& store, const std::string& name, std::size_t dim) {
  BatchNorm bn;
  bn.gamma = store.add(name + ".gamma", Tensor::full(1, dim, 1.0, true));
  bn.beta = store.add(name + ".beta", Tensor::zeros(1, dim, true));
  bn.running_mean = store.add_buffer(name + ".running_mean", Tensor::zeros(1, dim));
  bn.running_var = store.add_buffer(name + ".running_var", Tensor::full(1, dim, 1.0));
  return bn;
}

void validate(const GinConfig& cfg) {
  if (cfg.num_layers < 1) throw ConfigError("num_layers: must be >= 1");
  if (cfg.hidden_dim < 1) throw ConfigError("hidden_dim: must be >= 1");
  if (cfg.input_dim < 1) throw ConfigError("input_dim: must be >= 1");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0))
    throw ConfigError("dropout: must be in [0,1)");
}

GinEncoder::GinEncoder(ParamStore& store, const std::string& name,
                       const GinConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  validate(cfg);
  const std::size_t h = cfg.hidden_dim;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const std::size_t in = l == 0 ? cfg.input_dim : h;
    const std::string p = name + ".conv" + std::to_string(l);
    Layer layer;
    layer.lin1 = make_linear(store, p + ".0", in, h, rng);
    layer.bn_inner = make_batch_norm(store, p + ".bn0", h);
    layer.lin2 = make_linear(store, p + ".1", h, h, rng);
    layer.bn_outer = make_batch_norm(store, p + ".bn1", h);
    layers_.push_back(std::move(layer));
  }
}

Tensor GinEncoder::encode(const Batch& batch, const Tensor& x,
                          const Tensor& edge_weight, ForwardCtx& ctx) const {
  require(x.rows() == batch.num_nodes && x.cols() == cfg_.input_dim,
          "GinEncoder: feature matrix shape mismatch");
  require(edge_weight.rows() == batch.num_edges() && edge_weight.cols() == 1,
          "GinEncoder: edge_weight length " + std::to_string(edge_weight.rows()) +
              " != edge count " + std::to_string(batch.num_edges()));
  // NaN passes through so the training loop can report it as a numeric error.
  for (double w : edge_weight.data())
    require(!(w < 0.0 || w > 1.0), "GinEncoder: edge weight outside [0,1]");
  require(!ctx.train || ctx.rng != nullptr || cfg_.dropout == 0.0,
          "GinEncoder: training forward needs an rng");

  Tensor h = x;
  Tensor vn;
  std::vector<std::uint32_t> node_rows, vn_rows;
  if (cfg_.use_virtual_node) {
    vn = Tensor::zeros(batch.num_graphs, cfg_.input_dim);
    for (std::size_t i = 0; i < batch.num_nodes; ++i)
      node_rows.push_back(static_cast<std::uint32_t>(i));
    for (std::size_t g = 0; g < batch.num_graphs; ++g)
      vn_rows.push_back(static_cast<std::uint32_t>(batch.num_nodes + g));
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    Tensor z = add(h, propagate(h, edge_weight, batch.edge_u, batch.edge_v));
    if (cfg_.use_virtual_node) {
      // Virtual-node rows ride below the real nodes through the shared MLP.
      Tensor vz = add(vn, segment_sum(h, batch.node_graph_id, batch.num_graphs));
      z = concat_rows(add(z, gather_rows(vn, batch.node_graph_id)), vz);
    }
    Tensor t = relu(layer.bn_inner.forward(layer.lin1.forward(z), ctx));
    t = layer.bn_outer.forward(layer.lin2.forward(t), ctx);
    if (l + 1 < layers_.size()) t = relu(t);
    if (ctx.train && cfg_.dropout > 0.0) t = dropout(t, cfg_.dropout, true, *ctx.rng);
    if (cfg_.use_virtual_node) {
      h = gather_rows(t, node_rows);
      vn = gather_rows(t, vn_rows);
    } else {
      h = t;
    }
  }
  return h;
}

Tensor graph_readout(const Tensor& node_emb, const Batch& batch) {
  require(node_emb.rows() == batch.num_nodes,
          "graph_readout: embedding rows != node count");
  for (std::size_t g = 0; g < batch.num_graphs; ++g)
    require(batch.node_offset[g + 1] > batch.node_offset[g],
            "graph_readout: graph " + std::to_string(g) + " has no nodes");
  return segment_mean(node_emb, batch.node_graph_id, batch.num_graphs);
}

Tensor classify(const Linear& head, const Tensor& graph_emb) {
  return head.forward(graph_emb);
}

Tensor GraphClassifier::logits(const Batch& batch, const Tensor& x,
                               const Tensor& edge_weight, ForwardCtx& ctx) const {
  return classify(head, graph_readout(encoder.encode(batch, x, edge_weight, ctx), batch));
}

GraphClassifier make_graph_classifier(ParamStore& store, const std::string& name,
                                      const GinConfig& cfg,
                                      std::size_t num_classes, Rng& rng) {
  GraphClassifier c;
  Rng enc_rng = rng.fork(0);
  Rng head_rng = rng.fork(1);
  c.encoder = GinEncoder(store, name + ".gin", cfg, enc_rng);
  c.head = make_linear(store, name + ".head", cfg.hidden_dim, num_classes, head_rng);
  return c;
}

Tensor batch_features(const Batch& batch) {
  return Tensor::from({batch.num_nodes, batch.feature_dim}, batch.x);
}

Tensor batch_edge_weights(const Batch& batch) {
  return Tensor::from({batch.num_edges(), 1}, batch.edge_weight);
}

}  // namespace leci
