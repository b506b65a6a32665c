// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.

#include "leci/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "leci/error.hpp"

namespace leci {

namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<detail::Node>;

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void require_2d(const Tensor& t, const char* op) {
  require(t.defined(), std::string(op) + ": undefined tensor");
  require(t.shape().size() == 2,
          std::string(op) + ": expected rank-2 tensor, got " +
              shape_str(t.shape()));
}

// Builds the output node. The backward closure is attached only when
// recording is on and some parent needs a gradient.
Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> data,
                   std::initializer_list<Tensor> parents,
                   std::function<void(detail::Node&)> bw) {
  auto n = std::make_shared<detail::Node>();
  n->shape = {rows, cols};
  n->data = std::move(data);
  if (g_grad_enabled) {
    bool need = false;
    for (const auto& p : parents) need = need || p.requires_grad();
    if (need) {
      n->requires_grad = true;
      for (const auto& p : parents) n->parents.push_back(p.node_ptr());
      n->backward = std::move(bw);
    }
  }
  return Tensor(std::move(n));
}

enum class Bcast { kSame, kRow, kCol, kScalar };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  require_2d(a, op);
  require_2d(b, op);
  const std::size_t r = a.rows(), c = a.cols();
  if (b.rows() == r && b.cols() == c) return Bcast::kSame;
  if (b.rows() == 1 && b.cols() == 1) return Bcast::kScalar;
  if (b.rows() == 1 && b.cols() == c) return Bcast::kRow;
  if (b.rows() == r && b.cols() == 1) return Bcast::kCol;
  throw ContractError(std::string(op) + ": shape mismatch " +
                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline std::size_t bindex(Bcast k, std::size_t i, std::size_t j,
                          std::size_t cols) {
  switch (k) {
    case Bcast::kSame: return i * cols + j;
    case Bcast::kRow: return j;
    case Bcast::kCol: return i;
    case Bcast::kScalar: return 0;
  }
  return 0;
}

template <typename F>
Tensor unary(const Tensor& x, const char* op, F f,
             std::function<void(detail::Node&)> (*make_bw)(detail::Node*,
                                                           detail::Node*)) {
  require_2d(x, op);
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  auto res = make_result(x.rows(), x.cols(), std::move(out), {x}, nullptr);
  if (res.requires_grad()) res.node()->backward = make_bw(x.node(), res.node());
  return res;
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return full(rows, cols, 0.0, requires_grad);
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value,
                    bool requires_grad) {
  return from({rows, cols}, std::vector<double>(rows * cols, value),
              requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  require(n == data.size(), "Tensor::from: data length " +
                                std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1, 1}, {value}, requires_grad);
}

std::size_t Tensor::rows() const {
  require(node_->shape.size() == 2, "rows(): tensor is not rank 2");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  require(node_->shape.size() == 2, "cols(): tensor is not rank 2");
  return node_->shape[1];
}

double Tensor::item() const {
  require(numel() == 1, "item(): tensor has " + std::to_string(numel()) +
                            " elements");
  return node_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->data.size(), 0.0);
  return node_->grad;
}

Tensor Tensor::detach() const {
  return from(node_->shape, node_->data, false);
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss) {
  require(loss.defined() && loss.numel() == 1,
          "backward: loss must be a scalar");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (auto* n : order)
    if (n->backward) n->grad.assign(n->data.size(), 0.0);
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

// ---- ops ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  require(b.rows() == k, "matmul: shape mismatch " + shape_str(a.shape()) +
                             " x " + shape_str(b.shape()));
  std::vector<double> out(n * m, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * brow[j];
    }
  }
  detail::Node* an = a.node();
  detail::Node* bn = b.node();
  return make_result(n, m, std::move(out), {a, b}, [an, bn, n, k, m](detail::Node& self) {
    const double* G = self.grad.data();
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      const double* B = bn->data.data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          const double* g = G + i * m;
          const double* brow = B + p * m;
          for (std::size_t j = 0; j < m; ++j) s += g[j] * brow[j];
          ga[i * k + p] += s;
        }
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      const double* A = an->data.data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          const double* g = G + i * m;
          double* dst = gb.data() + p * m;
          for (std::size_t j = 0; j < m; ++j) dst[j] += av * g[j];
        }
    }
  });
}

namespace {

// Shared body of add/sub/mul. `sign` applies to b for add/sub.
Tensor binary_elementwise(const Tensor& a, const Tensor& b, int kind,
                          const char* op) {
  const Bcast bk = broadcast_kind(a, b, op);
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double bv = B[bindex(bk, i, j, c)];
      const double av = A[i * c + j];
      out[i * c + j] = kind == 0 ? av + bv : kind == 1 ? av - bv : av * bv;
    }
  detail::Node* an = a.node();
  detail::Node* bn = b.node();
  return make_result(r, c, std::move(out), {a, b}, [an, bn, bk, r, c, kind](detail::Node& self) {
    const auto& G = self.grad;
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < r * c; ++i) {
        if (kind == 2)
          ga[i] += G[i] * bn->data[bindex(bk, i / c, i % c, c)];
        else
          ga[i] += G[i];
      }
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          const double g = G[i * c + j];
          const std::size_t bi = bindex(bk, i, j, c);
          if (kind == 0)
            gb[bi] += g;
          else if (kind == 1)
            gb[bi] -= g;
          else
            gb[bi] += g * an->data[i * c + j];
        }
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(a, b, 0, "add");
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(a, b, 1, "sub");
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(a, b, 2, "mul");
}

Tensor scale(const Tensor& a, double factor) {
  require_2d(a, "scale");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  detail::Node* an = a.node();
  return make_result(a.rows(), a.cols(), std::move(out), {a},
                     [an, factor](detail::Node& self) {
                       auto& g = an->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] += factor * self.grad[i];
                     });
}

Tensor add_scalar(const Tensor& a, double value) {
  require_2d(a, "add_scalar");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += value;
  detail::Node* an = a.node();
  return make_result(a.rows(), a.cols(), std::move(out), {a},
                     [an](detail::Node& self) {
                       auto& g = an->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] += self.grad[i];
                     });
}

Tensor one_minus(const Tensor& a) {
  require_2d(a, "one_minus");
  std::vector<double> out(a.numel());
  auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 - in[i];
  detail::Node* an = a.node();
  return make_result(a.rows(), a.cols(), std::move(out), {a},
                     [an](detail::Node& self) {
                       auto& g = an->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] -= self.grad[i];
                     });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v < 0.0 ? 0.0 : v; },  // NaN propagates
      [](detail::Node* in, detail::Node*) -> std::function<void(detail::Node&)> {
        return [in](detail::Node& self) {
          auto& g = in->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i)
            if (in->data[i] > 0.0) g[i] += self.grad[i];
        };
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](detail::Node* in, detail::Node*) -> std::function<void(detail::Node&)> {
        return [in](detail::Node& self) {
          auto& g = in->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double s = self.data[i];
            g[i] += self.grad[i] * s * (1.0 - s);
          }
        };
      });
}

Tensor log_sigmoid(const Tensor& x) {
  // log(sigmoid(v)) = -softplus(-v), evaluated without overflow.
  return unary(
      x, "log_sigmoid",
      [](double v) {
        return v >= 0.0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
      },
      [](detail::Node* in, detail::Node*) -> std::function<void(detail::Node&)> {
        return [in](detail::Node& self) {
          auto& g = in->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) {
            // d/dv log sigmoid(v) = 1 - sigmoid(v) = sigmoid(-v)
            const double v = in->data[i];
            const double s = v >= 0.0 ? std::exp(-v) / (1.0 + std::exp(-v))
                                      : 1.0 / (1.0 + std::exp(v));
            g[i] += self.grad[i] * s;
          }
        };
      });
}

Tensor log(const Tensor& x) {
  return unary(
      x, "log", [](double v) { return std::log(v); },
      [](detail::Node* in, detail::Node*) -> std::function<void(detail::Node&)> {
        return [in](detail::Node& self) {
          auto& g = in->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += self.grad[i] / in->data[i];
        };
      });
}

Tensor log_softmax(const Tensor& x) {
  require_2d(x, "log_softmax");
  const std::size_t r = x.rows(), c = x.cols();
  require(c > 0, "log_softmax: zero columns");
  std::vector<double> out(r * c);
  auto in = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = in.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lse;
  }
  detail::Node* xn = x.node();
  return make_result(r, c, std::move(out), {x}, [xn, r, c](detail::Node& self) {
    auto& g = xn->ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < c; ++j) gs += self.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        g[i * c + j] +=
            self.grad[i * c + j] - std::exp(self.data[i * c + j]) * gs;
    }
  });
}

Tensor nll_loss(const Tensor& logp, std::span<const std::int64_t> target) {
  require_2d(logp, "nll_loss");
  const std::size_t r = logp.rows(), c = logp.cols();
  require(target.size() == r, "nll_loss: target length " +
                                  std::to_string(target.size()) +
                                  " != rows " + std::to_string(r));
  require(r > 0, "nll_loss: empty input");
  std::vector<std::int64_t> tgt(target.begin(), target.end());
  double s = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    require(tgt[i] >= 0 && static_cast<std::size_t>(tgt[i]) < c,
            "nll_loss: target out of range");
    s -= logp.data()[i * c + static_cast<std::size_t>(tgt[i])];
  }
  detail::Node* ln = logp.node();
  return make_result(1, 1, {s / static_cast<double>(r)}, {logp},
                     [ln, tgt = std::move(tgt), r, c](detail::Node& self) {
                       auto& g = ln->ensure_grad();
                       const double gv = self.grad[0] / static_cast<double>(r);
                       for (std::size_t i = 0; i < r; ++i)
                         g[i * c + static_cast<std::size_t>(tgt[i])] -= gv;
                     });
}

Tensor dropout(const Tensor& x, double p, bool train, Rng& rng) {
  require_2d(x, "dropout");
  require(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
  if (!train || p == 0.0) return x;
  const double keep = 1.0 - p;
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * mask[i];
  detail::Node* xn = x.node();
  return make_result(x.rows(), x.cols(), std::move(out), {x},
                     [xn, mask = std::move(mask)](detail::Node& self) {
                       auto& g = xn->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] += self.grad[i] * mask[i];
                     });
}

Tensor segment_sum(const Tensor& x, std::span<const std::uint32_t> ids,
                   std::size_t num_segments) {
  require_2d(x, "segment_sum");
  const std::size_t r = x.rows(), c = x.cols();
  require(ids.size() == r, "segment_sum: ids length != rows");
  std::vector<double> out(num_segments * c, 0.0);
  auto in = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    require(ids[i] < num_segments, "segment_sum: segment id out of range");
    for (std::size_t j = 0; j < c; ++j) out[ids[i] * c + j] += in[i * c + j];
  }
  std::vector<std::uint32_t> idv(ids.begin(), ids.end());
  detail::Node* xn = x.node();
  return make_result(num_segments, c, std::move(out), {x},
                     [xn, idv = std::move(idv), c](detail::Node& self) {
                       auto& g = xn->ensure_grad();
                       for (std::size_t i = 0; i < idv.size(); ++i)
                         for (std::size_t j = 0; j < c; ++j)
                           g[i * c + j] += self.grad[idv[i] * c + j];
                     });
}

Tensor segment_mean(const Tensor& x, std::span<const std::uint32_t> ids,
                    std::size_t num_segments) {
  require_2d(x, "segment_mean");
  const std::size_t r = x.rows(), c = x.cols();
  require(ids.size() == r, "segment_mean: ids length != rows");
  std::vector<double> count(num_segments, 0.0);
  for (auto id : ids) {
    require(id < num_segments, "segment_mean: segment id out of range");
    count[id] += 1.0;
  }
  for (double n : count) require(n > 0.0, "segment_mean: empty segment");
  std::vector<double> out(num_segments * c, 0.0);
  auto in = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[ids[i] * c + j] += in[i * c + j];
  for (std::size_t s = 0; s < num_segments; ++s)
    for (std::size_t j = 0; j < c; ++j) out[s * c + j] /= count[s];
  std::vector<std::uint32_t> idv(ids.begin(), ids.end());
  detail::Node* xn = x.node();
  return make_result(
      num_segments, c, std::move(out), {x},
      [xn, idv = std::move(idv), count = std::move(count), c](detail::Node& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < idv.size(); ++i)
          for (std::size_t j = 0; j < c; ++j)
            g[i * c + j] += self.grad[idv[i] * c + j] / count[idv[i]];
      });
}

Tensor gather_rows(const Tensor& x, std::span<const std::uint32_t> index) {
  require_2d(x, "gather_rows");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(index.size() * c);
  auto in = x.data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] < r, "gather_rows: index out of range");
    std::copy_n(in.data() + index[i] * c, c, out.data() + i * c);
  }
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  detail::Node* xn = x.node();
  return make_result(index.size(), c, std::move(out), {x},
                     [xn, idx = std::move(idx), c](detail::Node& self) {
                       auto& g = xn->ensure_grad();
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t j = 0; j < c; ++j)
                           g[idx[i] * c + j] += self.grad[i * c + j];
                     });
}

Tensor concat_last_dim(const Tensor& a, const Tensor& b) {
  require_2d(a, "concat_last_dim");
  require_2d(b, "concat_last_dim");
  require(a.rows() == b.rows(), "concat_last_dim: row count mismatch " +
                                    shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
  const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols(), c = ca + cb;
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a.data().data() + i * ca, ca, out.data() + i * c);
    std::copy_n(b.data().data() + i * cb, cb, out.data() + i * c + ca);
  }
  detail::Node* an = a.node();
  detail::Node* bn = b.node();
  return make_result(r, c, std::move(out), {a, b}, [an, bn, r, ca, cb, c](detail::Node& self) {
    if (an->requires_grad) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < ca; ++j) g[i * ca + j] += self.grad[i * c + j];
    }
    if (bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < cb; ++j)
          g[i * cb + j] += self.grad[i * c + ca + j];
    }
  });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_2d(a, "concat_rows");
  require_2d(b, "concat_rows");
  require(a.cols() == b.cols(), "concat_rows: column count mismatch " +
                                    shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
  const std::size_t na = a.numel(), nb = b.numel();
  std::vector<double> out(na + nb);
  std::copy_n(a.data().data(), na, out.data());
  std::copy_n(b.data().data(), nb, out.data() + na);
  detail::Node* an = a.node();
  detail::Node* bn = b.node();
  return make_result(a.rows() + b.rows(), a.cols(), std::move(out), {a, b},
                     [an, bn, na, nb](detail::Node& self) {
                       if (an->requires_grad) {
                         auto& g = an->ensure_grad();
                         for (std::size_t i = 0; i < na; ++i) g[i] += self.grad[i];
                       }
                       if (bn->requires_grad) {
                         auto& g = bn->ensure_grad();
                         for (std::size_t i = 0; i < nb; ++i) g[i] += self.grad[na + i];
                       }
                     });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, bool train,
                  double momentum, double eps) {
  require_2d(x, "batch_norm");
  const std::size_t r = x.rows(), c = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == c && beta.rows() == 1 &&
              beta.cols() == c && running_mean.numel() == c &&
              running_var.numel() == c,
          "batch_norm: parameter shape mismatch for input " + shape_str(x.shape()));
  require(!train || r > 0, "batch_norm: empty training batch");
  std::vector<double> mu(c), inv(c);
  auto in = x.data();
  if (train) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) mu[j] += in[i * c + j];
    for (auto& m : mu) m /= static_cast<double>(r);
    std::vector<double> var(c, 0.0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = in[i * c + j] - mu[j];
        var[j] += d * d;
      }
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (std::size_t j = 0; j < c; ++j) {
      const double unbiased = r > 1 ? var[j] / static_cast<double>(r - 1) : 0.0;
      var[j] /= static_cast<double>(r);
      inv[j] = 1.0 / std::sqrt(var[j] + eps);
      rm[j] = (1.0 - momentum) * rm[j] + momentum * mu[j];
      rv[j] = (1.0 - momentum) * rv[j] + momentum * unbiased;
    }
  } else {
    auto rm = running_mean.data();
    auto rv = running_var.data();
    for (std::size_t j = 0; j < c; ++j) {
      mu[j] = rm[j];
      inv[j] = 1.0 / std::sqrt(rv[j] + eps);
    }
  }
  std::vector<double> xhat(r * c), out(r * c);
  auto g = gamma.data();
  auto b = beta.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t k = i * c + j;
      xhat[k] = (in[k] - mu[j]) * inv[j];
      out[k] = g[j] * xhat[k] + b[j];
    }
  detail::Node* xn = x.node();
  detail::Node* gn = gamma.node();
  detail::Node* bn = beta.node();
  return make_result(
      r, c, std::move(out), {x, gamma, beta},
      [xn, gn, bn, r, c, train, xhat = std::move(xhat), inv = std::move(inv)](
          detail::Node& self) {
        const auto& dy = self.grad;
        std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            sum_dy[j] += dy[i * c + j];
            sum_dy_xhat[j] += dy[i * c + j] * xhat[i * c + j];
          }
        if (gn->requires_grad) {
          auto& gg = gn->ensure_grad();
          for (std::size_t j = 0; j < c; ++j) gg[j] += sum_dy_xhat[j];
        }
        if (bn->requires_grad) {
          auto& gb = bn->ensure_grad();
          for (std::size_t j = 0; j < c; ++j) gb[j] += sum_dy[j];
        }
        if (xn->requires_grad) {
          auto& gx = xn->ensure_grad();
          const auto& gam = gn->data;
          const double n = static_cast<double>(r);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) {
              const std::size_t k = i * c + j;
              if (train)
                gx[k] += gam[j] * inv[j] / n *
                         (n * dy[k] - sum_dy[j] - xhat[k] * sum_dy_xhat[j]);
              else
                gx[k] += gam[j] * inv[j] * dy[k];
            }
        }
      });
}

Tensor sum(const Tensor& x) {
  require_2d(x, "sum");
  double s = 0.0;
  for (double v : x.data()) s += v;
  detail::Node* xn = x.node();
  return make_result(1, 1, {s}, {x}, [xn](detail::Node& self) {
    auto& g = xn->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  require_2d(x, "mean");
  require(x.numel() > 0, "mean: empty tensor");
  const double n = static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.data()) s += v;
  detail::Node* xn = x.node();
  return make_result(1, 1, {s / n}, {x}, [xn, n](detail::Node& self) {
    auto& g = xn->ensure_grad();
    for (auto& v : g) v += self.grad[0] / n;
  });
}

Tensor propagate(const Tensor& x, const Tensor& w,
                 std::span<const std::uint32_t> edge_u,
                 std::span<const std::uint32_t> edge_v) {
  require_2d(x, "propagate");
  require_2d(w, "propagate");
  const std::size_t n = x.rows(), c = x.cols(), m = edge_u.size();
  require(edge_v.size() == m, "propagate: endpoint arrays differ in length");
  require(w.rows() == m && w.cols() == 1,
          "propagate: weight shape " + shape_str(w.shape()) +
              " does not match edge count " + std::to_string(m));
  std::vector<double> out(n * c, 0.0);
  const double* X = x.data().data();
  const double* W = w.data().data();
  for (std::size_t e = 0; e < m; ++e) {
    const std::size_t u = edge_u[e], v = edge_v[e];
    require(u < n && v < n, "propagate: edge endpoint out of range");
    const double we = W[e];
    if (we == 0.0) continue;
    for (std::size_t j = 0; j < c; ++j) {
      out[v * c + j] += we * X[u * c + j];
      out[u * c + j] += we * X[v * c + j];
    }
  }
  std::vector<std::uint32_t> eu(edge_u.begin(), edge_u.end());
  std::vector<std::uint32_t> ev(edge_v.begin(), edge_v.end());
  detail::Node* xn = x.node();
  detail::Node* wn = w.node();
  return make_result(
      n, c, std::move(out), {x, w},
      [xn, wn, eu = std::move(eu), ev = std::move(ev), c](detail::Node& self) {
        const double* G = self.grad.data();
        const double* X = xn->data.data();
        const double* W = wn->data.data();
        if (xn->requires_grad) {
          auto& gx = xn->ensure_grad();
          for (std::size_t e = 0; e < eu.size(); ++e) {
            const double we = W[e];
            if (we == 0.0) continue;
            const std::size_t u = eu[e], v = ev[e];
            for (std::size_t j = 0; j < c; ++j) {
              gx[u * c + j] += we * G[v * c + j];
              gx[v * c + j] += we * G[u * c + j];
            }
          }
        }
        if (wn->requires_grad) {
          auto& gw = wn->ensure_grad();
          for (std::size_t e = 0; e < eu.size(); ++e) {
            const std::size_t u = eu[e], v = ev[e];
            double s = 0.0;
            for (std::size_t j = 0; j < c; ++j)
              s += G[v * c + j] * X[u * c + j] + G[u * c + j] * X[v * c + j];
            gw[e] += s;
          }
        }
      });
}

Tensor grad_reverse(const Tensor& x, double lambda) {
  require_2d(x, "grad_reverse");
  require(lambda >= 0.0, "grad_reverse: lambda must be nonnegative");
  std::vector<double> out(x.data().begin(), x.data().end());
  detail::Node* xn = x.node();
  return make_result(x.rows(), x.cols(), std::move(out), {x},
                     [xn, lambda](detail::Node& self) {
                       auto& g = xn->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] += -lambda * self.grad[i];
                     });
}

Tensor gumbel_sigmoid(const Tensor& logits, double tau, bool hard, Rng& rng) {
  require_2d(logits, "gumbel_sigmoid");
  require(tau > 0.0, "gumbel_sigmoid: tau must be positive");
  const std::size_t n = logits.numel();
  std::vector<double> soft(n);
  auto in = logits.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform_open();
    const double z = (in[i] + std::log(u) - std::log1p(-u)) / tau;
    soft[i] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                       : std::exp(z) / (1.0 + std::exp(z));
  }
  std::vector<double> out = soft;
  if (hard)
    for (auto& v : out) v = v >= 0.5 ? 1.0 : 0.0;
  detail::Node* ln = logits.node();
  return make_result(logits.rows(), logits.cols(), std::move(out), {logits},
                     [ln, soft = std::move(soft), tau](detail::Node& self) {
                       auto& g = ln->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] += self.grad[i] * soft[i] * (1.0 - soft[i]) / tau;
                     });
}

}  // namespace leci
