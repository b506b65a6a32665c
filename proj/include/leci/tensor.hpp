// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.
//
// Minimal reverse-mode automatic differentiation over dense f64 matrices.
//
// A Tensor is a shared handle to a node in a dynamically built computation
// graph. Operations record a backward closure when any input requires a
// gradient; backward() walks the graph in reverse topological order.
// Every op works on rank-2 tensors; scalars are 1x1.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "leci/rng.hpp"

namespace leci {

using Shape = std::vector<std::size_t>;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates self.grad into the parents' grads.
  std::function<void(Node& self)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols,
                      bool requires_grad = false);
  static Tensor full(std::size_t rows, std::size_t cols, double value,
                     bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double operator()(std::size_t r, std::size_t c) const {
    return node_->data[r * cols() + c];
  }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient buffer; all zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  void zero_grad() { node_->grad.clear(); }

  // Same values, no history, no gradient tracking.
  Tensor detach() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// Fills d(loss)/d(t) into every ancestor t that requires a gradient.
// Leaf gradients accumulate across calls; interior gradients are recomputed.
void backward(const Tensor& loss);

// ---- core ops -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise with limited broadcasting: b may match a, or be 1xC (row),
// Rx1 (column) or 1x1 (scalar).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor one_minus(const Tensor& a);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log_sigmoid(const Tensor& x);
Tensor log(const Tensor& x);

// Row-wise log-softmax.
Tensor log_softmax(const Tensor& x);
// Mean over rows of -logp[i, target[i]].
Tensor nll_loss(const Tensor& logp, std::span<const std::int64_t> target);

// Inverted dropout; identity when !train or p == 0.
Tensor dropout(const Tensor& x, double p, bool train, Rng& rng);

// Row reductions grouped by segment id (ids need not be sorted).
Tensor segment_sum(const Tensor& x, std::span<const std::uint32_t> ids,
                   std::size_t num_segments);
Tensor segment_mean(const Tensor& x, std::span<const std::uint32_t> ids,
                    std::size_t num_segments);

Tensor gather_rows(const Tensor& x, std::span<const std::uint32_t> index);
Tensor concat_last_dim(const Tensor& a, const Tensor& b);

// Stacks b's rows under a's.
Tensor concat_rows(const Tensor& a, const Tensor& b);

// Per-column normalization. Train mode uses the batch statistics (biased
// variance) and folds them into the running buffers with `momentum`
// (running variance is unbiased); eval mode uses the running buffers.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, bool train,
                  double momentum = 0.1, double eps = 1e-5);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Weighted undirected message sum: out[v] = sum over edges {u,v} of w_e*x[u].
// Each undirected edge sends in both directions. w is Ex1.
Tensor propagate(const Tensor& x, const Tensor& w,
                 std::span<const std::uint32_t> edge_u,
                 std::span<const std::uint32_t> edge_v);

// ---- LECI specials --------------------------------------------------------

// Identity forward; backward multiplies the upstream gradient by -lambda.
Tensor grad_reverse(const Tensor& x, double lambda);

// Binary-concrete relaxation sigmoid((logits + log u - log(1-u)) / tau).
// With `hard`, the forward value is rounded to {0,1} and the soft gradient
// is used in the backward pass.
Tensor gumbel_sigmoid(const Tensor& logits, double tau, bool hard, Rng& rng);

}  // namespace leci
