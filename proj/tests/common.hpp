// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.
//
// Shared helpers for the unit and acceptance tests: a central-difference
// gradient oracle and small graph fixtures.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "leci/graph.hpp"
#include "leci/motif_gen.hpp"
#include "leci/rng.hpp"
#include "leci/tensor.hpp"

namespace leci::test {

struct GradCheck {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

// Compares reverse-mode gradients of the scalar f() against central
// differences for each leaf. Relative error is |a - n| / max(1, |a|, |n|).
// At most `per_leaf` entries of each leaf are probed (evenly spaced). When
// `scale` is given, leaf k's analytic gradient is expected to equal scale[k]
// times the numeric one (e.g. -lambda behind a gradient reversal).
inline GradCheck grad_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves,
                            double h = 1e-4, std::size_t per_leaf = 64,
                            const std::vector<double>& scale = {}) {
  for (auto& l : leaves) l.zero_grad();
  Tensor out = f();
  backward(out);
  std::vector<std::vector<double>> analytic;
  for (auto& l : leaves) analytic.push_back(l.grad());
  GradCheck gc;
  NoGradGuard ng;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    auto data = leaves[k].mutable_data();
    const std::size_t n = data.size();
    const std::size_t stride = std::max<std::size_t>(1, n / per_leaf);
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = data[i];
      data[i] = orig + h;
      const double fp = f().item();
      data[i] = orig - h;
      const double fm = f().item();
      data[i] = orig;
      const double num = (scale.empty() ? 1.0 : scale[k]) * (fp - fm) / (2 * h);
      const double a = analytic[k][i];
      const double rel = std::abs(a - num) / std::max({1.0, std::abs(a), std::abs(num)});
      gc.max_rel_err = std::max(gc.max_rel_err, rel);
      ++gc.checked;
    }
  }
  return gc;
}

inline Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0,
                            double hi = 1.0, bool requires_grad = true) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return Tensor::from({r, c}, std::move(v), requires_grad);
}

// sum(f(x) * R) for a fixed random R: a scalar whose gradient exercises
// every output entry.
inline Tensor weighted_sum(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  Tensor r = random_tensor(y.rows(), y.cols(), rng, -1.0, 1.0, false);
  return sum(mul(y, r));
}

// Graph from an edge list with constant features and unit weights.
inline Graph make_graph(std::size_t n, const std::vector<std::pair<int, int>>& edges,
                        std::int64_t y = 0, std::int64_t env = 0, std::size_t feat = 1) {
  Graph g;
  g.num_nodes = n;
  g.feature_dim = feat;
  g.x.assign(n * feat, 1.0);
  for (auto [u, v] : edges) {
    g.edges.push_back({static_cast<std::uint32_t>(std::min(u, v)),
                       static_cast<std::uint32_t>(std::max(u, v))});
  }
  g.edge_weight.assign(g.edges.size(), 1.0);
  g.motif_mask.assign(g.edges.size(), false);
  g.y = y;
  g.env = env;
  return g;
}

// Random graph with random features.
inline Graph random_graph(Rng& rng, std::size_t n, std::size_t feat, double p = 0.35) {
  std::vector<std::pair<int, int>> e;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < p) e.emplace_back(static_cast<int>(i), static_cast<int>(j));
  Graph g = make_graph(n, e, static_cast<std::int64_t>(rng.below(3)),
                       static_cast<std::int64_t>(rng.below(3)), feat);
  for (auto& x : g.x) x = rng.uniform() * 2 - 1;
  return g;
}

// Small generated split for quick end-to-end tests.
inline GenConfig tiny_gen(std::uint64_t seed = 0, std::size_t per = 4) {
  GenConfig g;
  g.seed = seed;
  g.n_per_class_per_env = per;
  g.eval_per_class = per;
  return g;
}

// Per-test scratch directory under the system temp dir, emptied on entry.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("leci_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace leci::test
