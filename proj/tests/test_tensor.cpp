// Copyright 2026 The LECI Graph Authors. Apache 2.0 License.

#include <cmath>
#include <numeric>

#include "common.hpp"
#include "doctest.h"
#include "leci/error.hpp"
#include "leci/tensor.hpp"

using namespace leci;
using leci::test::grad_check;
using leci::test::random_tensor;
using leci::test::weighted_sum;

namespace {

constexpr double kTol = 1e-4;

// Pushes entries away from a kink at zero so central differences stay on
// one side of it.
Tensor away_from_zero(Tensor t) {
  for (auto& v : t.mutable_data())
    if (std::abs(v) < 0.05) v = v < 0 ? -0.05 - v : 0.05 + v;
  return t;
}

}  // namespace

TEST_CASE("matmul forward matches hand computation") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(c(0, 0) == 58);
  CHECK(c(0, 1) == 64);
  CHECK(c(1, 0) == 139);
  CHECK(c(1, 1) == 154);
  CHECK_THROWS_AS(matmul(a, a), ContractError);
}

TEST_CASE("elementwise ops broadcast rows, columns and scalars") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(add(a, Tensor::from({1, 2}, {10, 20}))(1, 1) == 24);
  CHECK(add(a, Tensor::from({2, 1}, {10, 20}))(1, 0) == 23);
  CHECK(mul(a, Tensor::scalar(2))(0, 1) == 4);
  CHECK(sub(a, a)(1, 1) == 0);
  CHECK_THROWS_AS(add(a, Tensor::from({3, 1}, {1, 2, 3})), ContractError);
}

TEST_CASE("finite differences agree with autodiff for every op") {
  Rng rng(7);
  Tensor a = random_tensor(4, 3, rng);
  Tensor b = random_tensor(3, 5, rng);
  Tensor c = random_tensor(4, 3, rng);
  Tensor row = random_tensor(1, 3, rng);
  Tensor col = random_tensor(4, 1, rng);
  Tensor s = random_tensor(1, 1, rng);
  Tensor pos = random_tensor(4, 3, rng, 0.5, 2.0);

  auto check = [&](const char* name, std::function<Tensor()> f, std::vector<Tensor> leaves) {
    auto gc = grad_check(f, leaves);
    INFO(name);
    CHECK(gc.checked > 0);
    CHECK(gc.max_rel_err < kTol);
  };

  check("matmul", [&] { return weighted_sum(matmul(a, b)); }, {a, b});
  check("add", [&] { return weighted_sum(add(a, c)); }, {a, c});
  check("add row", [&] { return weighted_sum(add(a, row)); }, {a, row});
  check("add col", [&] { return weighted_sum(add(a, col)); }, {a, col});
  check("add scalar tensor", [&] { return weighted_sum(add(a, s)); }, {a, s});
  check("sub", [&] { return weighted_sum(sub(a, row)); }, {a, row});
  check("mul", [&] { return weighted_sum(mul(a, c)); }, {a, c});
  check("mul col", [&] { return weighted_sum(mul(a, col)); }, {a, col});
  check("scale", [&] { return weighted_sum(scale(a, -2.5)); }, {a});
  check("add_scalar", [&] { return weighted_sum(add_scalar(a, 0.3)); }, {a});
  check("one_minus", [&] { return weighted_sum(one_minus(a)); }, {a});
  Tensor k = away_from_zero(random_tensor(4, 3, rng));
  check("relu", [&] { return weighted_sum(relu(k)); }, {k});
  check("sigmoid", [&] { return weighted_sum(sigmoid(scale(a, 3))); }, {a});
  check("log_sigmoid", [&] { return weighted_sum(log_sigmoid(scale(a, 3))); }, {a});
  check("log", [&] { return weighted_sum(log(pos)); }, {pos});
  check("log_softmax", [&] { return weighted_sum(log_softmax(scale(a, 2))); }, {a});
  const std::vector<std::int64_t> target = {0, 2, 1, 2};
  check("nll_loss", [&] { return nll_loss(log_softmax(a), target); }, {a});
  check("dropout", [&] {
    Rng r(3);
    return weighted_sum(dropout(a, 0.4, true, r));
  }, {a});
  const std::vector<std::uint32_t> ids = {2, 0, 2, 1};
  check("segment_sum", [&] { return weighted_sum(segment_sum(a, ids, 3)); }, {a});
  check("segment_mean", [&] { return weighted_sum(segment_mean(a, ids, 3)); }, {a});
  const std::vector<std::uint32_t> idx = {3, 0, 3, 1, 1};
  check("gather_rows", [&] { return weighted_sum(gather_rows(a, idx)); }, {a});
  check("concat_last_dim", [&] { return weighted_sum(concat_last_dim(a, c)); }, {a, c});
  check("concat_rows", [&] { return weighted_sum(concat_rows(a, row)); }, {a, row});
  Tensor gamma = random_tensor(1, 3, rng, 0.5, 1.5);
  Tensor beta = random_tensor(1, 3, rng);
  Tensor rm = Tensor::zeros(1, 3), rv = Tensor::full(1, 3, 1.0);
  check("batch_norm train", [&] {
    return weighted_sum(batch_norm(a, gamma, beta, rm, rv, true));
  }, {a, gamma, beta});
  Tensor rm2 = Tensor::from({1, 3}, {0.1, -0.2, 0.3}),
         rv2 = Tensor::from({1, 3}, {0.5, 1.5, 2.0});
  check("batch_norm eval", [&] {
    return weighted_sum(batch_norm(a, gamma, beta, rm2, rv2, false));
  }, {a, gamma, beta});
  check("sum", [&] { return scale(sum(a), 0.7); }, {a});
  check("mean", [&] { return scale(mean(a), 0.7); }, {a});
  const std::vector<std::uint32_t> eu = {0, 1, 2, 0}, ev = {1, 2, 3, 3};
  Tensor w = random_tensor(4, 1, rng, 0.0, 1.0);
  check("propagate", [&] { return weighted_sum(propagate(a, w, eu, ev)); }, {a, w});
  check("grad_reverse", [&] { return weighted_sum(mul(grad_reverse(a, 0.5), c)); }, {c});
  check("gumbel_sigmoid soft", [&] {
    Rng r(11);
    return weighted_sum(gumbel_sigmoid(a, 0.7, false, r));
  }, {a});
}

TEST_CASE("batch_norm normalizes and tracks running statistics") {
  Tensor x = Tensor::from({4, 1}, {1, 2, 3, 6});
  Tensor g = Tensor::full(1, 1, 1.0), b = Tensor::zeros(1, 1);
  Tensor rm = Tensor::zeros(1, 1), rv = Tensor::full(1, 1, 1.0);
  Tensor y = batch_norm(x, g, b, rm, rv, true);
  const double mu = 3.0, var = 3.5;  // biased: (4+1+0+9)/4
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(y(i, 0) == doctest::Approx((x(i, 0) - mu) / std::sqrt(var + 1e-5)).epsilon(1e-12));
  CHECK(rm(0, 0) == doctest::Approx(0.1 * mu).epsilon(1e-15));
  CHECK(rv(0, 0) == doctest::Approx(0.9 + 0.1 * (14.0 / 3.0)).epsilon(1e-15));
  Tensor e = batch_norm(x, g, b, rm, rv, false);
  CHECK(e(3, 0) == doctest::Approx((6 - rm(0, 0)) / std::sqrt(rv(0, 0) + 1e-5)));
}

TEST_CASE("propagate sends messages both ways with weights") {
  Tensor x = Tensor::from({3, 1}, {1, 10, 100});
  Tensor w = Tensor::from({2, 1}, {0.5, 0.0});
  const std::vector<std::uint32_t> eu = {0, 1}, ev = {1, 2};
  Tensor out = propagate(x, w, eu, ev);
  CHECK(out(0, 0) == 5);
  CHECK(out(1, 0) == 0.5);
  CHECK(out(2, 0) == 0);
  CHECK_THROWS_AS(propagate(x, Tensor::zeros(3, 1), eu, ev), ContractError);
}

TEST_CASE("grad_reverse is identity forward and scales gradients by -lambda") {
  Tensor x = Tensor::from({1, 3}, {1, -2, 3}, true);
  Tensor y = grad_reverse(x, 2.0);
  CHECK(std::equal(y.data().begin(), y.data().end(), x.data().begin()));
  backward(sum(y));
  for (double g : x.grad()) CHECK(g == -2.0);
  x.zero_grad();
  backward(sum(grad_reverse(x, 0.0)));
  for (double g : x.grad()) CHECK(g == 0.0);
  CHECK_THROWS_AS(grad_reverse(x, -1.0), ContractError);
}

TEST_CASE("leaf gradients accumulate and NoGradGuard stops recording") {
  Tensor x = Tensor::from({1, 2}, {1, 2}, true);
  backward(sum(x));
  backward(sum(scale(x, 3)));
  CHECK(x.grad() == std::vector<double>{4, 4});
  {
    NoGradGuard ng;
    CHECK_FALSE(grad_enabled());
    Tensor y = scale(x, 2);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(grad_enabled());
}

TEST_CASE("log_softmax rows normalize and nll of uniform is ln C") {
  Rng rng(1);
  Tensor a = random_tensor(5, 4, rng, -3, 3, false);
  Tensor lp = log_softmax(a);
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 4; ++j) s += std::exp(lp(i, j));
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  const std::vector<std::int64_t> t = {0, 1, 2};
  CHECK(nll_loss(log_softmax(Tensor::zeros(3, 3)), t).item() ==
        doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

// E[sigmoid((l + L) / tau)] for standard logistic L, by midpoint quadrature
// over u in (0,1): L = log u - log(1 - u).
double soft_gumbel_mean(double logit, double tau) {
  const int n = 200000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = (i + 0.5) / n;
    acc += 1.0 / (1.0 + std::exp(-(logit + std::log(u) - std::log1p(-u)) / tau));
  }
  return acc / n;
}

TEST_CASE("gumbel_sigmoid sample statistics") {
  Rng rng(2024);
  const std::size_t n = 100000;
  for (double logit : {-2.0, 0.0, 2.0}) {
    CAPTURE(logit);
    Tensor l = Tensor::full(n, 1, logit);
    // Hard samples are Bernoulli(sigmoid(logit)) draws.
    Tensor h = gumbel_sigmoid(l, 1.0, true, rng);
    for (double v : h.data()) REQUIRE((v == 0.0 || v == 1.0));
    const double mh = std::accumulate(h.data().begin(), h.data().end(), 0.0) / n;
    CHECK(std::abs(mh - 1.0 / (1.0 + std::exp(-logit))) < 0.01);
    // Soft samples concentrate around the quadrature mean, which is pulled
    // toward 1/2 relative to sigmoid(logit) when logit != 0.
    Tensor s = gumbel_sigmoid(l, 1.0, false, rng);
    const double ms = std::accumulate(s.data().begin(), s.data().end(), 0.0) / n;
    CHECK(std::abs(ms - soft_gumbel_mean(logit, 1.0)) < 0.01);
  }
  Tensor big = Tensor::full(n, 1, 10.0);
  Tensor s = gumbel_sigmoid(big, 1.0, false, rng);
  CHECK(std::accumulate(s.data().begin(), s.data().end(), 0.0) / n >= 0.99);
  CHECK_THROWS_AS(gumbel_sigmoid(big, 0.0, false, rng), ContractError);
}

TEST_CASE("hard gumbel passes the soft gradient straight through") {
  Tensor l = Tensor::from({3, 1}, {-1, 0.2, 1.5}, true);
  Rng r1(5), r2(5);
  Tensor hard = gumbel_sigmoid(l, 1.0, true, r1);
  backward(sum(hard));
  const auto g_hard = l.grad();
  l.zero_grad();
  backward(sum(gumbel_sigmoid(l, 1.0, false, r2)));
  CHECK(g_hard == l.grad());
}

TEST_CASE("dropout keeps expectation and is identity in eval mode") {
  Rng rng(3);
  Tensor x = Tensor::full(20000, 1, 1.0);
  Tensor y = dropout(x, 0.5, true, rng);
  const double m = std::accumulate(y.data().begin(), y.data().end(), 0.0) / 20000;
  CHECK(std::abs(m - 1.0) < 0.03);
  Tensor z = dropout(x, 0.5, false, rng);
  CHECK(std::equal(z.data().begin(), z.data().end(), x.data().begin()));
}

TEST_CASE("rng forks are independent of parent consumption") {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) a.next_u64();
  CHECK(a.fork(3).next_u64() == b.fork(3).next_u64());
  CHECK(a.fork(3).next_u64() != a.fork(4).next_u64());
  Rng c(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform_open();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}
