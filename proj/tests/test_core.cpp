#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "mmtraj/errors.hpp"
#include "mmtraj/ops.hpp"
#include "support.hpp"

using namespace mmtraj;
using testing::grad_check;
using testing::random_tensor;

namespace {

constexpr double kGradTol = 1e-4;

Tensor t2(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor(Shape{r, c}, std::move(v)); }

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("matmul examples") {
  std::mt19937_64 rng(1);
  const Tensor a = random_tensor(rng, {2, 2});
  const Tensor eye = t2(2, 2, {1, 0, 0, 1});
  CHECK(values(ops::matmul(eye, a)) == values(a));

  const Tensor p = ops::matmul(t2(2, 2, {1, 2, 3, 4}), t2(2, 1, {1, 1}));
  CHECK(p.shape() == Shape{2, 1});
  CHECK(values(p) == std::vector<double>{3, 7});

  // Batched with a shared right operand.
  Tensor batch(Shape{2, 1, 2}, {1, 2, 3, 4});
  CHECK(values(ops::matmul(batch, t2(2, 1, {1, 1}))) == std::vector<double>{3, 7});
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    ops::matmul(Tensor(Shape{2, 3}), Tensor(Shape{2, 3}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches finite differences") {
  std::mt19937_64 rng(2);
  auto f = [](const std::vector<Tensor>& in) { return ops::sum_all(ops::matmul(in[0], in[1])); };
  CHECK(grad_check(f, {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})}) < 1e-6);
  auto g = [](const std::vector<Tensor>& in) {
    return ops::sum_all(ops::square(ops::matmul(in[0], in[1])));
  };
  CHECK(grad_check(g, {random_tensor(rng, {2, 3, 4}), random_tensor(rng, {2, 4, 2})}) < kGradTol);
  CHECK(grad_check(g, {random_tensor(rng, {2, 3, 4}), random_tensor(rng, {4, 2})}) < kGradTol);
}

TEST_CASE("softmax examples") {
  const Tensor u = ops::softmax(Tensor(Shape{3}, {0, 0, 0}), 0);
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const Tensor p = ops::softmax(Tensor(Shape{2}, {0, std::log(3.0)}), 0);
  CHECK(p.data()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p.data()[1] == doctest::Approx(0.75).epsilon(1e-12));

  std::mt19937_64 rng(3);
  const Tensor x = random_tensor(rng, {4, 5}, 3.0);
  Tensor shifted = x.clone();
  for (double& v : shifted.mutable_data()) v += 17.25;
  const Tensor a = ops::softmax(x, 1), b = ops::softmax(shifted, 1);
  CHECK(testing::max_abs_diff(a, b) < 1e-15);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      s += a.at({r, c});
      CHECK(a.at({r, c}) > 0.0);
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("softmax along a middle axis and under a mask") {
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor(rng, {2, 3, 4});
  const Tensor s = ops::softmax(x, 1);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 3; ++j) sum += s.at({i, j, k});
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }

  Mask m(Shape{2, 3}, true);
  m.set(0, 2, false);
  m.set(1, 0, false);
  m.set(1, 1, false);
  m.set(1, 2, false);
  const Tensor y = ops::softmax(Tensor(Shape{2, 3}, {1, 2, 1e9, 5, 6, 7}), 1, &m);
  CHECK(y.at({0, 2}) == 0.0);
  CHECK(y.at({0, 0}) + y.at({0, 1}) == doctest::Approx(1.0).epsilon(1e-15));
  for (std::size_t j = 0; j < 3; ++j) CHECK(y.at({1, j}) == 0.0);
}

TEST_CASE("softmax rejects NaN") {
  Tensor x(Shape{2}, {0.0, std::numeric_limits<double>::quiet_NaN()});
  CHECK_THROWS_AS(ops::softmax(x, 0), NumericError);
}

TEST_CASE("softmax gradient, masked and unmasked") {
  std::mt19937_64 rng(5);
  const Tensor w = random_tensor(rng, {3, 4});
  auto f = [&](const std::vector<Tensor>& in) { return ops::sum_all(ops::mul(ops::softmax(in[0], 1), w)); };
  CHECK(grad_check(f, {random_tensor(rng, {3, 4})}) < kGradTol);

  Mask m(Shape{3, 4}, true);
  m.set(0, 1, false);
  m.set(2, 3, false);
  auto g = [&](const std::vector<Tensor>& in) {
    return ops::sum_all(ops::mul(ops::softmax(in[0], 1, &m), w));
  };
  CHECK(grad_check(g, {random_tensor(rng, {3, 4})}) < kGradTol);
}

TEST_CASE("layer_norm examples") {
  const Tensor ones(Shape{4}, 1.0), zeros(Shape{4}, 0.0);
  const Tensor c = ops::layer_norm(Tensor(Shape{1, 4}, {5, 5, 5, 5}), ones, zeros);
  for (double v : c.data()) CHECK(v == 0.0);

  const Tensor g2(Shape{2}, 1.0), b2(Shape{2}, 0.0);
  const Tensor y = ops::layer_norm(Tensor(Shape{1, 2}, {1, -1}), g2, b2);
  // Population variance 1, so only eps separates the result from [1, -1].
  CHECK(y.data()[0] == doctest::Approx(1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-14));
  CHECK(y.data()[1] == doctest::Approx(-1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-14));

  std::mt19937_64 rng(6);
  const Tensor x = random_tensor(rng, {5, 7}, 4.0);
  const Tensor z = ops::layer_norm(x, Tensor(Shape{7}, 1.0), Tensor(Shape{7}, 0.0));
  for (std::size_t r = 0; r < 5; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t k = 0; k < 7; ++k) mean += z.at({r, k}) / 7.0;
    for (std::size_t k = 0; k < 7; ++k) var += (z.at({r, k}) - mean) * (z.at({r, k}) - mean) / 7.0;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(ops::layer_norm(Tensor(Shape{3, 0}), Tensor(Shape{0}), Tensor(Shape{0})), DimensionError);
}

TEST_CASE("layer_norm gradient") {
  std::mt19937_64 rng(7);
  const Tensor w = random_tensor(rng, {3, 5});
  auto f = [&](const std::vector<Tensor>& in) {
    return ops::sum_all(ops::mul(ops::layer_norm(in[0], in[1], in[2]), w));
  };
  CHECK(grad_check(f, {random_tensor(rng, {3, 5}), random_tensor(rng, {5}), random_tensor(rng, {5})}) < 1e-5);
}

TEST_CASE("cumsum examples and inverse") {
  CHECK(values(ops::cumsum(Tensor(Shape{3}, {1, 2, 3}), 0)) == std::vector<double>{1, 3, 6});
  CHECK(values(ops::cumsum(Tensor(Shape{4}, {2, 1, 0, 0}), 0)) == std::vector<double>{2, 3, 3, 3});

  std::mt19937_64 rng(8);
  const Tensor x = random_tensor(rng, {3, 6, 2});
  const Tensor c = ops::cumsum(x, 1);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(std::abs(c.at({i, 0, k}) - x.at({i, 0, k})) < 1e-12);
      for (std::size_t t = 1; t < 6; ++t) {
        CHECK(std::abs((c.at({i, t, k}) - c.at({i, t - 1, k})) - x.at({i, t, k})) < 1e-12);
      }
    }
  }
}

TEST_CASE("cumsum gradient") {
  std::mt19937_64 rng(9);
  const Tensor w = random_tensor(rng, {2, 4, 3});
  for (std::size_t axis = 0; axis < 3; ++axis) {
    auto f = [&](const std::vector<Tensor>& in) { return ops::sum_all(ops::mul(ops::cumsum(in[0], axis), w)); };
    CHECK(grad_check(f, {random_tensor(rng, {2, 4, 3})}) < 1e-6);
  }
}

TEST_CASE("mean examples") {
  CHECK(ops::mean(Tensor(Shape{2}, {2, 4}), 0).item() == 3.0);
  Mask m(Shape{3}, true);
  m.data[2] = 0;
  CHECK(ops::mean(Tensor(Shape{3}, {2, 4, 999}), 0, &m).item() == 3.0);

  Mask none(Shape{2}, false);
  CHECK_THROWS_AS(ops::mean(Tensor(Shape{2}, {1, 2}), 0, &none), DegenerateInputError);
}

TEST_CASE("masked mean gradient is 1/count on kept entries, 0 elsewhere") {
  Mask m(Shape{5}, true);
  m.data[1] = 0;
  m.data[4] = 0;
  std::vector<Tensor> in{Tensor(Shape{5}, {1, 2, 3, 4, 5})};
  auto f = [&](const std::vector<Tensor>& x) { return ops::mean(x[0], 0, &m); };
  const auto analytic = testing::analytic_grads(f, in);
  const auto numeric = testing::numeric_grad(f, in, 0);
  const std::vector<double> expect = {1.0 / 3, 0, 1.0 / 3, 1.0 / 3, 0};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(analytic[0][i] == doctest::Approx(expect[i]).epsilon(1e-15));
    CHECK(std::abs(numeric[i] - expect[i]) < 1e-9);
  }
}

TEST_CASE("elementwise and structural op gradients") {
  std::mt19937_64 rng(10);
  const auto r = [&](Shape s) { return random_tensor(rng, std::move(s)); };
  const Tensor w = r({3, 4});

  struct Case {
    const char* name;
    testing::ScalarFn f;
    std::vector<Tensor> in;
  };
  std::vector<Case> cases;
  cases.push_back({"add", [&](const auto& x) { return ops::sum_all(ops::mul(ops::add(x[0], x[1]), w)); },
                   {r({3, 4}), r({3, 4})}});
  cases.push_back({"add suffix broadcast",
                   [&](const auto& x) { return ops::sum_all(ops::mul(ops::add(x[0], x[1]), w)); },
                   {r({3, 4}), r({4})}});
  cases.push_back({"sub", [&](const auto& x) { return ops::sum_all(ops::mul(ops::sub(x[0], x[1]), w)); },
                   {r({3, 4}), r({4})}});
  cases.push_back({"mul", [&](const auto& x) { return ops::sum_all(ops::mul(x[0], x[1])); }, {r({3, 4}), r({4})}});
  cases.push_back({"scale/neg/add_scalar",
                   [&](const auto& x) {
                     return ops::sum_all(ops::mul(ops::neg(ops::add_scalar(ops::scale(x[0], 2.5), 1.0)), w));
                   },
                   {r({3, 4})}});
  cases.push_back({"transpose",
                   [&](const auto& x) { return ops::sum_all(ops::mul(ops::transpose(x[0]), ops::transpose(w))); },
                   {r({3, 4})}});
  cases.push_back({"permute",
                   [&](const auto& x) {
                     return ops::sum_all(ops::square(ops::mul(ops::permute(x[0], {2, 0, 1}), x[1])));
                   },
                   {r({2, 3, 4}), r({4, 2, 3})}});
  cases.push_back({"reshape", [&](const auto& x) { return ops::sum_all(ops::mul(ops::reshape(x[0], {3, 4}), w)); },
                   {r({12})}});
  cases.push_back({"expand",
                   [&](const auto& x) { return ops::sum_all(ops::mul(ops::expand(x[0], {3, 4}), w)); },
                   {r({3, 1})}});
  cases.push_back({"concat",
                   [&](const auto& x) { return ops::sum_all(ops::mul(ops::concat({x[0], x[1]}, 1), w)); },
                   {r({3, 1}), r({3, 3})}});
  cases.push_back({"slice",
                   [&](const auto& x) {
                     return ops::sum_all(ops::mul(ops::slice(x[0], 1, 1, 4), w));
                   },
                   {r({3, 6})}});
  cases.push_back({"sum axis",
                   [&](const auto& x) { return ops::sum_all(ops::square(ops::sum(x[0], 1))); }, {r({3, 4})}});
  cases.push_back({"mean_all", [&](const auto& x) { return ops::mean_all(ops::mul(x[0], x[0])); }, {r({3, 4})}});
  cases.push_back({"exp", [&](const auto& x) { return ops::sum_all(ops::mul(ops::exp(x[0]), w)); }, {r({3, 4})}});
  cases.push_back({"log",
                   [&](const auto& x) { return ops::sum_all(ops::mul(ops::log(ops::add_scalar(ops::square(x[0]), 0.5)), w)); },
                   {r({3, 4})}});
  cases.push_back({"sqrt",
                   [&](const auto& x) { return ops::sum_all(ops::mul(ops::sqrt(ops::add_scalar(ops::square(x[0]), 0.5)), w)); },
                   {r({3, 4})}});
  cases.push_back({"relu", [&](const auto& x) { return ops::sum_all(ops::mul(ops::relu(x[0]), w)); }, {r({3, 4})}});
  cases.push_back({"gelu", [&](const auto& x) { return ops::sum_all(ops::mul(ops::gelu(x[0]), w)); }, {r({3, 4})}});
  cases.push_back({"softplus",
                   [&](const auto& x) { return ops::sum_all(ops::mul(ops::softplus(x[0]), w)); }, {r({3, 4})}});
  cases.push_back({"clamp_min",
                   [&](const auto& x) { return ops::sum_all(ops::mul(ops::clamp_min(x[0], 0.1), w)); }, {r({3, 4})}});

  Mask keep(Shape{3, 4}, true);
  keep.set(0, 0, false);
  keep.set(2, 1, false);
  cases.push_back({"where", [&](const auto& x) { return ops::sum_all(ops::mul(ops::where(keep, x[0], 3.0), w)); },
                   {r({3, 4})}});
  cases.push_back({"masked_select",
                   [&](const auto& x) { return ops::sum_all(ops::square(ops::masked_select(x[0], keep))); },
                   {r({3, 4})}});
  cases.push_back({"take_last",
                   [&](const auto& x) { return ops::sum_all(ops::square(ops::take_last(x[0], {3, 0, 2}))); },
                   {r({3, 4})}});

  for (auto& c : cases) {
    CAPTURE(c.name);
    CHECK(grad_check(c.f, c.in) < kGradTol);
  }
}

TEST_CASE("where and masked_select give no gradient to dropped entries") {
  Mask keep(Shape{3}, true);
  keep.data[1] = 0;
  std::vector<Tensor> in{Tensor(Shape{3}, {1, 2, 3})};
  const auto g = testing::analytic_grads(
      [&](const auto& x) { return ops::sum_all(ops::square(ops::where(keep, x[0], 7.0))); }, in);
  CHECK(g[0] == std::vector<double>{2, 0, 6});
  const auto h = testing::analytic_grads(
      [&](const auto& x) { return ops::sum_all(ops::masked_select(x[0], keep)); }, in);
  CHECK(h[0] == std::vector<double>{1, 0, 1});
}

TEST_CASE("backward examples") {
  Tensor x = testing::leaf(Tensor::scalar(3.0));
  {
    Tape tape;
    tape.backward(ops::scale(x, 1.0));
  }
  CHECK(x.grad()[0] == 1.0);
  x.zero_grad();
  {
    Tape tape;
    tape.backward(ops::square(x));
  }
  CHECK(x.grad()[0] == 6.0);
}

TEST_CASE("repeated backward accumulates additively") {
  Tensor x = testing::leaf(Tensor::scalar(3.0));
  for (int i = 0; i < 3; ++i) {
    Tape tape;
    tape.backward(ops::square(x));
  }
  CHECK(x.grad()[0] == 18.0);
  x.zero_grad();
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("backward usage errors") {
  Tensor x = testing::leaf(Tensor(Shape{2}, {1, 2}));
  Tape tape;
  CHECK_THROWS_AS(tape.backward(ops::square(x)), UsageError);
  CHECK_THROWS_AS(tape.backward(Tensor::scalar(1.0)), UsageError);
}

TEST_CASE("shared subexpressions match the expanded graph") {
  std::mt19937_64 rng(11);
  const Tensor x0 = random_tensor(rng, {4});
  // f = sum(u*u + u) with u = exp(x) reused, versus rebuilding u each time.
  std::vector<Tensor> a{x0.clone()}, b{x0.clone()};
  const auto shared = testing::analytic_grads(
      [](const auto& in) {
        const Tensor u = ops::exp(in[0]);
        return ops::sum_all(ops::add(ops::mul(u, u), u));
      },
      a);
  const auto expanded = testing::analytic_grads(
      [](const auto& in) {
        return ops::sum_all(ops::add(ops::mul(ops::exp(in[0]), ops::exp(in[0])), ops::exp(in[0])));
      },
      b);
  for (std::size_t i = 0; i < 4; ++i) CHECK(shared[0][i] == doctest::Approx(expanded[0][i]).epsilon(1e-14));
}

TEST_CASE("no graph is recorded without a tape") {
  Tensor x = testing::leaf(Tensor(Shape{2}, {1, 2}));
  const Tensor y = ops::square(x);
  CHECK(y.node()->parents.empty());
}

TEST_CASE("tensor shape invariants") {
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  Tensor t(Shape{2, 3}, 1.5);
  CHECK(t.numel() == 6);
  Tensor alias = t;
  alias.at({1, 2}) = 4.0;
  CHECK(t.at({1, 2}) == 4.0);
  Tensor copy = t.clone();
  copy.at({0, 0}) = -1.0;
  CHECK(t.at({0, 0}) == 1.5);
}
