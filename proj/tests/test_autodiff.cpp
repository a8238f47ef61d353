// Copyright 2026 The gmvae Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "gmvae/autodiff.hpp"
#include "gmvae/rng.hpp"

using namespace gmvae;
using namespace gmvae::ad;

namespace {

// Finite-difference check of a unary op under a random linear read-out, so
// every output entry contributes a distinct weight to the loss.
using Unary = std::function<Var(Var)>;
using Binary = std::function<Var(Var, Var)>;

double check_unary(const Unary& op, Matrix x, Rng& rng) {
  Tensor tx(std::move(x), true);
  Matrix w;
  {
    Tape probe;
    const Matrix out = op(probe.leaf(tx)).value();
    w = rng.normal_matrix(out.rows(), out.cols());
  }
  std::vector<NamedTensor> params{{"x", &tx}};
  auto f = [&](Tape& tape, std::span<const Var> v) { return sum(op(v[0]) * tape.constant(w)); };
  return grad_check(f, params, 1e-5, 1.0).max_rel_error;
}

double check_binary(const Binary& op, Matrix a, Matrix b, Rng& rng) {
  Tensor ta(std::move(a), true), tb(std::move(b), true);
  Matrix w;
  {
    Tape probe;
    const Matrix out = op(probe.leaf(ta), probe.leaf(tb)).value();
    w = rng.normal_matrix(out.rows(), out.cols());
  }
  std::vector<NamedTensor> params{{"a", &ta}, {"b", &tb}};
  auto f = [&](Tape& tape, std::span<const Var> v) { return sum(op(v[0], v[1]) * tape.constant(w)); };
  return grad_check(f, params, 1e-5, 1.0).max_rel_error;
}

Index small(Rng& rng) { return 1 + static_cast<Index>(rng.below(4)); }

Matrix positive(Rng& rng, Index r, Index c) {
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(0.3, 3.0);
  return m;
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  struct Case {
    const char* name;
    Unary op;
    bool positive;
  };
  const std::vector<Case> cases{
      {"exp", [](Var x) { return exp(x); }, false},
      {"log", [](Var x) { return log(x); }, true},
      {"tanh", [](Var x) { return tanh(x); }, false},
      {"softplus", [](Var x) { return softplus(x); }, false},
      {"square", [](Var x) { return square(x); }, false},
      {"sqrt", [](Var x) { return sqrt(x); }, true},
      {"neg", [](Var x) { return neg(x); }, false},
      {"scale", [](Var x) { return scale(x, -1.7); }, false},
      {"shift", [](Var x) { return shift(x, 0.4); }, false},
  };
  Rng rng(101);
  for (const auto& c : cases) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Index r = small(rng), cols = small(rng);
      Matrix x = c.positive ? positive(rng, r, cols) : rng.normal_matrix(r, cols);
      worst = std::max(worst, check_unary(c.op, x, rng));
    }
    INFO(c.name);
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("binary elementwise ops, with and without row broadcast") {
  const std::vector<std::pair<const char*, Binary>> cases{
      {"add", [](Var a, Var b) { return a + b; }},
      {"sub", [](Var a, Var b) { return a - b; }},
      {"mul", [](Var a, Var b) { return a * b; }},
      {"div", [](Var a, Var b) { return a / b; }},
  };
  Rng rng(202);
  for (const auto& [name, op] : cases) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Index r = small(rng), c = small(rng);
      const Index rb = trial % 2 == 0 ? r : 1;
      Matrix b = std::string(name) == "div" ? positive(rng, rb, c) : rng.normal_matrix(rb, c);
      worst = std::max(worst, check_binary(op, rng.normal_matrix(r, c), b, rng));
    }
    INFO(name);
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("matmul and reductions match finite differences") {
  Rng rng(303);
  double worst_mm = 0.0, worst_red = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index r = small(rng), k = small(rng), c = small(rng);
    worst_mm = std::max(worst_mm, check_binary([](Var a, Var b) { return matmul(a, b); },
                                               rng.normal_matrix(r, k), rng.normal_matrix(k, c), rng));
    const Matrix x = rng.normal_matrix(r, c);
    worst_red = std::max(worst_red, check_unary([](Var v) { return sum(v); }, x, rng));
    worst_red = std::max(worst_red, check_unary([](Var v) { return mean(v); }, x, rng));
    worst_red = std::max(worst_red, check_unary([](Var v) { return sum_rows(v); }, x, rng));
    worst_red = std::max(worst_red, check_unary([](Var v) { return sum_cols(v); }, x, rng));
    worst_red = std::max(worst_red, check_unary([](Var v) { return mean_rows(v); }, x, rng));
    worst_red = std::max(worst_red, check_unary([](Var v) { return log_sum_exp(v); }, x, rng));
  }
  CHECK(worst_mm < 1e-5);
  CHECK(worst_red < 1e-5);
}

TEST_CASE("shape ops match finite differences") {
  Rng rng(404);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index r = 2 + static_cast<Index>(rng.below(3)), c = 2 + static_cast<Index>(rng.below(3));
    const Matrix x = rng.normal_matrix(r, c);
    worst = std::max(worst, check_unary([](Var v) { return transpose(v); }, x, rng));
    worst = std::max(worst, check_unary([](Var v) { return slice_rows(v, 1, 1); }, x, rng));
    worst = std::max(worst, check_unary([](Var v) { return slice_cols(v, 0, 2); }, x, rng));
    worst = std::max(worst, check_unary([](Var v) { return concat_cols({v, square(v)}); }, x, rng));
    worst = std::max(worst, check_unary([](Var v) { return concat_rows({v, v * 2.0}); }, x, rng));
    worst = std::max(worst, check_unary(
                                [](Var v) {
                                  const std::vector<Index> rows{1, 0, 1, 1};
                                  return gather_rows(v, rows);
                                },
                                x, rng));
    const Matrix row = rng.normal_matrix(1, c);
    worst = std::max(worst, check_unary([r, c](Var v) { return broadcast(v, r, c); }, row, rng));
    const Matrix one = rng.normal_matrix(1, 1);
    worst = std::max(worst, check_unary([r, c](Var v) { return broadcast(v, r, c); }, one, rng));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("fan-out accumulates gradients") {
  Tensor x(Matrix::Constant(1, 1, 3.0), true);
  Tape tape;
  Var v = tape.leaf(x);
  backward(tape, sum(v * v + v));  // d/dx (x^2 + x) = 2x + 1
  CHECK(x.grad()(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("leaf gradients accumulate across backward calls until cleared") {
  Tensor x(Matrix::Constant(1, 2, 1.5), true);
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    backward(tape, sum(tape.leaf(x) * 2.0));
  }
  CHECK(x.grad()(0, 1) == doctest::Approx(4.0));
  x.zero_grad();
  CHECK(x.grad().isZero());
}

TEST_CASE("loss independent of parameters leaves them without gradient") {
  Tensor x(Matrix::Ones(2, 2), true);
  Tape tape;
  tape.leaf(x);
  Var c = tape.constant(5.0);
  backward(tape, c * 2.0);
  CHECK_FALSE(x.has_grad());
  CHECK(tape.last_backward_visits() == 0);
}

TEST_CASE("frozen tensors receive no gradient") {
  Tensor w(Matrix::Ones(2, 2), false), x(Matrix::Ones(2, 2), true);
  Tape tape;
  backward(tape, sum(tape.leaf(w) * tape.leaf(x)));
  CHECK_FALSE(w.has_grad());
  CHECK(x.has_grad());
}

TEST_CASE("backward rejects bad losses") {
  Tensor x(Matrix::Ones(2, 2), true);
  Tape tape, other;
  Var v = tape.leaf(x);
  CHECK_THROWS_AS(backward(tape, v), ShapeError);
  Var foreign = other.constant(1.0);
  CHECK_THROWS_AS(backward(tape, foreign), std::invalid_argument);
  CHECK_THROWS_AS(backward(tape, Var()), std::invalid_argument);
}

TEST_CASE("shape mismatches throw ShapeError") {
  Tape tape;
  Var a = tape.constant(Matrix::Ones(2, 3));
  Var b = tape.constant(Matrix::Ones(3, 2));
  CHECK_THROWS_AS(a + b, ShapeError);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(slice_rows(a, 1, 2), ShapeError);
  CHECK_THROWS_AS(broadcast(a, 4, 3), ShapeError);
  // (1 x C) broadcasts against (N x C) in either order.
  Var row = tape.constant(Matrix::Ones(1, 3));
  CHECK((a + row).rows() == 2);
  CHECK((row * a).rows() == 2);
}

TEST_CASE("log and sqrt reject non-positive input") {
  Tape tape;
  CHECK_THROWS_AS(log(tape.constant(0.0)), std::domain_error);
  CHECK_THROWS_AS(sqrt(tape.constant(-1.0)), std::domain_error);
}

TEST_CASE("softplus is stable and exact at zero") {
  Tape tape;
  CHECK(softplus(tape.constant(0.0)).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(softplus(tape.constant(800.0)).item() == doctest::Approx(800.0));
  CHECK(softplus(tape.constant(-800.0)).item() >= 0.0);
}

TEST_CASE("log_sum_exp is shift invariant and does not overflow") {
  Rng rng(7);
  const Matrix x = rng.normal_matrix(1, 6);
  Tape tape;
  const double base = log_sum_exp(tape.constant(x)).item();
  const double shifted = log_sum_exp(tape.constant(Matrix(x.array() + 1000.0))).item();
  CHECK(shifted - 1000.0 == doctest::Approx(base).epsilon(1e-12));
  CHECK(std::isfinite(log_sum_exp(tape.constant(Matrix::Constant(1, 3, 1e5))).item()));
}

TEST_CASE("grad_check reports per-tensor errors and restores flags") {
  Tensor a(Matrix::Constant(2, 2, 0.5), false);
  std::vector<NamedTensor> params{{"a", &a}};
  auto f = [](Tape&, std::span<const Var> v) { return sum(exp(v[0])); };
  const GradCheckReport rep = grad_check(f, params, 1e-5, 1e-6);
  CHECK(rep.passed);
  REQUIRE(rep.entries.size() == 1);
  CHECK(rep.entries[0].name == "a");
  CHECK_FALSE(a.requires_grad());
}

TEST_CASE("op names") {
  CHECK(std::string(op_name(OpKind::kMatMul)) == "matmul");
  Tape tape;
  Var v = tape.constant(1.0);
  CHECK(tape.kind(v.id()) == OpKind::kConstant);
}
