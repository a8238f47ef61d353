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

// Reverse-mode differentiation over dense row-major matrices.
//
// A Tensor is a persistent value (typically a trainable parameter). A Tape
// records the operations applied during one forward evaluation; Var is a
// lightweight handle to a value on a tape. Calling backward() on a scalar Var
// propagates adjoints in reverse tape order and accumulates them into the
// grad() of every leaf Tensor registered with requires_grad.
//
// Shapes are two-dimensional (rows x cols); a scalar is 1x1. The only implicit
// broadcast is the leading-dimension one: an (N x C) operand combined with a
// (1 x C) operand in add/sub/mul/div.

#ifndef GMVAE_AUTODIFF_HPP_
#define GMVAE_AUTODIFF_HPP_

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmvae/types.hpp"

namespace gmvae::ad {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);
  static Tensor zeros(Index rows, Index cols, bool requires_grad = false);

  std::vector<Index> shape() const { return {value_.rows(), value_.cols()}; }
  Index rows() const { return value_.rows(); }
  Index cols() const { return value_.cols(); }
  Index size() const { return value_.size(); }

  const Matrix& value() const { return value_; }
  Matrix& value() { return value_; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  /// Gradient accumulator; empty until the first backward pass touches it.
  bool has_grad() const { return grad_.size() == value_.size() && grad_.size() > 0; }
  const Matrix& grad() const { return grad_; }
  Matrix& grad() { return grad_; }
  void zero_grad() { grad_.setZero(value_.rows(), value_.cols()); }
  void clear_grad() { grad_.resize(0, 0); }

 private:
  Matrix value_;
  Matrix grad_;
  bool requires_grad_ = false;
};

enum class OpKind {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMatMul,
  kExp,
  kLog,
  kTanh,
  kSoftplus,
  kSum,
  kMean,
  kSumRows,
  kSumCols,
  kBroadcast,
  kConcatCols,
  kConcatRows,
  kSliceRows,
  kSliceCols,
  kSquare,
  kSqrt,
  kNeg,
  kScale,
  kShift,
  kTranspose,
  kGatherRows,
};

const char* op_name(OpKind kind);

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1x1 Var.
  double item() const;
  bool requires_grad() const;
  /// Adjoint after backward(); zeros if the node received none.
  Matrix grad() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a persistent tensor. Backward accumulates into tensor.grad()
  /// when tensor.requires_grad() is set.
  Var leaf(Tensor& tensor);
  Var constant(Matrix value);
  Var constant(double value);

  std::size_t size() const { return nodes_.size(); }
  OpKind kind(int id) const { return nodes_[id].kind; }
  const Matrix& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  Matrix grad(int id) const;

  /// Number of nodes visited by the most recent backward pass.
  std::size_t last_backward_visits() const { return last_visits_; }

 private:
  struct Node {
    OpKind kind = OpKind::kConstant;
    Matrix value;
    Matrix grad;
    int a = -1;
    int b = -1;
    std::vector<int> many;
    std::vector<Index> indices;
    Index i0 = 0;
    Index i1 = 0;
    double scalar = 0.0;
    bool requires_grad = false;
    Tensor* leaf = nullptr;
  };

  Var push(OpKind kind, Matrix value, int a, int b = -1);
  Node& node(int id) { return nodes_[id]; }
  void accumulate(int id, const Matrix& g);
  void accumulate_row_broadcast(int id, const Matrix& g, Index target_rows);
  void backward_node(int id);

  std::vector<Node> nodes_;
  std::size_t last_visits_ = 0;

  friend void backward(Tape& tape, Var loss);
  friend Var add(Var, Var);
  friend Var sub(Var, Var);
  friend Var mul(Var, Var);
  friend Var div(Var, Var);
  friend Var matmul(Var, Var);
  friend Var exp(Var);
  friend Var log(Var);
  friend Var tanh(Var);
  friend Var softplus(Var);
  friend Var sum(Var);
  friend Var mean(Var);
  friend Var sum_rows(Var);
  friend Var sum_cols(Var);
  friend Var broadcast(Var, Index, Index);
  friend Var concat_cols(std::span<const Var>);
  friend Var concat_rows(std::span<const Var>);
  friend Var slice_rows(Var, Index, Index);
  friend Var slice_cols(Var, Index, Index);
  friend Var square(Var);
  friend Var sqrt(Var);
  friend Var neg(Var);
  friend Var scale(Var, double);
  friend Var shift(Var, double);
  friend Var transpose(Var);
  friend Var gather_rows(Var, std::span<const Index>);
};

// Elementwise binary ops; `b` may be (1 x C) against an (N x C) `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var matmul(Var a, Var b);

Var exp(Var x);
/// Throws std::domain_error on any non-positive entry.
Var log(Var x);
Var tanh(Var x);
/// max(x, 0) + log1p(exp(-|x|)).
Var softplus(Var x);
Var square(Var x);
/// Throws std::domain_error on any non-positive entry.
Var sqrt(Var x);
Var neg(Var x);
Var scale(Var x, double c);
Var shift(Var x, double c);

Var sum(Var x);
Var mean(Var x);
/// Column sums: (N x C) -> (1 x C).
Var sum_rows(Var x);
/// Row sums: (N x C) -> (N x 1).
Var sum_cols(Var x);
Var mean_rows(Var x);

/// (1 x C) -> (rows x C), or (1 x 1) -> (rows x cols).
Var broadcast(Var x, Index rows, Index cols);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}
inline Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}
Var slice_rows(Var x, Index begin, Index count);
Var slice_cols(Var x, Index begin, Index count);
Var transpose(Var x);
Var gather_rows(Var x, std::span<const Index> rows);

/// log(sum(exp(x))) over all entries, stabilised by the (constant) maximum.
Var log_sum_exp(Var x);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator+(Var a, double c) { return shift(a, c); }
inline Var operator+(double c, Var a) { return shift(a, c); }
inline Var operator-(Var a, double c) { return shift(a, -c); }

/// Propagates d(loss)/d(node) through the tape. `loss` must be a 1x1 Var
/// recorded on `tape`.
void backward(Tape& tape, Var loss);

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  Index worst_index = -1;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

/// Builds the scalar objective on the given tape. `leaves[i]` is the tape
/// handle of `params[i]`.
using Objective = std::function<Var(Tape&, std::span<const Var> leaves)>;

/// Compares analytic gradients with central differences
/// (f(x+h) - f(x-h)) / 2h, entry by entry. The error measure is
/// |analytic - numeric| / max(1, |numeric|). Throws std::runtime_error if the
/// objective is non-finite at any probe point.
GradCheckReport grad_check(const Objective& f, std::span<const NamedTensor> params,
                           double step, double tol);

}  // namespace gmvae::ad

#endif  // GMVAE_AUTODIFF_HPP_
