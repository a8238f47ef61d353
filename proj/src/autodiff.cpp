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

#include "gmvae/autodiff.hpp"

#include <cmath>
#include <sstream>

namespace gmvae::ad {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

Tape* common_tape(Var a, Var b) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument("autodiff: invalid Var operand");
  if (a.tape() != b.tape()) throw std::invalid_argument("autodiff: operands live on different tapes");
  return a.tape();
}

Tape* tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("autodiff: invalid Var operand");
  return a.tape();
}

// Shape rule shared by the elementwise binary ops.
bool check_binary(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return false;
  if (b.rows() == 1 && b.cols() == a.cols()) return true;
  throw ShapeError(std::string("autodiff: ") + op + " shape mismatch " + shape_str(a) + " vs " +
                   shape_str(b));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConstant: return "constant";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSumRows: return "sum_rows";
    case OpKind::kSumCols: return "sum_cols";
    case OpKind::kBroadcast: return "broadcast";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kConcatRows: return "concat_rows";
    case OpKind::kSliceRows: return "slice_rows";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kSquare: return "square";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kNeg: return "neg";
    case OpKind::kScale: return "scale";
    case OpKind::kShift: return "shift";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kGatherRows: return "gather_rows";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Matrix value, bool requires_grad)
    : value_(std::move(value)), requires_grad_(requires_grad) {}

Tensor Tensor::zeros(Index rows, Index cols, bool requires_grad) {
  return Tensor(Matrix::Zero(rows, cols), requires_grad);
}

// ---------------------------------------------------------------------------
// Var

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("autodiff: item() on non-scalar " + shape_str(v));
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Matrix Var::grad() const { return tape_->grad(id_); }

// ---------------------------------------------------------------------------
// Tape

Var Tape::leaf(Tensor& tensor) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = tensor.value();
  n.requires_grad = tensor.requires_grad();
  n.leaf = &tensor;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.kind = OpKind::kConstant;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Matrix Tape::grad(int id) const {
  const Node& n = nodes_[id];
  if (n.grad.size() == n.value.size() && n.grad.size() > 0) return n.grad;
  return Matrix::Zero(n.value.rows(), n.value.cols());
}

Var Tape::push(OpKind kind, Matrix value, int a, int b) {
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  n.a = a;
  n.b = b;
  n.requires_grad = (a >= 0 && nodes_[a].requires_grad) || (b >= 0 && nodes_[b].requires_grad);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::accumulate_row_broadcast(int id, const Matrix& g, Index target_rows) {
  if (!nodes_[id].requires_grad) return;
  if (target_rows == g.rows()) {
    accumulate(id, g);
  } else {
    accumulate(id, g.colwise().sum());
  }
}

void Tape::backward_node(int id) {
  // Copy what we need; accumulate() may touch other nodes but never resizes.
  Node& n = nodes_[id];
  const Matrix& g = n.grad;
  const int a = n.a;
  const int b = n.b;
  switch (n.kind) {
    case OpKind::kLeaf:
    case OpKind::kConstant:
      break;
    case OpKind::kAdd:
      accumulate(a, g);
      accumulate_row_broadcast(b, g, nodes_[b].value.rows());
      break;
    case OpKind::kSub:
      accumulate(a, g);
      accumulate_row_broadcast(b, -g, nodes_[b].value.rows());
      break;
    case OpKind::kMul: {
      const Matrix& A = nodes_[a].value;
      const Matrix& B = nodes_[b].value;
      if (B.rows() == A.rows()) {
        if (nodes_[a].requires_grad) accumulate(a, g.cwiseProduct(B));
        if (nodes_[b].requires_grad) accumulate(b, g.cwiseProduct(A));
      } else {
        if (nodes_[a].requires_grad) accumulate(a, Matrix(g.array().rowwise() * B.row(0).array()));
        if (nodes_[b].requires_grad) accumulate(b, g.cwiseProduct(A).colwise().sum());
      }
      break;
    }
    case OpKind::kDiv: {
      const Matrix& A = nodes_[a].value;
      const Matrix& B = nodes_[b].value;
      if (B.rows() == A.rows()) {
        if (nodes_[a].requires_grad) accumulate(a, g.cwiseQuotient(B));
        if (nodes_[b].requires_grad) {
          accumulate(b, Matrix(-(g.array() * n.value.array() / B.array())));
        }
      } else {
        if (nodes_[a].requires_grad) accumulate(a, Matrix(g.array().rowwise() / B.row(0).array()));
        if (nodes_[b].requires_grad) {
          Matrix t = -(g.array() * n.value.array()).matrix();
          accumulate(b, Matrix(t.colwise().sum().array() / B.row(0).array()));
        }
      }
      break;
    }
    case OpKind::kMatMul:
      if (nodes_[a].requires_grad) accumulate(a, g * nodes_[b].value.transpose());
      if (nodes_[b].requires_grad) accumulate(b, nodes_[a].value.transpose() * g);
      break;
    case OpKind::kExp:
      accumulate(a, g.cwiseProduct(n.value));
      break;
    case OpKind::kLog:
      accumulate(a, g.cwiseQuotient(nodes_[a].value));
      break;
    case OpKind::kTanh:
      accumulate(a, Matrix(g.array() * (1.0 - n.value.array().square())));
      break;
    case OpKind::kSoftplus:
      accumulate(a, Matrix(g.array() * nodes_[a].value.array().unaryExpr(&stable_sigmoid)));
      break;
    case OpKind::kSum: {
      const Matrix& A = nodes_[a].value;
      accumulate(a, Matrix::Constant(A.rows(), A.cols(), g(0, 0)));
      break;
    }
    case OpKind::kMean: {
      const Matrix& A = nodes_[a].value;
      accumulate(a, Matrix::Constant(A.rows(), A.cols(), g(0, 0) / static_cast<double>(A.size())));
      break;
    }
    case OpKind::kSumRows:
      accumulate(a, g.replicate(nodes_[a].value.rows(), 1));
      break;
    case OpKind::kSumCols:
      accumulate(a, g.replicate(1, nodes_[a].value.cols()));
      break;
    case OpKind::kBroadcast: {
      const Matrix& A = nodes_[a].value;
      if (A.size() == 1) {
        accumulate(a, Matrix::Constant(1, 1, g.sum()));
      } else {
        accumulate(a, g.colwise().sum());
      }
      break;
    }
    case OpKind::kConcatCols: {
      Index offset = 0;
      const std::vector<int> parts = n.many;
      for (int p : parts) {
        const Index c = nodes_[p].value.cols();
        if (nodes_[p].requires_grad) accumulate(p, Matrix(nodes_[id].grad.middleCols(offset, c)));
        offset += c;
      }
      break;
    }
    case OpKind::kConcatRows: {
      Index offset = 0;
      const std::vector<int> parts = n.many;
      for (int p : parts) {
        const Index r = nodes_[p].value.rows();
        if (nodes_[p].requires_grad) accumulate(p, Matrix(nodes_[id].grad.middleRows(offset, r)));
        offset += r;
      }
      break;
    }
    case OpKind::kSliceRows: {
      Node& src = nodes_[a];
      if (!src.requires_grad) break;
      if (src.grad.size() == 0) src.grad = Matrix::Zero(src.value.rows(), src.value.cols());
      src.grad.middleRows(n.i0, n.i1) += g;
      break;
    }
    case OpKind::kSliceCols: {
      Node& src = nodes_[a];
      if (!src.requires_grad) break;
      if (src.grad.size() == 0) src.grad = Matrix::Zero(src.value.rows(), src.value.cols());
      src.grad.middleCols(n.i0, n.i1) += g;
      break;
    }
    case OpKind::kSquare:
      accumulate(a, Matrix(2.0 * g.array() * nodes_[a].value.array()));
      break;
    case OpKind::kSqrt:
      accumulate(a, Matrix(g.array() / (2.0 * n.value.array())));
      break;
    case OpKind::kNeg:
      accumulate(a, -g);
      break;
    case OpKind::kScale:
      accumulate(a, g * n.scalar);
      break;
    case OpKind::kShift:
      accumulate(a, g);
      break;
    case OpKind::kTranspose:
      accumulate(a, g.transpose());
      break;
    case OpKind::kGatherRows: {
      Node& src = nodes_[a];
      if (!src.requires_grad) break;
      if (src.grad.size() == 0) src.grad = Matrix::Zero(src.value.rows(), src.value.cols());
      const std::vector<Index> rows = n.indices;
      const Matrix gg = nodes_[id].grad;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        nodes_[a].grad.row(rows[i]) += gg.row(static_cast<Index>(i));
      }
      break;
    }
  }
}

void backward(Tape& tape, Var loss) {
  if (!loss.valid() || loss.tape() != &tape) {
    throw std::invalid_argument("backward: loss is not recorded on this tape");
  }
  const Matrix& lv = tape.value(loss.id());
  if (lv.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(lv));

  for (auto& n : tape.nodes_) n.grad.resize(0, 0);
  tape.last_visits_ = 0;
  if (!tape.nodes_[loss.id()].requires_grad) return;

  tape.nodes_[loss.id()].grad = Matrix::Ones(1, 1);
  for (int id = loss.id(); id >= 0; --id) {
    auto& n = tape.nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    ++tape.last_visits_;
    if (n.kind == OpKind::kLeaf) {
      Tensor* t = n.leaf;
      if (t->has_grad()) {
        t->grad() += n.grad;
      } else {
        t->grad() = n.grad;
      }
      continue;
    }
    tape.backward_node(id);
  }
}

// ---------------------------------------------------------------------------
// Forward ops

namespace {

// A (1 x C) left operand is lifted explicitly so the binary kernels only ever
// broadcast on the right.
void lift_left(Var& a, Var b) {
  if (a.rows() == 1 && b.rows() > 1 && a.cols() == b.cols()) a = broadcast(a, b.rows(), b.cols());
}

}  // namespace

Var add(Var a, Var b) {
  Tape* t = common_tape(a, b);
  lift_left(a, b);
  const Matrix& A = t->value(a.id());
  const Matrix& B = t->value(b.id());
  Matrix out = check_binary("add", A, B) ? Matrix(A.rowwise() + B.row(0)) : Matrix(A + B);
  return t->push(OpKind::kAdd, std::move(out), a.id(), b.id());
}

Var sub(Var a, Var b) {
  Tape* t = common_tape(a, b);
  lift_left(a, b);
  const Matrix& A = t->value(a.id());
  const Matrix& B = t->value(b.id());
  Matrix out = check_binary("sub", A, B) ? Matrix(A.rowwise() - B.row(0)) : Matrix(A - B);
  return t->push(OpKind::kSub, std::move(out), a.id(), b.id());
}

Var mul(Var a, Var b) {
  Tape* t = common_tape(a, b);
  lift_left(a, b);
  const Matrix& A = t->value(a.id());
  const Matrix& B = t->value(b.id());
  Matrix out = check_binary("mul", A, B) ? Matrix(A.array().rowwise() * B.row(0).array())
                                         : Matrix(A.cwiseProduct(B));
  return t->push(OpKind::kMul, std::move(out), a.id(), b.id());
}

Var div(Var a, Var b) {
  Tape* t = common_tape(a, b);
  lift_left(a, b);
  const Matrix& A = t->value(a.id());
  const Matrix& B = t->value(b.id());
  Matrix out = check_binary("div", A, B) ? Matrix(A.array().rowwise() / B.row(0).array())
                                         : Matrix(A.cwiseQuotient(B));
  return t->push(OpKind::kDiv, std::move(out), a.id(), b.id());
}

Var matmul(Var a, Var b) {
  Tape* t = common_tape(a, b);
  const Matrix& A = t->value(a.id());
  const Matrix& B = t->value(b.id());
  if (A.cols() != B.rows()) {
    throw ShapeError("autodiff: matmul shape mismatch " + shape_str(A) + " x " + shape_str(B));
  }
  Matrix out = A * B;
  return t->push(OpKind::kMatMul, std::move(out), a.id(), b.id());
}

Var exp(Var x) {
  Tape* t = tape_of(x);
  Matrix out = t->value(x.id()).array().exp();
  return t->push(OpKind::kExp, std::move(out), x.id());
}

Var log(Var x) {
  Tape* t = tape_of(x);
  const Matrix& X = t->value(x.id());
  if ((X.array() <= 0.0).any()) throw std::domain_error("autodiff: log of non-positive value");
  Matrix out = X.array().log();
  return t->push(OpKind::kLog, std::move(out), x.id());
}

Var tanh(Var x) {
  Tape* t = tape_of(x);
  Matrix out = t->value(x.id()).array().tanh();
  return t->push(OpKind::kTanh, std::move(out), x.id());
}

Var softplus(Var x) {
  Tape* t = tape_of(x);
  Matrix out = t->value(x.id()).unaryExpr(
      [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); });
  return t->push(OpKind::kSoftplus, std::move(out), x.id());
}

Var square(Var x) {
  Tape* t = tape_of(x);
  Matrix out = t->value(x.id()).array().square();
  return t->push(OpKind::kSquare, std::move(out), x.id());
}

Var sqrt(Var x) {
  Tape* t = tape_of(x);
  const Matrix& X = t->value(x.id());
  if ((X.array() <= 0.0).any()) throw std::domain_error("autodiff: sqrt of non-positive value");
  Matrix out = X.array().sqrt();
  return t->push(OpKind::kSqrt, std::move(out), x.id());
}

Var neg(Var x) {
  Tape* t = tape_of(x);
  Matrix out = -t->value(x.id());
  return t->push(OpKind::kNeg, std::move(out), x.id());
}

Var scale(Var x, double c) {
  Tape* t = tape_of(x);
  Matrix out = t->value(x.id()) * c;
  Var v = t->push(OpKind::kScale, std::move(out), x.id());
  t->node(v.id()).scalar = c;
  return v;
}

Var shift(Var x, double c) {
  Tape* t = tape_of(x);
  Matrix out = t->value(x.id()).array() + c;
  Var v = t->push(OpKind::kShift, std::move(out), x.id());
  t->node(v.id()).scalar = c;
  return v;
}

Var sum(Var x) {
  Tape* t = tape_of(x);
  Matrix out = Matrix::Constant(1, 1, t->value(x.id()).sum());
  return t->push(OpKind::kSum, std::move(out), x.id());
}

Var mean(Var x) {
  Tape* t = tape_of(x);
  const Matrix& X = t->value(x.id());
  if (X.size() == 0) throw ShapeError("autodiff: mean of empty tensor");
  Matrix out = Matrix::Constant(1, 1, X.mean());
  return t->push(OpKind::kMean, std::move(out), x.id());
}

Var sum_rows(Var x) {
  Tape* t = tape_of(x);
  Matrix out = t->value(x.id()).colwise().sum();
  return t->push(OpKind::kSumRows, std::move(out), x.id());
}

Var sum_cols(Var x) {
  Tape* t = tape_of(x);
  Matrix out = t->value(x.id()).rowwise().sum();
  return t->push(OpKind::kSumCols, std::move(out), x.id());
}

Var mean_rows(Var x) {
  const Index n = x.rows();
  if (n == 0) throw ShapeError("autodiff: mean_rows of empty tensor");
  return scale(sum_rows(x), 1.0 / static_cast<double>(n));
}

Var broadcast(Var x, Index rows, Index cols) {
  Tape* t = tape_of(x);
  const Matrix& X = t->value(x.id());
  Matrix out;
  if (X.size() == 1) {
    out = Matrix::Constant(rows, cols, X(0, 0));
  } else if (X.rows() == 1 && X.cols() == cols) {
    out = X.replicate(rows, 1);
  } else {
    throw ShapeError("autodiff: cannot broadcast " + shape_str(X) + " to [" + std::to_string(rows) +
                     "x" + std::to_string(cols) + "]");
  }
  return t->push(OpKind::kBroadcast, std::move(out), x.id());
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("autodiff: concat of zero parts");
  Tape* t = tape_of(parts[0]);
  const Index rows = parts[0].rows();
  Index cols = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.tape() != t) throw std::invalid_argument("autodiff: operands live on different tapes");
    if (p.rows() != rows) throw ShapeError("autodiff: concat_cols row mismatch");
    cols += p.cols();
    rg = rg || p.requires_grad();
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  Var v = t->push(OpKind::kConcatCols, std::move(out), -1);
  auto& n = t->node(v.id());
  n.requires_grad = rg;
  n.many.reserve(parts.size());
  for (const Var& p : parts) n.many.push_back(p.id());
  return v;
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("autodiff: concat of zero parts");
  Tape* t = tape_of(parts[0]);
  const Index cols = parts[0].cols();
  Index rows = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.tape() != t) throw std::invalid_argument("autodiff: operands live on different tapes");
    if (p.cols() != cols) throw ShapeError("autodiff: concat_rows column mismatch");
    rows += p.rows();
    rg = rg || p.requires_grad();
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (const Var& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  Var v = t->push(OpKind::kConcatRows, std::move(out), -1);
  auto& n = t->node(v.id());
  n.requires_grad = rg;
  n.many.reserve(parts.size());
  for (const Var& p : parts) n.many.push_back(p.id());
  return v;
}

Var slice_rows(Var x, Index begin, Index count) {
  Tape* t = tape_of(x);
  const Matrix& X = t->value(x.id());
  if (begin < 0 || count < 0 || begin + count > X.rows()) {
    throw ShapeError("autodiff: slice_rows out of range on " + shape_str(X));
  }
  Matrix out = X.middleRows(begin, count);
  Var v = t->push(OpKind::kSliceRows, std::move(out), x.id());
  t->node(v.id()).i0 = begin;
  t->node(v.id()).i1 = count;
  return v;
}

Var slice_cols(Var x, Index begin, Index count) {
  Tape* t = tape_of(x);
  const Matrix& X = t->value(x.id());
  if (begin < 0 || count < 0 || begin + count > X.cols()) {
    throw ShapeError("autodiff: slice_cols out of range on " + shape_str(X));
  }
  Matrix out = X.middleCols(begin, count);
  Var v = t->push(OpKind::kSliceCols, std::move(out), x.id());
  t->node(v.id()).i0 = begin;
  t->node(v.id()).i1 = count;
  return v;
}

Var transpose(Var x) {
  Tape* t = tape_of(x);
  Matrix out = t->value(x.id()).transpose();
  return t->push(OpKind::kTranspose, std::move(out), x.id());
}

Var gather_rows(Var x, std::span<const Index> rows) {
  Tape* t = tape_of(x);
  const Matrix& X = t->value(x.id());
  Matrix out(static_cast<Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= X.rows()) {
      throw ShapeError("autodiff: gather_rows index out of range on " + shape_str(X));
    }
    out.row(static_cast<Index>(i)) = X.row(rows[i]);
  }
  Var v = t->push(OpKind::kGatherRows, std::move(out), x.id());
  t->node(v.id()).indices.assign(rows.begin(), rows.end());
  return v;
}

Var log_sum_exp(Var x) {
  const double m = x.value().maxCoeff();
  return shift(log(sum(exp(shift(x, -m)))), m);
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckReport grad_check(const Objective& f, std::span<const NamedTensor> params, double step,
                           double tol) {
  if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

  auto evaluate = [&](bool with_grad) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.leaf(*p.tensor));
    Var loss = f(tape, leaves);
    const double value = loss.item();
    if (!std::isfinite(value)) throw std::runtime_error("grad_check: objective is non-finite");
    if (with_grad) backward(tape, loss);
    return value;
  };

  std::vector<bool> saved_flags;
  for (const auto& p : params) {
    saved_flags.push_back(p.tensor->requires_grad());
    p.tensor->set_requires_grad(true);
    p.tensor->clear_grad();
  }
  evaluate(true);

  GradCheckReport report;
  report.passed = true;
  for (const auto& p : params) {
    Tensor& t = *p.tensor;
    const Matrix analytic = t.has_grad() ? t.grad() : Matrix::Zero(t.rows(), t.cols());
    GradCheckEntry entry{p.name, 0.0, -1};
    for (Index i = 0; i < t.size(); ++i) {
      double& x = t.value().data()[i];
      const double saved = x;
      x = saved + step;
      const double fp = evaluate(false);
      x = saved - step;
      const double fm = evaluate(false);
      x = saved;
      const double numeric = (fp - fm) / (2.0 * step);
      const double err = std::abs(analytic.data()[i] - numeric) / std::max(1.0, std::abs(numeric));
      if (err > entry.max_rel_error || entry.worst_index < 0) {
        entry.max_rel_error = std::max(entry.max_rel_error, err);
        entry.worst_index = i;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    if (!(entry.max_rel_error < tol)) report.passed = false;
    report.entries.push_back(std::move(entry));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].tensor->set_requires_grad(saved_flags[i]);
  }
  return report;
}

}  // namespace gmvae::ad
