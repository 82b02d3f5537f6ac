/*
 * Copyright 2026 The dtbks Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "dtbks/numerics/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "dtbks/errors.hpp"
#include "dtbks/numerics/special.hpp"

namespace dtbks {

namespace {

struct View2 {
  std::size_t rows;
  std::size_t cols;
};

View2 view2(const Tensor& t) {
  switch (t.rank()) {
    case 0:
      return {1, 1};
    case 1:
      return {1, t.shape()[0]};
    case 2:
      return {t.shape()[0], t.shape()[1]};
    default:
      throw UsageError("graph ops support rank <= 2, got shape " + shape_string(t.shape()));
  }
}

std::size_t broadcast_dim(std::size_t a, std::size_t b, const Tensor& ta, const Tensor& tb) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw UsageError("cannot broadcast shapes " + shape_string(ta.shape()) + " and " +
                   shape_string(tb.shape()));
}

Tensor::Shape broadcast_shape(const Tensor& a, const Tensor& b) {
  const View2 va = view2(a);
  const View2 vb = view2(b);
  const std::size_t r = broadcast_dim(va.rows, vb.rows, a, b);
  const std::size_t c = broadcast_dim(va.cols, vb.cols, a, b);
  const std::size_t rank = std::max(a.rank(), b.rank());
  if (rank == 2) return {r, c};
  if (rank == 1) return {c};
  return {};
}

inline std::size_t bindex(const View2& v, std::size_t r, std::size_t c) {
  return (v.rows == 1 ? 0 : r) * v.cols + (v.cols == 1 ? 0 : c);
}

template <typename F>
Tensor elementwise(const Tensor& a, const Tensor& b, F f) {
  Tensor out(broadcast_shape(a, b));
  const View2 va = view2(a), vb = view2(b), vo = view2(out);
  for (std::size_t r = 0; r < vo.rows; ++r) {
    for (std::size_t c = 0; c < vo.cols; ++c) {
      out[r * vo.cols + c] = f(a[bindex(va, r, c)], b[bindex(vb, r, c)]);
    }
  }
  return out;
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kNeg: return "neg";
    case Op::kAddScalar: return "add_scalar";
    case Op::kMulScalar: return "mul_scalar";
    case Op::kPowScalar: return "pow_scalar";
    case Op::kMatmul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kReshape: return "reshape";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSin: return "sin";
    case Op::kCos: return "cos";
    case Op::kSqrt: return "sqrt";
    case Op::kSquare: return "square";
    case Op::kSoftplus: return "softplus";
    case Op::kLgamma: return "lgamma";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kLogSoftmaxPick: return "log_softmax_pick";
  }
  return "unknown";
}

const Tensor& Var::value() const { return graph_->value(*this); }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Graph::check_owner(Var v) const {
  if (&v.graph() != this || v.id() >= nodes_.size()) {
    throw UsageError("variable does not belong to this graph");
  }
}

Var Graph::leaf(Tensor value, std::string name) {
  Node n;
  n.value = std::move(value);
  n.name = std::move(name);
  return push(std::move(n));
}

const Tensor& Graph::adjoint(Var v) const {
  check_owner(v);
  const Node& n = nodes_[v.id()];
  if (n.adjoint.size() != n.value.size()) {
    throw UsageError("adjoint requested before backward()");
  }
  return n.adjoint;
}

#define DTBKS_UNARY(method, opcode, expr)             \
  Var Graph::method(Var a) {                          \
    check_owner(a);                                   \
    Node n;                                           \
    n.op = opcode;                                    \
    n.parents = {a.id(), 0};                          \
    n.num_parents = 1;                                \
    n.value = map(nodes_[a.id()].value, [](double x) { return expr; }); \
    return push(std::move(n));                        \
  }

DTBKS_UNARY(neg, Op::kNeg, -x)
DTBKS_UNARY(exp, Op::kExp, std::exp(x))
DTBKS_UNARY(log, Op::kLog, std::log(x))
DTBKS_UNARY(sin, Op::kSin, std::sin(x))
DTBKS_UNARY(cos, Op::kCos, std::cos(x))
DTBKS_UNARY(sqrt, Op::kSqrt, std::sqrt(x))
DTBKS_UNARY(square, Op::kSquare, x * x)
DTBKS_UNARY(softplus, Op::kSoftplus, dtbks::softplus(x))

#undef DTBKS_UNARY

Var Graph::lgamma(Var a) {
  check_owner(a);
  Node n;
  n.op = Op::kLgamma;
  n.parents = {a.id(), 0};
  n.num_parents = 1;
  n.value = map(nodes_[a.id()].value, [](double x) { return dtbks::lgamma(x); });
  return push(std::move(n));
}

#define DTBKS_BINARY(method, opcode, expr)                                         \
  Var Graph::method(Var a, Var b) {                                                \
    check_owner(a);                                                                \
    check_owner(b);                                                                \
    Node n;                                                                        \
    n.op = opcode;                                                                 \
    n.parents = {a.id(), b.id()};                                                  \
    n.num_parents = 2;                                                             \
    n.value = elementwise(nodes_[a.id()].value, nodes_[b.id()].value,             \
                          [](double x, double y) { return expr; });                \
    return push(std::move(n));                                                     \
  }

DTBKS_BINARY(add, Op::kAdd, x + y)
DTBKS_BINARY(sub, Op::kSub, x - y)
DTBKS_BINARY(mul, Op::kMul, x * y)
DTBKS_BINARY(div, Op::kDiv, x / y)

#undef DTBKS_BINARY

Var Graph::add_scalar(Var a, double c) {
  check_owner(a);
  Node n;
  n.op = Op::kAddScalar;
  n.parents = {a.id(), 0};
  n.num_parents = 1;
  n.constant = c;
  n.value = map(nodes_[a.id()].value, [c](double x) { return x + c; });
  return push(std::move(n));
}

Var Graph::mul_scalar(Var a, double c) {
  check_owner(a);
  Node n;
  n.op = Op::kMulScalar;
  n.parents = {a.id(), 0};
  n.num_parents = 1;
  n.constant = c;
  n.value = map(nodes_[a.id()].value, [c](double x) { return x * c; });
  return push(std::move(n));
}

Var Graph::pow_scalar(Var a, double c) {
  check_owner(a);
  Node n;
  n.op = Op::kPowScalar;
  n.parents = {a.id(), 0};
  n.num_parents = 1;
  n.constant = c;
  n.value = map(nodes_[a.id()].value, [c](double x) { return std::pow(x, c); });
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
  check_owner(a);
  check_owner(b);
  const Tensor& ta = nodes_[a.id()].value;
  const Tensor& tb = nodes_[b.id()].value;
  if (ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0]) {
    throw UsageError("matmul shape mismatch: " + shape_string(ta.shape()) + " x " +
                     shape_string(tb.shape()));
  }
  const std::size_t m = ta.shape()[0], k = ta.shape()[1], p = tb.shape()[1];
  Tensor out({m, p});
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data().data() + i * p;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = ta[i * k + l];
      const double* brow = tb.data().data() + l * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += av * brow[j];
    }
  }
  Node n;
  n.op = Op::kMatmul;
  n.parents = {a.id(), b.id()};
  n.num_parents = 2;
  n.value = std::move(out);
  return push(std::move(n));
}

Var Graph::transpose(Var a) {
  check_owner(a);
  const Tensor& ta = nodes_[a.id()].value;
  if (ta.rank() != 2) throw UsageError("transpose needs a matrix, got " + shape_string(ta.shape()));
  const std::size_t r = ta.shape()[0], c = ta.shape()[1];
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = ta[i * c + j];
  Node n;
  n.op = Op::kTranspose;
  n.parents = {a.id(), 0};
  n.num_parents = 1;
  n.value = std::move(out);
  return push(std::move(n));
}

Var Graph::reshape(Var a, Tensor::Shape shape) {
  check_owner(a);
  Node n;
  n.op = Op::kReshape;
  n.parents = {a.id(), 0};
  n.num_parents = 1;
  n.value = nodes_[a.id()].value.reshaped(std::move(shape));
  return push(std::move(n));
}

Var Graph::sum(Var a) {
  check_owner(a);
  const Tensor& ta = nodes_[a.id()].value;
  double s = 0.0;
  for (double v : ta.data()) s += v;
  Node n;
  n.op = Op::kSum;
  n.parents = {a.id(), 0};
  n.num_parents = 1;
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

Var Graph::mean(Var a) {
  check_owner(a);
  const Tensor& ta = nodes_[a.id()].value;
  if (ta.empty()) throw UsageError("mean of empty tensor");
  double s = 0.0;
  for (double v : ta.data()) s += v;
  Node n;
  n.op = Op::kMean;
  n.parents = {a.id(), 0};
  n.num_parents = 1;
  n.value = Tensor::scalar(s / static_cast<double>(ta.size()));
  return push(std::move(n));
}

Var Graph::log_softmax_pick(Var logits, std::span<const std::size_t> labels) {
  check_owner(logits);
  const Tensor& z = nodes_[logits.id()].value;
  if (z.rank() != 2 || z.shape()[0] != labels.size()) {
    throw UsageError("log_softmax_pick expects Bx C logits with B labels, got " +
                     shape_string(z.shape()) + " and " + std::to_string(labels.size()) +
                     " labels");
  }
  const std::size_t b = z.shape()[0], c = z.shape()[1];
  Tensor out({b});
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= c) {
      throw UsageError("label " + std::to_string(labels[i]) + " out of range for " +
                       std::to_string(c) + " classes");
    }
    const auto row = z.row(i);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - m);
    out[i] = row[labels[i]] - m - std::log(s);
  }
  Node n;
  n.op = Op::kLogSoftmaxPick;
  n.parents = {logits.id(), 0};
  n.num_parents = 1;
  n.value = std::move(out);
  n.labels.assign(labels.begin(), labels.end());
  return push(std::move(n));
}

void Graph::accumulate_broadcast(std::size_t target, const Tensor& grad_out) {
  Tensor& adj = nodes_[target].adjoint;
  const View2 vt = view2(nodes_[target].value);
  const View2 vo = view2(grad_out);
  for (std::size_t r = 0; r < vo.rows; ++r)
    for (std::size_t c = 0; c < vo.cols; ++c) adj[bindex(vt, r, c)] += grad_out[r * vo.cols + c];
}

void Graph::backward(Var loss) {
  check_owner(loss);
  const std::size_t top = loss.id();
  if (nodes_[top].value.size() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " +
                     shape_string(nodes_[top].value.shape()));
  }
  for (std::size_t i = 0; i <= top; ++i) {
    const Node& n = nodes_[i];
    if (!n.value.all_finite()) {
      throw NumericalError("non-finite value at node #" + std::to_string(i) + " (" +
                           std::string(op_name(n.op)) +
                           (n.name.empty() ? "" : ", '" + n.name + "'") + ")");
    }
  }
  for (Node& n : nodes_) n.adjoint = Tensor::zeros_like(n.value);
  nodes_[top].adjoint[0] = 1.0;
  for (std::size_t i = top + 1; i-- > 0;) {
    if (!nodes_[i].adjoint.all_finite()) {
      throw NumericalError("non-finite adjoint at node #" + std::to_string(i) + " (" +
                           std::string(op_name(nodes_[i].op)) + ")");
    }
    propagate(i);
  }
}

void Graph::propagate(std::size_t id) {
  Node& n = nodes_[id];
  if (n.op == Op::kLeaf) return;
  const Tensor& g = n.adjoint;
  const std::size_t pa = n.parents[0];
  const std::size_t pb = n.parents[1];

  auto unary = [&](auto dfdx) {
    const Tensor& x = nodes_[pa].value;
    Tensor& adj = nodes_[pa].adjoint;
    for (std::size_t i = 0; i < g.size(); ++i) adj[i] += g[i] * dfdx(x[i], n.value[i]);
  };
  auto binary = [&](auto dfda, auto dfdb) {
    const Tensor& a = nodes_[pa].value;
    const Tensor& b = nodes_[pb].value;
    const View2 va = view2(a), vb = view2(b), vo = view2(n.value);
    Tensor& adj_a = nodes_[pa].adjoint;
    for (std::size_t r = 0; r < vo.rows; ++r) {
      for (std::size_t c = 0; c < vo.cols; ++c) {
        const double go = g[r * vo.cols + c];
        const std::size_t ia = bindex(va, r, c), ib = bindex(vb, r, c);
        adj_a[ia] += go * dfda(a[ia], b[ib]);
        nodes_[pb].adjoint[ib] += go * dfdb(a[ia], b[ib]);
      }
    }
  };

  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kAdd:
      accumulate_broadcast(pa, g);
      accumulate_broadcast(pb, g);
      break;
    case Op::kSub: {
      accumulate_broadcast(pa, g);
      Tensor neg_g = map(g, [](double v) { return -v; });
      accumulate_broadcast(pb, neg_g);
      break;
    }
    case Op::kMul:
      binary([](double, double y) { return y; }, [](double x, double) { return x; });
      break;
    case Op::kDiv:
      binary([](double, double y) { return 1.0 / y; },
             [](double x, double y) { return -x / (y * y); });
      break;
    case Op::kNeg:
      unary([](double, double) { return -1.0; });
      break;
    case Op::kAddScalar:
      unary([](double, double) { return 1.0; });
      break;
    case Op::kMulScalar: {
      const double c = n.constant;
      unary([c](double, double) { return c; });
      break;
    }
    case Op::kPowScalar: {
      const double c = n.constant;
      unary([c](double x, double) { return c * std::pow(x, c - 1.0); });
      break;
    }
    case Op::kExp:
      unary([](double, double y) { return y; });
      break;
    case Op::kLog:
      unary([](double x, double) { return 1.0 / x; });
      break;
    case Op::kSin:
      unary([](double x, double) { return std::cos(x); });
      break;
    case Op::kCos:
      unary([](double x, double) { return -std::sin(x); });
      break;
    case Op::kSqrt:
      unary([](double, double y) { return 0.5 / y; });
      break;
    case Op::kSquare:
      unary([](double x, double) { return 2.0 * x; });
      break;
    case Op::kSoftplus:
      unary([](double x, double) { return sigmoid(x); });
      break;
    case Op::kLgamma:
      unary([](double x, double) { return dtbks::digamma(x); });
      break;
    case Op::kSum: {
      Tensor& adj = nodes_[pa].adjoint;
      for (double& v : adj.data()) v += g[0];
      break;
    }
    case Op::kMean: {
      Tensor& adj = nodes_[pa].adjoint;
      const double s = g[0] / static_cast<double>(adj.size());
      for (double& v : adj.data()) v += s;
      break;
    }
    case Op::kReshape: {
      Tensor& adj = nodes_[pa].adjoint;
      for (std::size_t i = 0; i < g.size(); ++i) adj[i] += g[i];
      break;
    }
    case Op::kTranspose: {
      Tensor& adj = nodes_[pa].adjoint;
      const std::size_t r = adj.shape()[0], c = adj.shape()[1];
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) adj[i * c + j] += g[j * r + i];
      break;
    }
    case Op::kMatmul: {
      // C = A B: dA = G B^T, dB = A^T G.
      const Tensor& a = nodes_[pa].value;
      const Tensor& b = nodes_[pb].value;
      const std::size_t m = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
      Tensor& adj_a = nodes_[pa].adjoint;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
          double s = 0.0;
          for (std::size_t j = 0; j < p; ++j) s += g[i * p + j] * b[l * p + j];
          adj_a[i * k + l] += s;
        }
      Tensor& adj_b = nodes_[pb].adjoint;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
          const double av = a[i * k + l];
          for (std::size_t j = 0; j < p; ++j) adj_b[l * p + j] += av * g[i * p + j];
        }
      break;
    }
    case Op::kLogSoftmaxPick: {
      const Tensor& z = nodes_[pa].value;
      Tensor& adj = nodes_[pa].adjoint;
      const std::size_t b = z.shape()[0], c = z.shape()[1];
      for (std::size_t i = 0; i < b; ++i) {
        const auto row = z.row(i);
        const double m = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double v : row) s += std::exp(v - m);
        for (std::size_t j = 0; j < c; ++j) {
          const double p = std::exp(row[j] - m) / s;
          adj[i * c + j] += g[i] * ((j == n.labels[i] ? 1.0 : 0.0) - p);
        }
      }
      break;
    }
  }
}

Var operator+(Var a, Var b) { return a.graph().add(a, b); }
Var operator-(Var a, Var b) { return a.graph().sub(a, b); }
Var operator*(Var a, Var b) { return a.graph().mul(a, b); }
Var operator/(Var a, Var b) { return a.graph().div(a, b); }
Var operator-(Var a) { return a.graph().neg(a); }
Var operator+(Var a, double c) { return a.graph().add_scalar(a, c); }
Var operator+(double c, Var a) { return a.graph().add_scalar(a, c); }
Var operator-(Var a, double c) { return a.graph().add_scalar(a, -c); }
Var operator-(double c, Var a) { return a.graph().add_scalar(a.graph().neg(a), c); }
Var operator*(Var a, double c) { return a.graph().mul_scalar(a, c); }
Var operator*(double c, Var a) { return a.graph().mul_scalar(a, c); }
Var operator/(Var a, double c) { return a.graph().mul_scalar(a, 1.0 / c); }
Var operator/(double c, Var a) { return a.graph().mul_scalar(a.graph().pow_scalar(a, -1.0), c); }

}  // namespace dtbks
