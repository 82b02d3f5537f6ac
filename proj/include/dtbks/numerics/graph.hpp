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

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dtbks/numerics/tensor.hpp"

namespace dtbks {

class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while its graph lives.
class Var {
 public:
  Var() = default;

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

enum class Op {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kAddScalar,
  kMulScalar,
  kPowScalar,
  kMatmul,
  kTranspose,
  kReshape,
  kExp,
  kLog,
  kSin,
  kCos,
  kSqrt,
  kSquare,
  kSoftplus,
  kLgamma,
  kSum,
  kMean,
  kLogSoftmaxPick,
};

std::string_view op_name(Op op);

// Reverse-mode tape over tensor primitives. Nodes are appended in evaluation
// order, so parents always precede children and a single reverse sweep
// suffices. Elementwise binary ops broadcast numpy-style for rank <= 2.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, std::string name = {});
  Var scalar(double value, std::string name = {}) { return leaf(Tensor::scalar(value), std::move(name)); }

  const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }
  // Adjoint of a node after backward(); zeros for nodes the loss does not reach.
  const Tensor& adjoint(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Populates adjoints of every node reachable from `loss`, which must be a
  // single-element tensor. Throws NumericalError naming the first node whose
  // value or adjoint is not finite.
  void backward(Var loss);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var add_scalar(Var a, double c);
  Var mul_scalar(Var a, double c);
  Var pow_scalar(Var a, double c);
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var reshape(Var a, Tensor::Shape shape);
  Var exp(Var a);
  Var log(Var a);
  Var sin(Var a);
  Var cos(Var a);
  Var sqrt(Var a);
  Var square(Var a);
  Var softplus(Var a);
  Var lgamma(Var a);
  Var sum(Var a);
  Var mean(Var a);
  // Row-wise log-softmax of a BxC logits matrix, evaluated at one label per row.
  Var log_softmax_pick(Var logits, std::span<const std::size_t> labels);

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::array<std::size_t, 2> parents{};
    int num_parents = 0;
    Tensor value;
    Tensor adjoint;
    double constant = 0.0;
    std::vector<std::size_t> labels;
    std::string name;
  };

  Var push(Node node);
  void check_owner(Var v) const;
  void propagate(std::size_t id);
  void accumulate_broadcast(std::size_t target, const Tensor& grad_out);

  std::vector<Node> nodes_;
};

// Operator sugar; both operands must belong to the same graph.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator/(Var a, double c);
Var operator/(double c, Var a);

}  // namespace dtbks
