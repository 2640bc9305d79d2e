// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "simtoken/tensor.hpp"

namespace simtoken {

enum class Op : std::uint8_t {
  Input,
  Parameter,
  MatMul,
  Add,
  Multiply,
  Scale,
  Concat,
  Slice,
  Mean,
  Sum,
  Transpose,
  Softmax,
  LogSoftmax,
  Log,
  Exp,
  Sigmoid,
  LogSigmoid,
  Gelu,
  LayerNorm,
  Embedding,
  Reshape,
};

std::string_view op_name(Op op);

using NodeId = std::size_t;

/// Handle to a node inside one Graph.
struct Var {
  NodeId id = 0;
};

struct Node {
  NodeId id = 0;
  Op op = Op::Input;
  std::vector<NodeId> inputs;
  Tensor value;
  Tensor grad;

  // Op attributes; unused fields stay zero.
  std::size_t axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  double scalar = 0.0;
  std::vector<std::size_t> indices;
  std::vector<double> cache;
};

using Gradients = std::map<NodeId, Tensor>;

// tanh-approximation GELU: 0.5 x (1 + tanh(k0 (x + k1 x^3))).
inline constexpr double kGeluK0 = 0.7978845608028654;  // sqrt(2 / pi)
inline constexpr double kGeluK1 = 0.044715;
inline constexpr double kLayerNormEps = 1e-5;

/// Append-only computation tape. Node ids are assigned in creation order, so
/// every node's inputs precede it and the id order is a topological order.
///
/// Shapes are never broadcast except for the explicit scalar ops (scale).
/// Bias rows and gains are expanded by the caller with a ones-column matmul.
///
/// A Graph belongs to one thread.
class Graph {
 public:
  Var input(Tensor value);
  Var parameter(Tensor value);

  /// [m,k] x [k,n] -> [m,n]
  Var matmul(Var a, Var b);
  /// Same-shape elementwise sum.
  Var add(Var a, Var b);
  /// Same-shape elementwise product.
  Var multiply(Var a, Var b);
  Var scale(Var a, double factor);
  /// All inputs share rank and every dim except `axis`.
  Var concat(std::span<const Var> parts, std::size_t axis);
  /// Half-open range [begin, end) along `axis`; keeps rank.
  Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
  /// Reductions drop the reduced axis.
  Var mean(Var a, std::size_t axis);
  Var sum(Var a, std::size_t axis);
  /// 2-D only.
  Var transpose(Var a);
  /// Same element count, row-major order preserved.
  Var reshape(Var a, Shape shape);
  /// Last axis. Max-subtracted.
  Var softmax(Var a);
  Var log_softmax(Var a);
  Var log(Var a);
  Var exp(Var a);
  Var sigmoid(Var a);
  /// log(sigmoid(x)) evaluated without overflow.
  Var log_sigmoid(Var a);
  Var gelu(Var a);
  /// Zero-mean unit-variance over the last axis, no affine terms.
  Var layer_norm(Var a);
  /// Rows of a 2-D table: [V,D] -> [ids.size(), D].
  Var embedding(Var table, std::vector<std::size_t> ids);

  Var sum_all(Var a);
  Var mean_all(Var a);

  const Node& node(Var v) const;
  const Tensor& value(Var v) const { return node(v).value; }
  const Tensor& grad(Var v) const { return node(v).grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::span<const NodeId> parameters() const noexcept { return parameters_; }
  std::size_t count(Op op) const;

  /// Reverse pass from a scalar loss. Populates Node::grad for every node
  /// and returns the gradient of each parameter node. Nodes that depend on no
  /// parameter, and nodes the loss does not depend on, get zeros.
  Gradients backward(Var loss);

  /// Named structural counters, used to assert call-count contracts.
  void mark(std::string_view tag);
  std::size_t marks(std::string_view tag) const;

 private:
  Var append(Node node);
  const Node& checked(Var v, std::string_view op) const;

  std::vector<Node> nodes_;
  std::vector<NodeId> parameters_;
  std::map<std::string, std::size_t, std::less<>> marks_;
};

inline Gradients backward(Graph& graph, Var loss) { return graph.backward(loss); }

namespace debug {
/// Flips the sign of one op's backward rule on the calling thread. Only for
/// exercising the gradient checker's failure path.
void inject_wrong_sign(std::optional<Op> op) noexcept;
}  // namespace debug

}  // namespace simtoken
