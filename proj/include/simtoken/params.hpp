// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <string_view>

#include "simtoken/graph.hpp"
#include "simtoken/random.hpp"
#include "simtoken/tensor.hpp"

namespace simtoken {

/// Named trainable tensors, iterated in name order.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  /// Replaces a value; the shape must not change.
  void set(std::string_view name, Tensor value);

  const std::map<std::string, Tensor, std::less<>>& entries() const noexcept { return entries_; }
  std::size_t scalar_count() const;
  std::size_t scalar_count(std::string_view prefix) const;

  /// Bitwise equality of names, shapes and values.
  bool identical(const ParamStore& other) const;

 private:
  std::map<std::string, Tensor, std::less<>> entries_;
};

/// Binds store entries into one graph, creating each parameter node on first
/// use so that every tensor has exactly one node per graph.
class Binder {
 public:
  Binder(Graph& graph, const ParamStore& store) : graph_(graph), store_(store) {}

  Var operator()(const std::string& name);
  /// Uses an existing node for `name` instead of creating one.
  void bind(const std::string& name, Var v);
  Graph& graph() const noexcept { return graph_; }
  const ParamStore& store() const noexcept { return store_; }

  /// Gradient per bound parameter; unbound parameters are absent.
  std::map<std::string, Tensor> gradients() const;

 private:
  Graph& graph_;
  const ParamStore& store_;
  std::map<std::string, Var, std::less<>> bound_;
};

namespace nn {

/// Weight [in, out] uniform in +-1/sqrt(in); bias [1, out] likewise.
void add_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
/// Gain ones, bias zeros, both [1, d].
void add_layer_norm(ParamStore& store, const std::string& name, std::size_t d);
/// q, k, v, o projections of width d.
void add_attention(ParamStore& store, const std::string& name, std::size_t d, Rng& rng);
/// Pre-LN block: attention then a 2d-wide GELU MLP, both residual.
void add_block(ParamStore& store, const std::string& name, std::size_t d, Rng& rng);

/// Scalar count of add_block's parameters for width d.
constexpr std::size_t block_param_count(std::size_t d) {
  const std::size_t ln = 2 * d;
  const std::size_t attn = 4 * (d * d + d);
  const std::size_t mlp = (d * 2 * d + 2 * d) + (2 * d * d + d);
  return 2 * ln + attn + mlp;
}

Var ones(Graph& g, std::size_t rows);
/// Repeats a [1, d] row n times.
Var rows(Graph& g, Var row, std::size_t n);
Var linear(Binder& b, Var x, const std::string& name);
Var layer_norm(Binder& b, Var x, const std::string& name);
/// Multi-head attention of x_q over x_kv. Causal masking requires equal
/// lengths.
Var attention(Binder& b, Var x_q, Var x_kv, const std::string& name, std::size_t heads, bool causal);
Var block(Binder& b, Var x, const std::string& name, std::size_t heads, bool causal);

}  // namespace nn

}  // namespace simtoken
