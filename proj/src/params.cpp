// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#include "simtoken/params.hpp"

#include <cmath>

#include "simtoken/errors.hpp"

namespace simtoken {

void ParamStore::add(const std::string& name, Tensor value) {
  if (!entries_.emplace(name, std::move(value)).second) throw Error("duplicate parameter '" + name + "'");
}

bool ParamStore::contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

const Tensor& ParamStore::at(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

void ParamStore::set(std::string_view name, Tensor value) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error("unknown parameter '" + std::string(name) + "'");
  if (it->second.shape() != value.shape()) {
    throw ShapeError("parameter '" + std::string(name) + "': shape " + shape_string(value.shape()) +
                     " does not match " + shape_string(it->second.shape()));
  }
  it->second = std::move(value);
}

std::size_t ParamStore::scalar_count() const { return scalar_count(""); }

std::size_t ParamStore::scalar_count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) {
    if (name.compare(0, prefix.size(), prefix) == 0) n += t.size();
  }
  return n;
}

bool ParamStore::identical(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || !a->second.identical(b->second)) return false;
  }
  return true;
}

Var Binder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = graph_.parameter(store_.at(name));
  bound_.emplace(name, v);
  return v;
}

void Binder::bind(const std::string& name, Var v) {
  if (graph_.value(v).shape() != store_.at(name).shape()) {
    throw ShapeError("bind: node shape " + shape_string(graph_.value(v).shape()) + " does not match parameter '" + name + "'");
  }
  if (!bound_.emplace(name, v).second) throw Error("bind: parameter '" + name + "' already bound");
}

std::map<std::string, Tensor> Binder::gradients() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, v] : bound_) out.emplace(name, graph_.grad(v));
  return out;
}

namespace nn {

void add_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  store.add(name + ".weight", rng.uniform_tensor({in, out}, -s, s));
  store.add(name + ".bias", rng.uniform_tensor({1, out}, -s, s));
}

void add_layer_norm(ParamStore& store, const std::string& name, std::size_t d) {
  store.add(name + ".gain", Tensor::full({1, d}, 1.0));
  store.add(name + ".bias", Tensor::zeros({1, d}));
}

void add_attention(ParamStore& store, const std::string& name, std::size_t d, Rng& rng) {
  for (const char* p : {".q", ".k", ".v", ".o"}) add_linear(store, name + p, d, d, rng);
}

void add_block(ParamStore& store, const std::string& name, std::size_t d, Rng& rng) {
  add_layer_norm(store, name + ".ln1", d);
  add_attention(store, name + ".attn", d, rng);
  add_layer_norm(store, name + ".ln2", d);
  add_linear(store, name + ".fc1", d, 2 * d, rng);
  add_linear(store, name + ".fc2", 2 * d, d, rng);
}

Var ones(Graph& g, std::size_t rows) { return g.input(Tensor::full({rows, 1}, 1.0)); }

Var rows(Graph& g, Var row, std::size_t n) {
  if (n == 1) return row;
  return g.matmul(ones(g, n), row);
}

Var linear(Binder& b, Var x, const std::string& name) {
  Graph& g = b.graph();
  Var y = g.matmul(x, b(name + ".weight"));
  return g.add(y, rows(g, b(name + ".bias"), g.value(x).dim(0)));
}

Var layer_norm(Binder& b, Var x, const std::string& name) {
  Graph& g = b.graph();
  const std::size_t n = g.value(x).dim(0);
  Var y = g.multiply(g.layer_norm(x), rows(g, b(name + ".gain"), n));
  return g.add(y, rows(g, b(name + ".bias"), n));
}

Var attention(Binder& b, Var x_q, Var x_kv, const std::string& name, std::size_t heads, bool causal) {
  Graph& g = b.graph();
  const std::size_t nq = g.value(x_q).dim(0);
  const std::size_t nk = g.value(x_kv).dim(0);
  const std::size_t d = g.value(x_q).dim(1);
  if (heads == 0 || d % heads != 0) throw ShapeError("attention: width " + std::to_string(d) + " not divisible by heads");
  if (causal && nq != nk) throw ShapeError("attention: causal masking needs equal query and key lengths");
  const std::size_t dh = d / heads;

  Var q = linear(b, x_q, name + ".q");
  Var k = linear(b, x_kv, name + ".k");
  Var v = linear(b, x_kv, name + ".v");

  std::optional<Var> mask;
  if (causal) {
    std::vector<double> m(nq * nk, 0.0);
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t j = i + 1; j < nk; ++j) m[i * nk + j] = -1e9;
    mask = g.input(Tensor({nq, nk}, std::move(m)));
  }

  std::vector<Var> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : g.slice(q, 1, h * dh, (h + 1) * dh);
    Var kh = heads == 1 ? k : g.slice(k, 1, h * dh, (h + 1) * dh);
    Var vh = heads == 1 ? v : g.slice(v, 1, h * dh, (h + 1) * dh);
    Var s = g.scale(g.matmul(qh, g.transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    if (mask) s = g.add(s, *mask);
    outs.push_back(g.matmul(g.softmax(s), vh));
  }
  Var ctx = heads == 1 ? outs[0] : g.concat(outs, 1);
  return linear(b, ctx, name + ".o");
}

Var block(Binder& b, Var x, const std::string& name, std::size_t heads, bool causal) {
  Graph& g = b.graph();
  Var h = layer_norm(b, x, name + ".ln1");
  x = g.add(x, attention(b, h, h, name + ".attn", heads, causal));
  h = layer_norm(b, x, name + ".ln2");
  h = linear(b, g.gelu(linear(b, h, name + ".fc1")), name + ".fc2");
  return g.add(x, h);
}

}  // namespace nn

}  // namespace simtoken
