// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#include "simtoken/graph.hpp"

#include <algorithm>
#include <cmath>

#include "simtoken/errors.hpp"

namespace simtoken {

namespace {

thread_local std::optional<Op> g_wrong_sign;

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

std::size_t last_dim(const Shape& shape) { return shape.empty() ? 1 : shape.back(); }

// c[m,n] += a[m,k] * b[k,n]
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

std::vector<double> transposed(std::span<const double> a, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

double gelu_value(double x) {
  const double u = kGeluK0 * (x + kGeluK1 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_derivative(double x) {
  const double u = kGeluK0 * (x + kGeluK1 * x * x * x);
  const double th = std::tanh(u);
  const double du = kGeluK0 * (1.0 + 3.0 * kGeluK1 * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid_value(double x) {
  // log(sigmoid(x)) = -softplus(-x)
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

std::string mismatch(std::string_view op, const Shape& a, const Shape& b) {
  return std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b);
}

}  // namespace

namespace debug {
void inject_wrong_sign(std::optional<Op> op) noexcept { g_wrong_sign = op; }
}  // namespace debug

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Parameter: return "parameter";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Multiply: return "multiply";
    case Op::Scale: return "scale";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::Mean: return "mean";
    case Op::Sum: return "sum";
    case Op::Transpose: return "transpose";
    case Op::Softmax: return "softmax";
    case Op::LogSoftmax: return "log_softmax";
    case Op::Log: return "log";
    case Op::Exp: return "exp";
    case Op::Sigmoid: return "sigmoid";
    case Op::LogSigmoid: return "log_sigmoid";
    case Op::Gelu: return "gelu";
    case Op::LayerNorm: return "layer_norm";
    case Op::Embedding: return "embedding";
    case Op::Reshape: return "reshape";
  }
  return "unknown";
}

const Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw Error("graph: unknown node id " + std::to_string(v.id));
  return nodes_[v.id];
}

const Node& Graph::checked(Var v, std::string_view op) const {
  if (v.id >= nodes_.size()) {
    throw Error(std::string(op) + ": input node " + std::to_string(v.id) + " does not precede the new node");
  }
  return nodes_[v.id];
}

Var Graph::append(Node node) {
  node.id = nodes_.size();
  for (NodeId in : node.inputs) {
    if (in >= node.id) throw Error("graph: cycle detected, input " + std::to_string(in) + " does not precede node");
  }
  nodes_.push_back(std::move(node));
  return Var{nodes_.back().id};
}

Var Graph::input(Tensor value) {
  Node n;
  n.op = Op::Input;
  n.value = std::move(value);
  return append(std::move(n));
}

Var Graph::parameter(Tensor value) {
  Node n;
  n.op = Op::Parameter;
  n.value = std::move(value);
  Var v = append(std::move(n));
  parameters_.push_back(v.id);
  return v;
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& av = checked(a, "matmul").value;
  const Tensor& bv = checked(b, "matmul").value;
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError(mismatch("matmul", av.shape(), bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  std::vector<double> out(m * n, 0.0);
  gemm_acc(av.data().data(), bv.data().data(), out.data(), m, k, n);
  Node node;
  node.op = Op::MatMul;
  node.inputs = {a.id, b.id};
  node.value = Tensor({m, n}, std::move(out));
  return append(std::move(node));
}

Var Graph::add(Var a, Var b) {
  const Tensor& av = checked(a, "add").value;
  const Tensor& bv = checked(b, "add").value;
  if (av.shape() != bv.shape()) throw ShapeError(mismatch("add", av.shape(), bv.shape()));
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  Node node;
  node.op = Op::Add;
  node.inputs = {a.id, b.id};
  node.value = Tensor(av.shape(), std::move(out));
  return append(std::move(node));
}

Var Graph::multiply(Var a, Var b) {
  const Tensor& av = checked(a, "multiply").value;
  const Tensor& bv = checked(b, "multiply").value;
  if (av.shape() != bv.shape()) throw ShapeError(mismatch("multiply", av.shape(), bv.shape()));
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  Node node;
  node.op = Op::Multiply;
  node.inputs = {a.id, b.id};
  node.value = Tensor(av.shape(), std::move(out));
  return append(std::move(node));
}

Var Graph::scale(Var a, double factor) {
  const Tensor& av = checked(a, "scale").value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  Node node;
  node.op = Op::Scale;
  node.inputs = {a.id};
  node.scalar = factor;
  node.value = Tensor(av.shape(), std::move(out));
  return append(std::move(node));
}

Var Graph::concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = checked(parts[0], "concat").value.shape();
  if (axis >= first.size()) throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (Var p : parts) {
    const Shape& s = checked(p, "concat").value.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) throw ShapeError(mismatch("concat", first, s));
    out_shape[axis] += s[axis];
  }
  const AxisSplit out_split = split_axis(out_shape, axis);
  std::vector<double> out(shape_size(out_shape));
  std::size_t offset = 0;
  Node node;
  node.op = Op::Concat;
  node.axis = axis;
  for (Var p : parts) {
    const Tensor& pv = nodes_[p.id].value;
    const AxisSplit s = split_axis(pv.shape(), axis);
    const std::size_t chunk = s.n * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pv.data().data() + o * chunk, chunk,
                  out.data() + o * out_split.n * out_split.inner + offset * out_split.inner);
    }
    offset += s.n;
    node.inputs.push_back(p.id);
  }
  node.value = Tensor(std::move(out_shape), std::move(out));
  return append(std::move(node));
}

Var Graph::slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor& av = checked(a, "slice").value;
  if (axis >= av.rank()) throw ShapeError("slice: axis " + std::to_string(axis) + " out of range for " + shape_string(av.shape()));
  if (begin >= end || end > av.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                     shape_string(av.shape()) + " axis " + std::to_string(axis));
  }
  const AxisSplit s = split_axis(av.shape(), axis);
  Shape out_shape = av.shape();
  out_shape[axis] = end - begin;
  const std::size_t len = (end - begin) * s.inner;
  std::vector<double> out(s.outer * len);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(av.data().data() + o * s.n * s.inner + begin * s.inner, len, out.data() + o * len);
  }
  Node node;
  node.op = Op::Slice;
  node.inputs = {a.id};
  node.axis = axis;
  node.begin = begin;
  node.end = end;
  node.value = Tensor(std::move(out_shape), std::move(out));
  return append(std::move(node));
}

Var Graph::sum(Var a, std::size_t axis) {
  const Tensor& av = checked(a, "sum").value;
  if (axis >= av.rank()) throw ShapeError("sum: axis " + std::to_string(axis) + " out of range for " + shape_string(av.shape()));
  const AxisSplit s = split_axis(av.shape(), axis);
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.n; ++i)
      for (std::size_t j = 0; j < s.inner; ++j) out[o * s.inner + j] += av[(o * s.n + i) * s.inner + j];
  Shape out_shape = av.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Node node;
  node.op = Op::Sum;
  node.inputs = {a.id};
  node.axis = axis;
  node.value = Tensor(std::move(out_shape), std::move(out));
  return append(std::move(node));
}

Var Graph::mean(Var a, std::size_t axis) {
  const Tensor& av = checked(a, "mean").value;
  if (axis >= av.rank()) throw ShapeError("mean: axis " + std::to_string(axis) + " out of range for " + shape_string(av.shape()));
  const AxisSplit s = split_axis(av.shape(), axis);
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.n; ++i)
      for (std::size_t j = 0; j < s.inner; ++j) out[o * s.inner + j] += av[(o * s.n + i) * s.inner + j];
  const double inv = 1.0 / static_cast<double>(s.n);
  for (double& v : out) v *= inv;
  Shape out_shape = av.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Node node;
  node.op = Op::Mean;
  node.inputs = {a.id};
  node.axis = axis;
  node.value = Tensor(std::move(out_shape), std::move(out));
  return append(std::move(node));
}

Var Graph::sum_all(Var a) {
  Var v = a;
  while (node(v).value.rank() > 0) v = sum(v, node(v).value.rank() - 1);
  return v;
}

Var Graph::mean_all(Var a) {
  const double n = static_cast<double>(node(a).value.size());
  return scale(sum_all(a), 1.0 / n);
}

Var Graph::transpose(Var a) {
  const Tensor& av = checked(a, "transpose").value;
  if (av.rank() != 2) throw ShapeError("transpose: expected 2-D input, got " + shape_string(av.shape()));
  Node node;
  node.op = Op::Transpose;
  node.inputs = {a.id};
  node.value = Tensor({av.dim(1), av.dim(0)}, transposed(av.data(), av.dim(0), av.dim(1)));
  return append(std::move(node));
}

Var Graph::reshape(Var a, Shape shape) {
  const Tensor& av = checked(a, "reshape").value;
  if (shape_size(shape) != av.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(av.shape()) + " as " + shape_string(shape));
  }
  Node node;
  node.op = Op::Reshape;
  node.inputs = {a.id};
  node.value = av.reshaped(std::move(shape));
  return append(std::move(node));
}

Var Graph::softmax(Var a) {
  const Tensor& av = checked(a, "softmax").value;
  const std::size_t d = last_dim(av.shape());
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < av.size() / d; ++r) {
    const double* x = av.data().data() + r * d;
    double* y = out.data() + r * d;
    const double mx = *std::max_element(x, x + d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < d; ++j) y[j] /= z;
  }
  Node node;
  node.op = Op::Softmax;
  node.inputs = {a.id};
  node.value = Tensor(av.shape(), std::move(out));
  return append(std::move(node));
}

Var Graph::log_softmax(Var a) {
  const Tensor& av = checked(a, "log_softmax").value;
  const std::size_t d = last_dim(av.shape());
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < av.size() / d; ++r) {
    const double* x = av.data().data() + r * d;
    double* y = out.data() + r * d;
    const double mx = *std::max_element(x, x + d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += std::exp(x[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < d; ++j) y[j] = x[j] - lz;
  }
  Node node;
  node.op = Op::LogSoftmax;
  node.inputs = {a.id};
  node.value = Tensor(av.shape(), std::move(out));
  return append(std::move(node));
}

namespace {
template <typename F>
Node unary(const Node& in, Op op, F f) {
  const Tensor& av = in.value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  Node node;
  node.op = op;
  node.inputs = {in.id};
  node.value = Tensor(av.shape(), std::move(out));
  return node;
}
}  // namespace

Var Graph::log(Var a) { return append(unary(checked(a, "log"), Op::Log, [](double x) { return std::log(x); })); }
Var Graph::exp(Var a) { return append(unary(checked(a, "exp"), Op::Exp, [](double x) { return std::exp(x); })); }
Var Graph::sigmoid(Var a) { return append(unary(checked(a, "sigmoid"), Op::Sigmoid, sigmoid_value)); }
Var Graph::log_sigmoid(Var a) { return append(unary(checked(a, "log_sigmoid"), Op::LogSigmoid, log_sigmoid_value)); }
Var Graph::gelu(Var a) { return append(unary(checked(a, "gelu"), Op::Gelu, gelu_value)); }

Var Graph::layer_norm(Var a) {
  const Tensor& av = checked(a, "layer_norm").value;
  const std::size_t d = last_dim(av.shape());
  const std::size_t rows = av.size() / d;
  std::vector<double> out(av.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += x[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = (x[j] - mu) * is;
  }
  Node node;
  node.op = Op::LayerNorm;
  node.inputs = {a.id};
  node.cache = std::move(inv_std);
  node.value = Tensor(av.shape(), std::move(out));
  return append(std::move(node));
}

Var Graph::embedding(Var table, std::vector<std::size_t> ids) {
  const Tensor& tv = checked(table, "embedding").value;
  if (tv.rank() != 2) throw ShapeError("embedding: table must be 2-D, got " + shape_string(tv.shape()));
  if (ids.empty()) throw ShapeError("embedding: empty id list");
  const std::size_t d = tv.dim(1);
  std::vector<double> out(ids.size() * d);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= tv.dim(0)) {
      throw ShapeError("embedding: id " + std::to_string(ids[r]) + " out of range for table " + shape_string(tv.shape()));
    }
    std::copy_n(tv.data().data() + ids[r] * d, d, out.data() + r * d);
  }
  Node node;
  node.op = Op::Embedding;
  node.inputs = {table.id};
  node.value = Tensor({ids.size(), d}, std::move(out));
  node.indices = std::move(ids);
  return append(std::move(node));
}

std::size_t Graph::count(Op op) const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [op](const Node& n) { return n.op == op; }));
}

void Graph::mark(std::string_view tag) {
  auto it = marks_.find(tag);
  if (it == marks_.end()) {
    marks_.emplace(std::string(tag), 1);
  } else {
    ++it->second;
  }
}

std::size_t Graph::marks(std::string_view tag) const {
  auto it = marks_.find(tag);
  return it == marks_.end() ? 0 : it->second;
}

Gradients Graph::backward(Var loss) {
  const Node& ln = node(loss);
  if (ln.value.size() != 1 || ln.value.rank() > 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_string(ln.value.shape()));
  }
  const std::size_t count = loss.id + 1;
  std::vector<std::vector<double>> grads(count);
  grads[loss.id].assign(1, 1.0);

  auto acc = [&](NodeId id) -> std::vector<double>& {
    auto& g = grads[id];
    if (g.empty()) g.assign(nodes_[id].value.size(), 0.0);
    return g;
  };

  // Only nodes downstream of a parameter carry gradient.
  std::vector<char> needs(count, 0);
  for (std::size_t id = 0; id < count; ++id) {
    const Node& n = nodes_[id];
    needs[id] = n.op == Op::Parameter;
    for (NodeId in : n.inputs) needs[id] = needs[id] || needs[in];
  }

  for (std::size_t step = count; step-- > 0;) {
    if (grads[step].empty() || !needs[step]) continue;
    const Node& n = nodes_[step];
    const std::vector<double>& gy = grads[step];
    const double sign = (g_wrong_sign && *g_wrong_sign == n.op) ? -1.0 : 1.0;
    const Tensor& y = n.value;

    switch (n.op) {
      case Op::Input:
      case Op::Parameter:
        break;
      case Op::MatMul: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Tensor& b = nodes_[n.inputs[1]].value;
        const std::size_t m = a.dim(0), k = a.dim(1), nn = b.dim(1);
        if (needs[n.inputs[0]]) {
          // dA = dY * B^T
          const std::vector<double> bt = transposed(b.data(), k, nn);
          std::vector<double> da(m * k, 0.0);
          gemm_acc(gy.data(), bt.data(), da.data(), m, nn, k);
          auto& ga = acc(n.inputs[0]);
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += sign * da[i];
        }
        if (needs[n.inputs[1]]) {
          // dB = A^T * dY
          const std::vector<double> at = transposed(a.data(), m, k);
          std::vector<double> db(k * nn, 0.0);
          gemm_acc(at.data(), gy.data(), db.data(), k, m, nn);
          auto& gb = acc(n.inputs[1]);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += sign * db[i];
        }
        break;
      }
      case Op::Add: {
        for (NodeId in : n.inputs) {
          auto& g = acc(in);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * gy[i];
        }
        break;
      }
      case Op::Multiply: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Tensor& b = nodes_[n.inputs[1]].value;
        {
          auto& ga = acc(n.inputs[0]);
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += sign * gy[i] * b[i];
        }
        {
          auto& gb = acc(n.inputs[1]);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += sign * gy[i] * a[i];
        }
        break;
      }
      case Op::Scale: {
        auto& g = acc(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * gy[i] * n.scalar;
        break;
      }
      case Op::Concat: {
        const AxisSplit out_split = split_axis(y.shape(), n.axis);
        std::size_t offset = 0;
        for (NodeId in : n.inputs) {
          const AxisSplit s = split_axis(nodes_[in].value.shape(), n.axis);
          auto& g = acc(in);
          const std::size_t chunk = s.n * s.inner;
          for (std::size_t o = 0; o < s.outer; ++o) {
            const double* src = gy.data() + o * out_split.n * out_split.inner + offset * out_split.inner;
            double* dst = g.data() + o * chunk;
            for (std::size_t i = 0; i < chunk; ++i) dst[i] += sign * src[i];
          }
          offset += s.n;
        }
        break;
      }
      case Op::Slice: {
        const AxisSplit s = split_axis(nodes_[n.inputs[0]].value.shape(), n.axis);
        auto& g = acc(n.inputs[0]);
        const std::size_t len = (n.end - n.begin) * s.inner;
        for (std::size_t o = 0; o < s.outer; ++o) {
          double* dst = g.data() + o * s.n * s.inner + n.begin * s.inner;
          const double* src = gy.data() + o * len;
          for (std::size_t i = 0; i < len; ++i) dst[i] += sign * src[i];
        }
        break;
      }
      case Op::Sum:
      case Op::Mean: {
        const AxisSplit s = split_axis(nodes_[n.inputs[0]].value.shape(), n.axis);
        const double f = sign * (n.op == Op::Mean ? 1.0 / static_cast<double>(s.n) : 1.0);
        auto& g = acc(n.inputs[0]);
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t i = 0; i < s.n; ++i)
            for (std::size_t j = 0; j < s.inner; ++j) g[(o * s.n + i) * s.inner + j] += f * gy[o * s.inner + j];
        break;
      }
      case Op::Transpose: {
        auto& g = acc(n.inputs[0]);
        const std::size_t rows = y.dim(0), cols = y.dim(1);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) g[j * rows + i] += sign * gy[i * cols + j];
        break;
      }
      case Op::Softmax: {
        const std::size_t d = last_dim(y.shape());
        auto& g = acc(n.inputs[0]);
        for (std::size_t r = 0; r < y.size() / d; ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < d; ++j) dot += gy[r * d + j] * y[r * d + j];
          for (std::size_t j = 0; j < d; ++j) g[r * d + j] += sign * y[r * d + j] * (gy[r * d + j] - dot);
        }
        break;
      }
      case Op::LogSoftmax: {
        const std::size_t d = last_dim(y.shape());
        auto& g = acc(n.inputs[0]);
        for (std::size_t r = 0; r < y.size() / d; ++r) {
          double total = 0.0;
          for (std::size_t j = 0; j < d; ++j) total += gy[r * d + j];
          for (std::size_t j = 0; j < d; ++j) g[r * d + j] += sign * (gy[r * d + j] - std::exp(y[r * d + j]) * total);
        }
        break;
      }
      case Op::Log: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        auto& g = acc(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * gy[i] / x[i];
        break;
      }
      case Op::Exp: {
        auto& g = acc(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * gy[i] * y[i];
        break;
      }
      case Op::Sigmoid: {
        auto& g = acc(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * gy[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Op::LogSigmoid: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        auto& g = acc(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * gy[i] * sigmoid_value(-x[i]);
        break;
      }
      case Op::Gelu: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        auto& g = acc(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * gy[i] * gelu_derivative(x[i]);
        break;
      }
      case Op::LayerNorm: {
        const std::size_t d = last_dim(y.shape());
        auto& g = acc(n.inputs[0]);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < y.size() / d; ++r) {
          double mean_g = 0.0, mean_gy = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            mean_g += gy[r * d + j];
            mean_gy += gy[r * d + j] * y[r * d + j];
          }
          mean_g *= inv_d;
          mean_gy *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            g[r * d + j] += sign * n.cache[r] * (gy[r * d + j] - mean_g - y[r * d + j] * mean_gy);
          }
        }
        break;
      }
      case Op::Reshape: {
        auto& g = acc(n.inputs[0]);
        for (std::size_t i = 0; i < gy.size(); ++i) g[i] += sign * gy[i];
        break;
      }
      case Op::Embedding: {
        const std::size_t d = y.dim(1);
        auto& g = acc(n.inputs[0]);
        for (std::size_t r = 0; r < n.indices.size(); ++r)
          for (std::size_t j = 0; j < d; ++j) g[n.indices[r] * d + j] += sign * gy[r * d + j];
        break;
      }
    }
  }

  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    Node& n = nodes_[id];
    if (id < count && !grads[id].empty()) {
      n.grad = Tensor(n.value.shape(), std::move(grads[id]));
    } else {
      n.grad = Tensor::zeros(n.value.shape());
    }
  }

  Gradients out;
  for (NodeId p : parameters_) out.emplace(p, nodes_[p].grad);
  return out;
}

}  // namespace simtoken
