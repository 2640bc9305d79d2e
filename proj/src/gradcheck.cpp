// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#include "simtoken/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "simtoken/errors.hpp"

namespace simtoken {

namespace {

double evaluate(const MultiLossBuilder& f, const std::vector<Tensor>& points) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(points.size());
  for (const Tensor& p : points) vars.push_back(g.parameter(p));
  const Var loss = f(g, vars);
  const double v = g.value(loss).item();
  if (!std::isfinite(v)) throw NonFiniteError("grad_check: non-finite loss");
  return v;
}

Tensor with_coordinate(const Tensor& t, std::size_t i, double value) {
  std::vector<double> data(t.data().begin(), t.data().end());
  data[i] = value;
  return Tensor(t.shape(), std::move(data));
}

}  // namespace

CheckReport grad_check(const LossBuilder& function, const Tensor& point, double step, double tolerance,
                       std::string name) {
  MultiLossBuilder multi = [&function](Graph& g, const std::vector<Var>& p) { return function(g, p[0]); };
  return grad_check_multi(multi, {point}, step, tolerance, 0, std::move(name));
}

CheckReport grad_check_multi(const MultiLossBuilder& function, const std::vector<Tensor>& points, double step,
                             double tolerance, std::size_t max_coords_per_tensor, std::string name) {
  if (!(step > 0.0)) throw Error("grad_check: step must be positive");
  CheckReport report;
  report.name = std::move(name);
  try {
    Graph g;
    std::vector<Var> vars;
    for (const Tensor& p : points) vars.push_back(g.parameter(p));
    const Var loss = function(g, vars);
    if (!std::isfinite(g.value(loss).item())) throw NonFiniteError("grad_check: non-finite loss");
    const Gradients grads = g.backward(loss);

    std::size_t global = 0;
    std::vector<Tensor> probe = points;
    for (std::size_t t = 0; t < points.size(); ++t) {
      const Tensor& analytic = grads.at(vars[t].id);
      const std::size_t n = points[t].size();
      const std::size_t stride =
          (max_coords_per_tensor == 0 || n <= max_coords_per_tensor) ? 1 : (n + max_coords_per_tensor - 1) / max_coords_per_tensor;
      for (std::size_t i = 0; i < n; i += stride, ++global) {
        const double x = points[t][i];
        const double h = step * std::max(1.0, std::abs(x));
        probe[t] = with_coordinate(points[t], i, x + h);
        const double fp = evaluate(function, probe);
        probe[t] = with_coordinate(points[t], i, x - h);
        const double fm = evaluate(function, probe);
        probe[t] = points[t];
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic[i];
        const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
        ++report.coordinates;
        if (rel > report.max_rel_error || !std::isfinite(rel)) {
          report.max_rel_error = rel;
          report.worst_index = global;
        }
        if (!std::isfinite(rel)) report.finite = false;
      }
    }
  } catch (const NonFiniteError& e) {
    report.finite = false;
    report.note = e.what();
  }
  report.passed = report.finite && report.max_rel_error <= tolerance;
  return report;
}

}  // namespace simtoken
