// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "simtoken/graph.hpp"

namespace simtoken {

/// Builds a scalar loss from the point `x`, which the checker registers as a
/// parameter of a fresh graph.
using LossBuilder = std::function<Var(Graph&, Var x)>;

struct CheckReport {
  std::string name;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool finite = true;
  bool passed = false;
  std::string note;
};

/// Central differences (f(x+h) - f(x-h)) / 2h per coordinate with
/// h = step * max(1, |x_i|). Relative error uses the denominator
/// max(1, |analytic|, |numeric|). Any non-finite intermediate fails the check.
CheckReport grad_check(const LossBuilder& function, const Tensor& point, double step, double tolerance,
                       std::string name = {});

/// Checks several parameter tensors of one loss at once. Coordinates are
/// visited in order; `max_coords_per_tensor` of 0 visits every coordinate,
/// otherwise an evenly strided subset.
using MultiLossBuilder = std::function<Var(Graph&, const std::vector<Var>& params)>;
CheckReport grad_check_multi(const MultiLossBuilder& function, const std::vector<Tensor>& points, double step,
                             double tolerance, std::size_t max_coords_per_tensor = 0, std::string name = {});

}  // namespace simtoken
