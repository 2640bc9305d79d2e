// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "simtoken/tensor.hpp"

namespace simtoken::metrics {

/// Intersection over union pooled over every element; empty vs empty is 1.
double jaccard(const Tensor& pred, const Tensor& gt);

/// max(1, ceil(0.0075 * diagonal)).
std::size_t boundary_radius(std::size_t height, std::size_t width);

/// Per-frame boundary F-measure averaged over frames. Boundary pixels are
/// foreground pixels with a background 4-neighbour, the frame border counting
/// as background; matches use Chebyshev distance <= radius.
double boundary_f(const Tensor& pred, const Tensor& gt, std::size_t radius);
double boundary_f(const Tensor& pred, const Tensor& gt);

/// Mean predicted-foreground ratio over null-split predictions.
double null_score(const std::vector<Tensor>& preds);

struct SplitScores {
  double j = 0, f = 0, jf = 0;
  std::size_t count = 0;
};

struct EvalReport {
  std::map<std::string, SplitScores> splits;  // seen, unseen, mix, audio-cue, ...
  double s = 0;
  std::size_t null_count = 0;
  bool has_null = false;
  double seg_cosine = 0;  // mean intra-target pairwise cosine of F_seg
  std::size_t seg_pairs = 0;
};

/// Accumulates per-sample scores.
class ScoreAccumulator {
 public:
  void add(const std::string& group, double j, double f);
  SplitScores scores(const std::string& group) const;
  bool has(const std::string& group) const { return sums_.count(group) > 0; }

 private:
  struct Sum {
    double j = 0, f = 0;
    std::size_t n = 0;
  };
  std::map<std::string, Sum> sums_;
};

nlohmann::json to_json(const EvalReport& r);
/// Fixed-width table: one row per split with J, F, J&F, then S.
std::string format_table(const EvalReport& r);

}  // namespace simtoken::metrics
