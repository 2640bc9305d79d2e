// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "simtoken/graph.hpp"

namespace simtoken::losses {

inline constexpr double kDiceSmoothing = 1.0;
inline constexpr double kTemperature = 0.07;
inline constexpr double kLambda = 0.1;

/// Mean cross-entropy of `logits` rows against `targets`, one row per target.
Var loss_text(Graph& g, Var logits, const std::vector<std::size_t>& targets);

struct MaskLoss {
  Var bce, dice, mask;
};

/// BCE (mean over elements) plus smoothed Dice over all elements jointly.
/// `gt` must be binary and match the logits' shape.
MaskLoss loss_mask(Graph& g, Var logits, const Tensor& gt);
/// Same, pooled over several logit blocks (e.g. the frames of one video).
MaskLoss loss_mask(Graph& g, const std::vector<Var>& logits, const std::vector<Tensor>& gt);

/// -(1/K) sum_p log softmax_P(q.p / tau)[p] for a 1 x D anchor and K
/// members. Raw dot products; gradients reach q and every member. An empty
/// set gives a constant 0.
Var loss_sa(Graph& g, Var anchor, const std::vector<Var>& positives, double tau = kTemperature);

struct SampleKey {
  std::string expression_id;
  std::string video_id;
  std::optional<int> target_object_id;
};

struct PositiveSet {
  std::size_t anchor = 0;             // index into the batch
  std::vector<std::size_t> members;   // indices into the batch, anchor excluded
};

/// One set per targeted expression with at least one same-target partner in
/// the batch. Null expressions never form sets.
std::vector<PositiveSet> build_positive_sets(const std::vector<SampleKey>& batch);

struct LossBreakdown {
  double l_text = 0, l_bce = 0, l_dice = 0, l_mask = 0, l_sa = 0, total = 0;
  double lambda = kLambda;
  std::size_t sa_anchors = 0;  // expressions contributing to l_sa
};

struct TotalLoss {
  Var total;
  LossBreakdown values;
};

/// total = text + mask + lambda * sa. A missing sa term contributes zero.
TotalLoss total_loss(Graph& g, Var text, const MaskLoss& mask, std::optional<Var> sa, double lambda, std::size_t sa_anchors);

}  // namespace simtoken::losses
