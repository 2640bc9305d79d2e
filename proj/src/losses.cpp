// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#include "simtoken/losses.hpp"

#include <map>

#include "simtoken/errors.hpp"

namespace simtoken::losses {

Var loss_text(Graph& g, Var logits, const std::vector<std::size_t>& targets) {
  const Tensor& lv = g.value(logits);
  if (lv.rank() != 2 || lv.dim(0) != targets.size()) {
    throw ShapeError("loss_text: " + std::to_string(targets.size()) + " targets for logits " + shape_string(lv.shape()));
  }
  const std::size_t V = lv.dim(1);
  std::vector<double> onehot(lv.size(), 0.0);
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] >= V) throw ShapeError("loss_text: target id " + std::to_string(targets[r]) + " outside vocab");
    onehot[r * V + targets[r]] = 1.0;
  }
  Var picked = g.sum_all(g.multiply(g.log_softmax(logits), g.input(Tensor(lv.shape(), std::move(onehot)))));
  return g.scale(picked, -1.0 / static_cast<double>(targets.size()));
}

MaskLoss loss_mask(Graph& g, const std::vector<Var>& logits, const std::vector<Tensor>& gt) {
  if (logits.empty() || logits.size() != gt.size()) throw ShapeError("loss_mask: logits and ground truth counts differ");
  std::vector<Var> pos_terms, neg_terms, overlap, prob_sums;
  double gt_sum = 0.0, count = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const Tensor& lv = g.value(logits[i]);
    if (lv.shape() != gt[i].shape()) {
      throw ShapeError("loss_mask: logits " + shape_string(lv.shape()) + " vs ground truth " + shape_string(gt[i].shape()));
    }
    std::vector<double> inv(gt[i].size());
    for (std::size_t k = 0; k < inv.size(); ++k) {
      const double v = gt[i][k];
      if (v != 0.0 && v != 1.0) throw Error("loss_mask: ground truth is not binary");
      inv[k] = 1.0 - v;
      gt_sum += v;
    }
    count += static_cast<double>(gt[i].size());
    Var gv = g.input(gt[i]);
    Var gi = g.input(Tensor(gt[i].shape(), std::move(inv)));
    pos_terms.push_back(g.sum_all(g.multiply(g.log_sigmoid(logits[i]), gv)));
    neg_terms.push_back(g.sum_all(g.multiply(g.log_sigmoid(g.scale(logits[i], -1.0)), gi)));
    Var p = g.sigmoid(logits[i]);
    overlap.push_back(g.sum_all(g.multiply(p, gv)));
    prob_sums.push_back(g.sum_all(p));
  }
  auto total = [&](const std::vector<Var>& v) {
    Var acc = v[0];
    for (std::size_t i = 1; i < v.size(); ++i) acc = g.add(acc, v[i]);
    return acc;
  };
  MaskLoss out;
  out.bce = g.scale(g.add(total(pos_terms), total(neg_terms)), -1.0 / count);

  Var eps = g.input(Tensor::scalar(kDiceSmoothing));
  Var num = g.add(g.scale(total(overlap), 2.0), eps);
  Var den = g.add(total(prob_sums), g.input(Tensor::scalar(gt_sum + kDiceSmoothing)));
  Var ratio = g.exp(g.add(g.log(num), g.scale(g.log(den), -1.0)));
  out.dice = g.add(g.input(Tensor::scalar(1.0)), g.scale(ratio, -1.0));
  out.mask = g.add(out.bce, out.dice);
  return out;
}

MaskLoss loss_mask(Graph& g, Var logits, const Tensor& gt) { return loss_mask(g, std::vector<Var>{logits}, {gt}); }

Var loss_sa(Graph& g, Var anchor, const std::vector<Var>& positives, double tau) {
  if (!(tau > 0.0)) throw Error("loss_sa: temperature must be positive");
  if (positives.empty()) return g.input(Tensor::scalar(0.0));
  Var members = positives.size() == 1 ? positives[0] : g.concat(positives, 0);
  const Tensor& qv = g.value(anchor);
  if (qv.rank() != 2 || qv.dim(0) != 1 || g.value(members).dim(1) != qv.dim(1)) {
    throw ShapeError("loss_sa: anchor " + shape_string(qv.shape()) + " vs members " + shape_string(g.value(members).shape()));
  }
  Var sims = g.scale(g.matmul(anchor, g.transpose(members)), 1.0 / tau);
  return g.scale(g.sum_all(g.log_softmax(sims)), -1.0 / static_cast<double>(positives.size()));
}

std::vector<PositiveSet> build_positive_sets(const std::vector<SampleKey>& batch) {
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].target_object_id) groups[{batch[i].video_id, *batch[i].target_object_id}].push_back(i);
  }
  std::vector<PositiveSet> sets;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch[i].target_object_id) continue;
    const auto& group = groups[{batch[i].video_id, *batch[i].target_object_id}];
    if (group.size() < 2) continue;
    PositiveSet s{i, {}};
    for (std::size_t j : group) {
      if (j != i) s.members.push_back(j);
    }
    sets.push_back(std::move(s));
  }
  return sets;
}

TotalLoss total_loss(Graph& g, Var text, const MaskLoss& mask, std::optional<Var> sa, double lambda, std::size_t sa_anchors) {
  if (!(lambda >= 0.0)) throw Error("total_loss: lambda must be non-negative");
  TotalLoss out;
  Var total = g.add(text, mask.mask);
  if (sa) total = g.add(total, g.scale(*sa, lambda));
  out.total = total;
  LossBreakdown& v = out.values;
  v.l_text = g.value(text).item();
  v.l_bce = g.value(mask.bce).item();
  v.l_dice = g.value(mask.dice).item();
  v.l_mask = g.value(mask.mask).item();
  v.l_sa = sa ? g.value(*sa).item() : 0.0;
  v.total = g.value(total).item();
  v.lambda = lambda;
  v.sa_anchors = sa_anchors;
  return out;
}

}  // namespace simtoken::losses
