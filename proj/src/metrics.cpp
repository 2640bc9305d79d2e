// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#include "simtoken/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "simtoken/errors.hpp"

namespace simtoken::metrics {

namespace {

void check_pair(const Tensor& pred, const Tensor& gt, const char* op) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError(std::string(op) + ": prediction " + shape_string(pred.shape()) + " vs ground truth " +
                     shape_string(gt.shape()));
  }
}

// Frames of a T x H x W (or H x W) mask.
struct FrameDims {
  std::size_t frames, height, width;
};

FrameDims frame_dims(const Tensor& m, const char* op) {
  if (m.rank() == 2) return {1, m.dim(0), m.dim(1)};
  if (m.rank() == 3) return {m.dim(0), m.dim(1), m.dim(2)};
  throw ShapeError(std::string(op) + ": expected H x W or T x H x W, got " + shape_string(m.shape()));
}

std::vector<std::uint8_t> boundary(const Tensor& m, std::size_t offset, std::size_t h, std::size_t w) {
  std::vector<std::uint8_t> b(h * w, 0);
  auto fg = [&](long r, long c) {
    if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(w)) return false;
    return m[offset + static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)] > 0.5;
  };
  for (long r = 0; r < static_cast<long>(h); ++r)
    for (long c = 0; c < static_cast<long>(w); ++c) {
      if (!fg(r, c)) continue;
      b[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)] =
          !fg(r - 1, c) || !fg(r + 1, c) || !fg(r, c - 1) || !fg(r, c + 1);
    }
  return b;
}

// Boundary pixels of `a` that have a boundary pixel of `b` within the radius.
std::pair<std::size_t, std::size_t> matched(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b,
                                            std::size_t h, std::size_t w, std::size_t radius) {
  std::size_t hit = 0, total = 0;
  const long rad = static_cast<long>(radius);
  for (long r = 0; r < static_cast<long>(h); ++r)
    for (long c = 0; c < static_cast<long>(w); ++c) {
      if (!a[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)]) continue;
      ++total;
      bool found = false;
      for (long dr = -rad; dr <= rad && !found; ++dr)
        for (long dc = -rad; dc <= rad && !found; ++dc) {
          const long rr = r + dr, cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(w)) continue;
          found = b[static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc)];
        }
      hit += found;
    }
  return {hit, total};
}

}  // namespace

double jaccard(const Tensor& pred, const Tensor& gt) {
  check_pair(pred, gt, "jaccard");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] > 0.5, g = gt[i] > 0.5;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::size_t boundary_radius(std::size_t height, std::size_t width) {
  const double diag = std::sqrt(static_cast<double>(height * height + width * width));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.0075 * diag)));
}

double boundary_f(const Tensor& pred, const Tensor& gt, std::size_t radius) {
  check_pair(pred, gt, "boundary_f");
  const FrameDims d = frame_dims(pred, "boundary_f");
  double sum = 0.0;
  for (std::size_t t = 0; t < d.frames; ++t) {
    const std::size_t off = t * d.height * d.width;
    const auto bp = boundary(pred, off, d.height, d.width);
    const auto bg = boundary(gt, off, d.height, d.width);
    const auto [pm, pn] = matched(bp, bg, d.height, d.width, radius);
    const auto [gm, gn] = matched(bg, bp, d.height, d.width, radius);
    if (pn == 0 && gn == 0) {
      sum += 1.0;
      continue;
    }
    const double precision = pn == 0 ? 0.0 : static_cast<double>(pm) / static_cast<double>(pn);
    const double recall = gn == 0 ? 0.0 : static_cast<double>(gm) / static_cast<double>(gn);
    sum += precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
  }
  return sum / static_cast<double>(d.frames);
}

double boundary_f(const Tensor& pred, const Tensor& gt) {
  const FrameDims d = frame_dims(pred, "boundary_f");
  return boundary_f(pred, gt, boundary_radius(d.height, d.width));
}

double null_score(const std::vector<Tensor>& preds) {
  if (preds.empty()) return 0.0;
  double sum = 0.0;
  for (const Tensor& p : preds) {
    std::size_t on = 0;
    for (double v : p.data()) on += v > 0.5;
    sum += static_cast<double>(on) / static_cast<double>(p.size());
  }
  return sum / static_cast<double>(preds.size());
}

void ScoreAccumulator::add(const std::string& group, double j, double f) {
  Sum& s = sums_[group];
  s.j += j;
  s.f += f;
  ++s.n;
}

SplitScores ScoreAccumulator::scores(const std::string& group) const {
  SplitScores out;
  auto it = sums_.find(group);
  if (it == sums_.end() || it->second.n == 0) return out;
  const double n = static_cast<double>(it->second.n);
  out.j = it->second.j / n;
  out.f = it->second.f / n;
  out.jf = (out.j + out.f) / 2.0;
  out.count = it->second.n;
  return out;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["conventions"] = {{"J", "intersection over union pooled over all frames of a video"},
                      {"F", "per-frame boundary F-measure, 4-neighbour boundaries, Chebyshev tolerance "
                            "max(1, ceil(0.0075 * diagonal))"},
                      {"S", "mean predicted-foreground ratio on null expressions (local convention)"}};
  nlohmann::json splits = nlohmann::json::object();
  for (const auto& [name, s] : r.splits) splits[name] = {{"J", s.j}, {"F", s.f}, {"J&F", s.jf}, {"count", s.count}};
  j["splits"] = splits;
  if (r.has_null) j["null"] = {{"S", r.s}, {"count", r.null_count}};
  if (r.seg_pairs > 0) j["seg_cosine"] = {{"mean", r.seg_cosine}, {"pairs", r.seg_pairs}};
  return j;
}

std::string format_table(const EvalReport& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %8s %8s %8s %8s\n", "split", "J", "F", "J&F", "count");
  os << line;
  for (const auto& [name, s] : r.splits) {
    std::snprintf(line, sizeof line, "%-12s %8.4f %8.4f %8.4f %8zu\n", name.c_str(), s.j, s.f, s.jf, s.count);
    os << line;
  }
  if (r.has_null) {
    std::snprintf(line, sizeof line, "%-12s %8s %8s %8s %8zu   S = %.4f\n", "null", "-", "-", "-", r.null_count, r.s);
    os << line;
  }
  return os.str();
}

}  // namespace simtoken::metrics
