// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#include "simtoken/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "simtoken/errors.hpp"
#include "simtoken/gradcheck.hpp"

namespace simtoken::harness {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("run config: " + m); };
  if (!(lambda >= 0.0)) fail("lambda must be >= 0");
  if (!(tau > 0.0)) fail("tau must be > 0");
  if (epochs == 0) fail("epochs must be positive");
  if (batch_size < 2) fail("batch_size must be >= 2");
  if (!(optimizer.lr > 0.0)) fail("optimizer.lr must be > 0");
  if (!(optimizer.weight_decay >= 0.0)) fail("optimizer.weight_decay must be >= 0");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    fail("optimizer betas must lie in [0,1)");
  }
  if (!(optimizer.eps > 0.0)) fail("optimizer.eps must be > 0");
  if (!(optimizer.grad_clip >= 0.0)) fail("optimizer.grad_clip must be >= 0");
  if (dataset.empty()) fail("dataset path is required");
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError(where + ": unknown field '" + it.key() + "'");
  }
}

}  // namespace

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base) {
  reject_unknown(j, {"dataset", "out", "model", "optimizer", "epochs", "batch_size", "lambda", "tau", "seed", "ablation"},
                 "run config");
  RunConfig c;
  try {
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    if (j.contains("model")) c.model = model::model_config_from_json(j.at("model"));
    if (j.contains("optimizer")) {
      const json& o = j.at("optimizer");
      reject_unknown(o, {"lr", "weight_decay", "beta1", "beta2", "eps", "grad_clip"}, "run config optimizer");
      c.optimizer.lr = o.value("lr", c.optimizer.lr);
      c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
      c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
      c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
      c.optimizer.eps = o.value("eps", c.optimizer.eps);
      c.optimizer.grad_clip = o.value("grad_clip", c.optimizer.grad_clip);
    }
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lambda = j.value("lambda", c.lambda);
    c.tau = j.value("tau", c.tau);
    c.seed = j.value("seed", c.seed);
    if (j.contains("ablation")) {
      const json& a = j.at("ablation");
      reject_unknown(a, {"drop_audio", "drop_vs", "drop_vt", "drop_vf_extras", "disable_sa"}, "run config ablation");
      c.ablation.drop_audio = a.value("drop_audio", false);
      c.ablation.drop_vs = a.value("drop_vs", false);
      c.ablation.drop_vt = a.value("drop_vt", false);
      c.ablation.drop_vf_extras = a.value("drop_vf_extras", false);
      c.ablation.disable_sa = a.value("disable_sa", false);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  if (!base.empty()) {
    if (!c.dataset.empty() && c.dataset.is_relative()) c.dataset = base / c.dataset;
    if (c.out.is_relative()) c.out = base / c.out;
  }
  return c;
}

json to_json(const RunConfig& c) {
  return {{"dataset", c.dataset.string()},
          {"out", c.out.string()},
          {"model", model::to_json(c.model)},
          {"optimizer",
           {{"lr", c.optimizer.lr},
            {"weight_decay", c.optimizer.weight_decay},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"eps", c.optimizer.eps},
            {"grad_clip", c.optimizer.grad_clip}}},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lambda", c.lambda},
          {"tau", c.tau},
          {"seed", c.seed},
          {"ablation",
           {{"drop_audio", c.ablation.drop_audio},
            {"drop_vs", c.ablation.drop_vs},
            {"drop_vt", c.ablation.drop_vt},
            {"drop_vf_extras", c.ablation.drop_vf_extras},
            {"disable_sa", c.ablation.disable_sa}}}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Optimizer

void AdamW::step(ParamStore& params, const std::map<std::string, Tensor>& grads, double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  std::vector<std::string> names;
  for (const auto& [name, t] : params.entries()) names.push_back(name);
  for (const std::string& name : names) {
    const Tensor& p = params.at(name);
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    auto git = grads.find(name);
    const Tensor* g = git == grads.end() ? nullptr : &git->second;
    std::vector<double> next(p.data().begin(), p.data().end());
    for (std::size_t i = 0; i < next.size(); ++i) {
      const double gi = g ? (*g)[i] : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
      next[i] -= lr * (update + config_.weight_decay * next[i]);
    }
    params.set(name, Tensor(p.shape(), std::move(next)));
  }
}

double cosine_lr(double lr, std::size_t step, std::size_t total) {
  if (total == 0) return lr;
  return lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)));
}

json to_json(const StepRecord& r) {
  return {{"step", r.step},
          {"epoch", r.epoch},
          {"l_text", r.loss.l_text},
          {"l_bce", r.loss.l_bce},
          {"l_dice", r.loss.l_dice},
          {"l_mask", r.loss.l_mask},
          {"l_sa", r.loss.l_sa},
          {"total", r.loss.total},
          {"lambda", r.loss.lambda},
          {"sa_anchors", r.loss.sa_anchors},
          {"grad_norm", r.grad_norm},
          {"lr", r.lr},
          {"wall_time", r.wall_time}};
}

// ---------------------------------------------------------------------------
// Training

namespace {

std::vector<model::Sample> samples_of(const dataset::Corpus& corpus, const std::vector<std::size_t>& indices) {
  std::vector<model::Sample> out;
  for (std::size_t i : indices) {
    const dataset::ExpressionRecord& e = corpus.expressions[i];
    out.push_back({&corpus.scene(e.video_id), &e});
  }
  return out;
}

}  // namespace

TrainResult train(const RunConfig& config, const dataset::Corpus& corpus, const model::FeatureCache& features,
                  const TrainHooks& hooks) {
  config.validate();
  TrainResult result;
  result.model = model::init_model(config.model, prompt::build_vocab(corpus), config.seed);
  model::Model& m = result.model;
  if (hooks.on_epoch) hooks.on_epoch(0, 0, m);

  model::BatchOptions options;
  options.layout = config.ablation.layout();
  options.lambda = config.effective_lambda();
  options.tau = config.tau;

  std::vector<std::vector<dataset::Batch>> schedule;
  std::size_t total_steps = 0;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    schedule.push_back(dataset::batch_iter(corpus, dataset::Split::Train, config.batch_size, config.seed, e));
    total_steps += schedule.back().size();
  }
  if (total_steps == 0) throw ConfigError("run config: the train split is empty");

  AdamW opt(config.optimizer);
  const auto start = std::chrono::steady_clock::now();
  std::size_t step = 0;
  double epoch_sum = 0.0;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    epoch_sum = 0.0;
    for (const dataset::Batch& batch : schedule[e]) {
      model::BatchRun run = model::run_batch(m, features, samples_of(corpus, batch), options);
      StepRecord rec;
      rec.step = step;
      rec.epoch = e;
      rec.loss = run.loss->values;
      rec.lr = cosine_lr(config.optimizer.lr, step, total_steps);
      if (!std::isfinite(rec.loss.total)) {
        if (hooks.on_step) hooks.on_step(rec);
        throw NonFiniteError("non-finite loss at step " + std::to_string(step));
      }
      run.graph->backward(run.loss->total);
      std::map<std::string, Tensor> grads = run.binder->gradients();
      double sq = 0.0;
      for (const auto& [name, g] : grads)
        for (double x : g.data()) sq += x * x;
      rec.grad_norm = std::sqrt(sq);
      if (config.optimizer.grad_clip > 0.0 && rec.grad_norm > config.optimizer.grad_clip) {
        const double f = config.optimizer.grad_clip / rec.grad_norm;
        for (auto& [name, g] : grads) {
          std::vector<double> d(g.data().begin(), g.data().end());
          for (double& x : d) x *= f;
          g = Tensor(g.shape(), std::move(d));
        }
      }
      opt.step(m.params, grads, rec.lr);
      rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (step == 0) result.initial_loss = rec.loss.total;
      epoch_sum += rec.loss.total;
      result.log.push_back(rec);
      if (hooks.on_step) hooks.on_step(rec);
      ++step;
    }
    result.final_epoch_loss = epoch_sum / static_cast<double>(schedule[e].size());
    if (hooks.on_epoch) {
      model::Model snapshot = m;
      model::round_params(snapshot);
      hooks.on_epoch(e + 1, step, snapshot);
    }
  }
  model::round_params(m);
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

double cosine(const Tensor& a, const Tensor& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

}  // namespace

metrics::EvalReport evaluate(const model::Model& model, const dataset::Corpus& corpus,
                             const model::FeatureCache& features, const std::vector<dataset::Split>& splits,
                             const EvalOptions& options) {
  using dataset::Split;
  metrics::EvalReport report;
  metrics::ScoreAccumulator acc;
  std::vector<Tensor> null_preds;
  std::map<std::pair<std::string, int>, std::vector<Tensor>> seg_by_target;

  model::BatchOptions bo;
  bo.layout = options.layout;
  bo.with_losses = false;

  for (Split split : splits) {
    // One graph per video so frame encodings are shared by its expressions.
    std::map<std::string, std::vector<std::size_t>> by_video;
    std::vector<std::string> order;
    for (std::size_t i : corpus.split_indices(split)) {
      const auto& e = corpus.expressions[i];
      if (!by_video.count(e.video_id)) order.push_back(e.video_id);
      by_video[e.video_id].push_back(i);
    }
    for (const std::string& vid : order) {
      const std::vector<model::Sample> batch = samples_of(corpus, by_video[vid]);
      model::BatchRun run = model::run_batch(model, features, batch, bo);
      for (std::size_t k = 0; k < batch.size(); ++k) {
        const model::Sample& s = batch[k];
        const segmentor::MaskSet masks = segmentor::to_mask_set(*run.graph, run.masks[k]);
        if (options.export_dir) segmentor::export_pgm(masks, *options.export_dir, vid, s.expression->expression_id);
        if (split == Split::NullTest) {
          null_preds.push_back(masks.binary);
          continue;
        }
        const Tensor gt = model::ground_truth(s);
        const double j = metrics::jaccard(masks.binary, gt);
        const double f = metrics::boundary_f(masks.binary, gt);
        const std::string name = split == Split::SeenTest ? "seen" : split == Split::UnseenTest ? "unseen" : "train";
        acc.add(name, j, f);
        if (split != Split::Train) {
          acc.add("mix", j, f);
          acc.add(std::string(dataset::to_string(s.expression->cue)), j, f);
          if (s.expression->target_object_id) {
            seg_by_target[{vid, *s.expression->target_object_id}].push_back(run.graph->value(run.seg[k]));
          }
        }
      }
    }
  }

  for (const char* g : {"train", "seen", "unseen", "mix", "audio-cue", "visual-cue", "motion-cue"}) {
    if (acc.has(g)) report.splits[g] = acc.scores(g);
  }
  if (std::find(splits.begin(), splits.end(), Split::NullTest) != splits.end()) {
    report.has_null = true;
    report.s = metrics::null_score(null_preds);
    report.null_count = null_preds.size();
  }
  double cos_sum = 0.0;
  for (const auto& [key, segs] : seg_by_target) {
    for (std::size_t a = 0; a < segs.size(); ++a)
      for (std::size_t b = a + 1; b < segs.size(); ++b) {
        cos_sum += cosine(segs[a], segs[b]);
        ++report.seg_pairs;
      }
  }
  if (report.seg_pairs > 0) report.seg_cosine = cos_sum / static_cast<double>(report.seg_pairs);
  return report;
}

// ---------------------------------------------------------------------------
// Ablation

std::vector<std::pair<std::string, AblationFlags>> ablation_matrix() {
  AblationFlags full;
  AblationFlags no_audio;
  no_audio.drop_audio = true;
  AblationFlags text_only;
  text_only.drop_audio = text_only.drop_vt = text_only.drop_vs = text_only.drop_vf_extras = true;
  AblationFlags vf_only;
  vf_only.drop_vt = vf_only.drop_vs = true;
  AblationFlags vf_vs;
  vf_vs.drop_vt = true;
  AblationFlags no_sa;
  no_sa.disable_sa = true;
  return {{"full", full},         {"drop_audio", no_audio}, {"drop_audio+visual", text_only},
          {"vf_only", vf_only},   {"vf+vs", vf_vs},         {"disable_sa", no_sa}};
}

std::vector<AblationCell> ablate(const RunConfig& config, const dataset::Corpus& corpus,
                                 const model::FeatureCache& features, std::size_t seeds,
                                 const std::function<void(const std::string&)>& progress) {
  std::vector<AblationCell> cells;
  for (const auto& [name, flags] : ablation_matrix()) {
    AblationCell cell{name, flags, {}};
    for (std::size_t k = 0; k < seeds; ++k) {
      RunConfig rc = config;
      rc.ablation = flags;
      rc.seed = config.seed + k;
      if (progress) progress(name + " seed " + std::to_string(rc.seed));
      const TrainResult tr = train(rc, corpus, features);
      EvalOptions eo;
      eo.layout = flags.layout();
      cell.runs.push_back(evaluate(tr.model, corpus, features,
                                   {dataset::Split::SeenTest, dataset::Split::UnseenTest, dataset::Split::NullTest}, eo));
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

namespace {

struct MeanSd {
  double mean = 0, sd = 0;
};

MeanSd mean_sd(const std::vector<double>& xs) {
  MeanSd r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

using Column = std::pair<std::string, std::function<double(const metrics::EvalReport&)>>;

std::vector<Column> ablation_columns() {
  auto split = [](const char* s, int which) {
    return [s, which](const metrics::EvalReport& r) {
      auto it = r.splits.find(s);
      if (it == r.splits.end()) return 0.0;
      return which == 0 ? it->second.j : which == 1 ? it->second.f : it->second.jf;
    };
  };
  return {{"J_mix", split("mix", 0)},
          {"F_mix", split("mix", 1)},
          {"JF_mix", split("mix", 2)},
          {"J_seen", split("seen", 0)},
          {"J_unseen", split("unseen", 0)},
          {"J_audio", split("audio-cue", 0)},
          {"S_null", [](const metrics::EvalReport& r) { return r.s; }},
          {"seg_cos", [](const metrics::EvalReport& r) { return r.seg_cosine; }}};
}

}  // namespace

json to_json(const std::vector<AblationCell>& cells) {
  json rows = json::array();
  for (const AblationCell& c : cells) {
    json row{{"name", c.name}, {"seeds", c.runs.size()}};
    for (const auto& [col, get] : ablation_columns()) {
      std::vector<double> xs;
      for (const auto& r : c.runs) xs.push_back(get(r));
      const MeanSd ms = mean_sd(xs);
      row[col] = {{"mean", ms.mean}, {"sd", ms.sd}, {"values", xs}};
    }
    rows.push_back(row);
  }
  return rows;
}

std::string format_ablation(const std::vector<AblationCell>& cells) {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-18s", "config");
  os << buf;
  const auto cols = ablation_columns();
  for (const auto& [col, get] : cols) {
    std::snprintf(buf, sizeof buf, " %16s", col.c_str());
    os << buf;
  }
  os << "\n";
  for (const AblationCell& c : cells) {
    std::snprintf(buf, sizeof buf, "%-18s", c.name.c_str());
    os << buf;
    for (const auto& [col, get] : cols) {
      std::vector<double> xs;
      for (const auto& r : c.runs) xs.push_back(get(r));
      const MeanSd ms = mean_sd(xs);
      std::snprintf(buf, sizeof buf, " %8.4f+-%6.4f", ms.mean, ms.sd);
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Gradient checks

namespace {

Var weighted_sum(Graph& g, Var y, std::uint64_t seed) {
  Var w = g.input(Rng(seed).uniform_tensor(g.value(y).shape(), -1.0, 1.0));
  return g.sum_all(g.multiply(y, w));
}

struct OpCheck {
  std::string name;
  Shape shape;
  double lo, hi;
  std::function<Var(Graph&, Var)> build;
};

std::vector<OpCheck> op_checks() {
  auto fixed = [](Shape s, std::uint64_t seed) { return Rng(seed).uniform_tensor(std::move(s), -1, 1); };
  return {
      {"matmul", {3, 4}, -1, 1, [=](Graph& g, Var x) { return g.matmul(x, g.input(fixed({4, 2}, 1))); }},
      {"add", {2, 3}, -1, 1, [=](Graph& g, Var x) { return g.add(x, g.input(fixed({2, 3}, 2))); }},
      {"multiply", {2, 3}, -1, 1, [](Graph& g, Var x) { return g.multiply(x, x); }},
      {"scale", {4}, -1, 1, [](Graph& g, Var x) { return g.scale(x, -2.5); }},
      {"concat", {2, 3}, -1, 1,
       [=](Graph& g, Var x) {
         std::vector<Var> parts{x, g.input(fixed({2, 2}, 3)), x};
         return g.concat(parts, 1);
       }},
      {"slice", {3, 4, 2}, -1, 1, [](Graph& g, Var x) { return g.slice(x, 1, 1, 3); }},
      {"mean", {3, 4, 2}, -1, 1, [](Graph& g, Var x) { return g.mean(x, 1); }},
      {"sum", {3, 4, 2}, -1, 1, [](Graph& g, Var x) { return g.sum(x, 0); }},
      {"transpose", {2, 5}, -1, 1, [](Graph& g, Var x) { return g.transpose(x); }},
      {"reshape", {2, 6}, -1, 1, [](Graph& g, Var x) { return g.reshape(x, {3, 4}); }},
      {"softmax", {3, 5}, -3, 3, [](Graph& g, Var x) { return g.softmax(x); }},
      {"log_softmax", {3, 5}, -3, 3, [](Graph& g, Var x) { return g.log_softmax(x); }},
      {"log", {6}, 0.5, 2.0, [](Graph& g, Var x) { return g.log(x); }},
      {"exp", {6}, -2, 2, [](Graph& g, Var x) { return g.exp(x); }},
      {"sigmoid", {6}, -4, 4, [](Graph& g, Var x) { return g.sigmoid(x); }},
      {"log_sigmoid", {6}, -6, 6, [](Graph& g, Var x) { return g.log_sigmoid(x); }},
      {"gelu", {6}, -3, 3, [](Graph& g, Var x) { return g.gelu(x); }},
      {"layer_norm", {3, 6}, -2, 2, [](Graph& g, Var x) { return g.layer_norm(x); }},
      {"embedding", {5, 3}, -1, 1, [](Graph& g, Var x) { return g.embedding(x, {4, 0, 4, 2}); }},
  };
}

GradcheckLine line_of(const CheckReport& r, const std::string& name) {
  return {name, r.max_rel_error, r.passed, r.note};
}

// Tiny end-to-end setup: 2 scenes on an 8x8 canvas, 2 frames.
struct TinyPipeline {
  dataset::Corpus corpus;
  model::Model model;
  std::unique_ptr<model::FeatureCache> features;
  std::vector<model::Sample> batch;
};

TinyPipeline make_tiny_pipeline() {
  TinyPipeline t;
  dataset::DatasetConfig dc;
  dc.train_scenes = 3;
  dc.seen_test_scenes = 0;
  dc.unseen_test_scenes = 0;
  dc.null_test_scenes = 0;
  dc.frames = 2;
  dc.size = 8;
  dc.object_size = 2;
  dc.min_objects = 2;
  dc.max_objects = 2;
  dc.p_null = 1.0;
  t.corpus = dataset::generate(dc, 5);
  model::ModelConfig mc;
  mc.reasoner.model_width = 16;
  mc.reasoner.layers = 1;
  mc.reasoner.heads = 1;
  mc.reasoner.feature_dims = 8;
  mc.reasoner.max_length = 40;
  mc.segmentor.width = 8;
  mc.segmentor.patch = 4;
  mc.segmentor.grid = 4;
  t.model = model::init_model(mc, prompt::build_vocab(t.corpus), 11);
  t.features = std::make_unique<model::FeatureCache>(t.corpus, t.model.extractor);
  // One target group of two expressions plus a null expression.
  const auto idx = t.corpus.split_indices(dataset::Split::Train);
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> groups;
  std::optional<std::size_t> null_idx;
  for (std::size_t i : idx) {
    const auto& e = t.corpus.expressions[i];
    if (e.target_object_id) {
      groups[{e.video_id, *e.target_object_id}].push_back(i);
    } else if (!null_idx) {
      null_idx = i;
    }
  }
  for (const auto& [key, members] : groups) {
    if (members.size() >= 2) {
      for (std::size_t k = 0; k < 2; ++k) {
        const auto& e = t.corpus.expressions[members[k]];
        t.batch.push_back({&t.corpus.scene(e.video_id), &e});
      }
      break;
    }
  }
  if (null_idx) {
    const auto& e = t.corpus.expressions[*null_idx];
    t.batch.push_back({&t.corpus.scene(e.video_id), &e});
  }
  return t;
}

}  // namespace

std::vector<GradcheckLine> gradcheck_suite(double tolerance) {
  std::vector<GradcheckLine> lines;
  const double h = 1e-6;

  std::uint64_t salt = 100;
  for (const OpCheck& c : op_checks()) {
    double worst = 0.0;
    bool ok = true;
    std::string note;
    for (int k = 0; k < 20; ++k, ++salt) {
      const Tensor point = Rng(salt).uniform_tensor(c.shape, c.lo, c.hi);
      const std::uint64_t wseed = salt + 7919;
      const CheckReport r = grad_check([&](Graph& g, Var x) { return weighted_sum(g, c.build(g, x), wseed); }, point, h,
                                       tolerance, c.name);
      worst = std::max(worst, r.max_rel_error);
      ok = ok && r.passed;
      if (!r.note.empty()) note = r.note;
    }
    lines.push_back({"op:" + c.name, worst, ok, note});
  }

  // Losses.
  {
    const std::vector<std::size_t> targets{1, 4, 0, 2};
    lines.push_back(line_of(grad_check([&](Graph& g, Var x) { return losses::loss_text(g, x, targets); },
                                       Rng(1).uniform_tensor({4, 6}, -2, 2), h, tolerance),
                            "loss:text"));
    std::vector<double> gt_data(16);
    Rng gr(2);
    for (double& v : gt_data) v = gr.chance(0.4) ? 1.0 : 0.0;
    const Tensor gt({4, 4}, gt_data);
    lines.push_back(line_of(grad_check([&](Graph& g, Var x) { return losses::loss_mask(g, x, gt).bce; },
                                       Rng(3).uniform_tensor({4, 4}, -3, 3), h, tolerance),
                            "loss:bce"));
    lines.push_back(line_of(grad_check([&](Graph& g, Var x) { return losses::loss_mask(g, x, gt).dice; },
                                       Rng(4).uniform_tensor({4, 4}, -3, 3), h, tolerance),
                            "loss:dice"));
    // Anchor and every member are checked together.
    lines.push_back(line_of(grad_check_multi(
                                [](Graph& g, const std::vector<Var>& p) {
                                  return losses::loss_sa(g, p[0], {p[1], p[2], p[3]}, losses::kTemperature);
                                },
                                {Rng(5).uniform_tensor({1, 4}, -0.3, 0.3), Rng(6).uniform_tensor({1, 4}, -0.3, 0.3),
                                 Rng(7).uniform_tensor({1, 4}, -0.3, 0.3), Rng(8).uniform_tensor({1, 4}, -0.3, 0.3)},
                                h, tolerance),
                            "loss:sa"));
  }

  // Tiny pipeline, every parameter tensor (strided coordinates).
  {
    TinyPipeline t = make_tiny_pipeline();
    std::vector<std::string> names;
    std::vector<Tensor> points;
    for (const auto& [name, value] : t.model.params.entries()) {
      names.push_back(name);
      points.push_back(value);
    }
    model::BatchOptions bo;
    const MultiLossBuilder f = [&](Graph& g, const std::vector<Var>& p) {
      Binder b(g, t.model.params);
      for (std::size_t i = 0; i < names.size(); ++i) b.bind(names[i], p[i]);
      return model::run_batch(b, t.model, *t.features, t.batch, bo).loss->total;
    };
    GradcheckLine line = line_of(grad_check_multi(f, points, h, tolerance, 4), "pipeline:total");
    if (t.batch.size() < 3) {
      line.passed = false;
      line.note = "tiny corpus did not yield a positive pair and a null expression";
    }
    lines.push_back(line);
  }
  return lines;
}

}  // namespace simtoken::harness
