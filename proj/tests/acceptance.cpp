// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// writes every measured number to <out>/acceptance.json.
//
//   simtoken_acceptance [--out DIR] [--config FILE] [--dataset-config FILE]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "simtoken/compression.hpp"
#include "simtoken/dataset.hpp"
#include "simtoken/errors.hpp"
#include "simtoken/harness.hpp"
#include "simtoken/losses.hpp"
#include "simtoken/metrics.hpp"
#include "simtoken/model.hpp"
#include "simtoken/segmentor.hpp"

#include "oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace simtoken;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Verdict {
  int order = 0;
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<Verdict> verdicts;
json record = json::object();

// Verdicts are echoed to stderr as they arrive and printed in criterion
// order at the end.
void report(int order, const std::string& name, bool passed, const std::string& detail) {
  verdicts.push_back({order, name, passed, detail});
  std::fprintf(stderr, "[%s] %s\n", passed ? "pass" : "fail", name.c_str());
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb || fa.empty()) return false;
  for (const auto& f : fa)
    if (slurp(a / f) != slurp(b / f)) return false;
  return true;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

// ---------------------------------------------------------------------------
// Criteria that need no training.

void gradient_suite() {
  const auto start = Clock::now();
  const auto lines = harness::gradcheck_suite(1e-5);
  const double secs = seconds_since(start);
  double worst = 0;
  std::string failed;
  for (const auto& l : lines) {
    worst = std::max(worst, l.max_rel_error);
    if (!l.passed) failed += " " + l.name;
  }
  record["gradient_suite"] = {{"checks", lines.size()}, {"max_rel_error", worst}, {"seconds", secs}};
  report(1, "gradient suite", failed.empty() && secs < 120,
         fmt("%zu checks, max rel err %.2e, %.1f s%s", lines.size(), worst, secs,
             failed.empty() ? "" : (" failed:" + failed).c_str()));
}

double alignment_value(const std::vector<std::vector<double>>& members, const std::vector<double>& q, double tau,
                       bool* anchor_grad_zero = nullptr) {
  Graph g;
  auto row = [&](const std::vector<double>& v) { return g.parameter(Tensor({1, v.size()}, v)); };
  Var qv = row(q);
  std::vector<Var> ps;
  for (const auto& m : members) ps.push_back(row(m));
  Var l = losses::loss_sa(g, qv, ps, tau);
  const double value = g.value(l).item();
  if (anchor_grad_zero) {
    const Gradients grads = g.backward(l);
    bool zero = true;
    for (Var v : ps)
      for (double x : grads.at(v.id).data()) zero = zero && x == 0.0;
    for (double x : grads.at(qv.id).data()) zero = zero && x == 0.0;
    *anchor_grad_zero = zero;
  }
  return value;
}

void alignment_oracles() {
  Rng rng(17);
  bool single_ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> q(5), p(5);
    for (double& v : q) v = rng.uniform(-1, 1);
    for (double& v : p) v = rng.uniform(-1, 1);
    bool zero_grad = false;
    single_ok = single_ok && alignment_value({p}, q, 0.07, &zero_grad) == 0.0 && zero_grad;
  }
  const double equal = alignment_value({{0.5, 1, 0}, {0.5, 0, 1}, {0.5, -2, 3}}, {1, 0, 0}, 0.07);
  const double worked = alignment_value({{1, 0}, {0, 1}}, {1, 0}, 0.07);
  const double worked_oracle = oracle::alignment({1, 0}, {{1, 0}, {0, 1}}, 0.07);
  const bool equal_ok = std::abs(equal - std::log(3.0)) <= 1e-12;
  const bool worked_ok = std::abs(worked - worked_oracle) <= 1e-10 && std::abs(worked - 7.1429) < 5e-5;
  record["alignment_oracles"] = {{"equal_similarities", equal}, {"two_member", worked}};
  report(2, "alignment loss oracles", single_ok && equal_ok && worked_ok,
         fmt("K=1 zero with zero grad: %s; K=3 equal: |%.15f - ln3| = %.1e; two-member %.10f (oracle %.10f)",
             single_ok ? "yes" : "no", equal, std::abs(equal - std::log(3.0)), worked, worked_oracle));
}

void compression_oracles() {
  Rng rng(23);
  double worst = 0;
  bool first_exact = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 1 + rng.index(6), L = 1 + rng.index(20), D = 1 + rng.index(10);
    const Tensor f = rng.uniform_tensor({T, L, D}, -5, 5);
    const compression::VideoFeatureBlock b = compression::compress(f);
    const oracle::Views v = oracle::compress(f, T, L, D);
    for (std::size_t i = 0; i < T * D; ++i) worst = std::max(worst, std::abs(b.f_vt[i] - v.vt[i]));
    for (std::size_t i = 0; i < L * D; ++i) {
      worst = std::max(worst, std::abs(b.f_vs[i] - v.vs[i]));
      first_exact = first_exact && b.f_vf[i] == f[i];
    }
  }
  record["compression_oracles"] = {{"max_abs_error", worst}, {"first_frame_exact", first_exact}};
  report(4, "compression oracles", worst <= 1e-12 && first_exact,
         fmt("100 tensors, max abs err %.1e, first-frame view exact: %s", worst, first_exact ? "yes" : "no"));
}

void metric_oracles() {
  Rng rng(29);
  double worst_j = 0, worst_f = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double p = rng.uniform(0.05, 0.8);
    const oracle::Grid a = oracle::random_grid(rng, 2, 8, 8, p), b = oracle::random_grid(rng, 2, 8, 8, p);
    const Tensor ta = oracle::to_tensor(a, 8, 8), tb = oracle::to_tensor(b, 8, 8);
    worst_j = std::max(worst_j, std::abs(metrics::jaccard(ta, tb) - oracle::jaccard(a, b)));
    worst_f = std::max(worst_f, std::abs(metrics::boundary_f(ta, tb, 1) - oracle::boundary_f(a, b, 8, 8, 1)));
  }
  std::vector<oracle::Grid> grids;
  std::vector<Tensor> preds;
  for (int k = 0; k < 50; ++k) {
    grids.push_back(oracle::random_grid(rng, 2, 8, 8, rng.uniform(0, 1)));
    preds.push_back(oracle::to_tensor(grids.back(), 8, 8));
  }
  const double s_err = std::abs(metrics::null_score(preds) - oracle::foreground_ratio(grids));
  record["metric_oracles"] = {{"max_j_error", worst_j}, {"max_f_error", worst_f}, {"s_error", s_err}};
  report(5, "metric oracles", worst_j <= 1e-12 && worst_f <= 1e-12 && s_err <= 1e-12,
         fmt("1000 pairs, max |dJ| %.1e, max |dF| %.1e, |dS| %.1e", worst_j, worst_f, s_err));
}

// ---------------------------------------------------------------------------
// Training runs.

struct RunResult {
  std::string cell;
  std::uint64_t seed = 0;
  harness::TrainResult train;
  metrics::EvalReport eval;
  double seconds = 0;
};

const std::vector<dataset::Split> kTestSplits = {dataset::Split::SeenTest, dataset::Split::UnseenTest,
                                                 dataset::Split::NullTest};

RunResult run_cell(const harness::RunConfig& base, const std::string& cell, const harness::AblationFlags& flags,
                   std::uint64_t seed, const dataset::Corpus& corpus, const model::FeatureCache& features) {
  harness::RunConfig c = base;
  c.seed = seed;
  c.ablation = flags;
  RunResult r{cell, seed, {}, {}, 0};
  const auto start = Clock::now();
  r.train = harness::train(c, corpus, features);
  harness::EvalOptions o;
  o.layout = flags.layout();
  r.eval = harness::evaluate(r.train.model, corpus, features, kTestSplits, o);
  r.seconds = seconds_since(start);
  std::fprintf(stderr, "  %s seed %llu: %.0f s, seen J %.4f, unseen J %.4f\n", cell.c_str(),
               static_cast<unsigned long long>(seed), r.seconds, r.eval.splits.at("seen").j,
               r.eval.splits.at("unseen").j);
  return r;
}

json run_json(const RunResult& r) {
  return {{"cell", r.cell},
          {"seed", r.seed},
          {"initial_loss", r.train.initial_loss},
          {"final_epoch_loss", r.train.final_epoch_loss},
          {"seconds", r.seconds},
          {"report", metrics::to_json(r.eval)}};
}

double split_j(const RunResult& r, const std::string& s) { return r.eval.splits.at(s).j; }
double split_jf(const RunResult& r, const std::string& s) { return r.eval.splits.at(s).jf; }

template <class F>
std::vector<double> collect(const std::vector<RunResult>& runs, F f) {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(f(r));
  return out;
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : "/") + fmt("%.3f", x);
  return s;
}

// Masks of one video for a list of expressions.
std::vector<Tensor> predict(const model::Model& m, const model::FeatureCache& features,
                            const std::vector<model::Sample>& batch) {
  model::BatchOptions o;
  o.with_losses = false;
  model::BatchRun run = model::run_batch(m, features, batch, o);
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < batch.size(); ++k) out.push_back(segmentor::to_mask_set(*run.graph, run.masks[k]).binary);
  return out;
}

void segmentor_contract(const model::Model& m, const dataset::Corpus& corpus, const model::FeatureCache& features) {
  const segmentor::SegmentorConfig& sc = m.config.segmentor;
  std::size_t videos = 0;
  bool bitwise = true, once = true, permuted = true;
  // Two-object scenes with an expression for each object.
  std::vector<double> ious;
  for (dataset::Split split : {dataset::Split::SeenTest, dataset::Split::UnseenTest}) {
    std::map<std::string, std::map<int, const dataset::ExpressionRecord*>> first;
    for (std::size_t i : corpus.split_indices(split)) {
      const auto& e = corpus.expressions[i];
      if (e.target_object_id && !first[e.video_id].count(*e.target_object_id)) first[e.video_id][*e.target_object_id] = &e;
    }
    for (const auto& [vid, per_target] : first) {
      const dataset::ScenePack& scene = corpus.scene(vid);
      const dataset::ExpressionRecord* any = per_target.begin()->second;
      if (videos < 10) {
        ++videos;
        model::BatchOptions o;
        o.with_losses = false;
        const model::BatchRun run = model::run_batch(m, features, {{&scene, any}}, o);
        const Tensor seg = run.graph->value(run.seg[0]);
        Graph g;
        Binder b(g, m.params);
        const segmentor::VideoLogits v = segmentor::segment_video(b, sc, scene.frames, g.input(seg));
        once = once && g.marks("prompt_encode") == 1;
        bitwise = bitwise && g.value(v.frames[0]).identical(run.graph->value(run.masks[0].frames[0]));
        const std::size_t T = scene.frame_count();
        for (std::size_t t = 0; t < T; ++t) {
          Graph g1;
          Binder b1(g1, m.params);
          const auto f = segmentor::encode_frame(b1, sc, compression::frame_at(scene.frames, t));
          const Var logits = segmentor::decode(b1, f, segmentor::encode_prompt(b1, g1.input(seg)));
          bitwise = bitwise && g1.value(logits).identical(g.value(v.frames[t]));
        }
        std::vector<double> rev;
        for (std::size_t t = T; t-- > 0;) {
          const Tensor f = compression::frame_at(scene.frames, t);
          rev.insert(rev.end(), f.data().begin(), f.data().end());
        }
        const segmentor::VideoLogits r = segmentor::segment_video(b, sc, Tensor(scene.frames.shape(), rev), g.input(seg));
        for (std::size_t t = 0; t < T; ++t) permuted = permuted && g.value(r.frames[t]).identical(g.value(v.frames[T - 1 - t]));
      }
      if (scene.objects.size() == 2 && per_target.size() == 2) {
        std::vector<model::Sample> batch;
        for (const auto& [id, e] : per_target) batch.push_back({&scene, e});
        const auto masks = predict(m, features, batch);
        ious.push_back(metrics::jaccard(masks[0], masks[1]));
      }
    }
  }
  const double iou = ious.empty() ? 1.0 : mean(ious);
  record["segmentor_contract"] = {{"videos_checked", videos}, {"bitwise_single_frame", bitwise},
                                  {"prompt_encoded_once", once}, {"permutation", permuted},
                                  {"two_object_scenes", ious.size()}, {"mean_two_target_iou", iou}};
  report(3, "segmentor contract", bitwise && once && permuted,
         fmt("%zu videos: single-frame bitwise %s, prompt once %s, permutation %s (diagnostic: two-target IoU %.3f over %zu scenes)",
             videos, bitwise ? "yes" : "no", once ? "yes" : "no", permuted ? "yes" : "no", iou, ious.size()));
}

}  // namespace

int main(int argc, char** argv) {
  fs::path out = SIMTOKEN_ACCEPTANCE_DIR;
  fs::path config_path = fs::path(SIMTOKEN_SOURCE_DIR) / "configs" / "reference.json";
  fs::path dataset_config_path = fs::path(SIMTOKEN_SOURCE_DIR) / "configs" / "dataset.json";
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string a = argv[i];
    if (a == "--out") out = argv[i + 1];
    else if (a == "--config") config_path = argv[i + 1];
    else if (a == "--dataset-config") dataset_config_path = argv[i + 1];
    else {
      std::fprintf(stderr, "unknown option %s\n", a.c_str());
      return 2;
    }
  }
  const auto suite_start = Clock::now();
  try {
    fs::create_directories(out);
    gradient_suite();
    alignment_oracles();
    compression_oracles();
    metric_oracles();

    // Dataset, generated twice.
    std::ifstream dcs(dataset_config_path);
    const json dj = json::parse(dcs);
    const dataset::DatasetConfig dc = dataset::dataset_config_from_json(dj.at("config"));
    const std::uint64_t data_seed = dj.at("seed").get<std::uint64_t>();
    fs::remove_all(out / "data_a");
    fs::remove_all(out / "data_b");
    dataset::generate_dataset(dc, data_seed, out / "data_a");
    dataset::generate_dataset(dc, data_seed, out / "data_b");
    const bool data_same = same_tree(out / "data_a", out / "data_b");
    const dataset::Corpus corpus = dataset::load_dataset(out / "data_a");

    harness::RunConfig base = harness::load_run_config(config_path);
    base.dataset = out / "data_a";
    base.out = out / "runs";
    base.validate();
    std::ifstream cs(config_path);
    const std::uint64_t config_hash = fnv1a(json::parse(cs).dump());
    record["config_hash"] = fmt("%016llx", static_cast<unsigned long long>(config_hash));
    std::printf("reference config %s, hash %s\n", config_path.string().c_str(),
                record["config_hash"].get<std::string>().c_str());
    const model::FeatureCache features(
        corpus, compression::VisualExtractor::random(base.model.extractor_seed, base.model.segmentor.patch,
                                                     base.model.reasoner.feature_dims));

    const std::vector<std::uint64_t> seeds = {base.seed, base.seed + 1, base.seed + 2};
    const auto matrix = harness::ablation_matrix();
    auto flags_of = [&](const std::string& name) {
      for (const auto& [n, f] : matrix)
        if (n == name) return f;
      throw Error("no ablation cell " + name);
    };
    std::map<std::string, std::vector<RunResult>> runs;
    for (const char* cell : {"full", "disable_sa", "drop_audio", "vf_only", "vf+vs"}) {
      for (std::uint64_t seed : seeds) {
        runs[cell].push_back(run_cell(base, cell, flags_of(cell), seed, corpus, features));
      }
    }
    json all = json::array();
    for (const auto& [cell, rs] : runs)
      for (const auto& r : rs) all.push_back(run_json(r));
    record["runs"] = all;

    // Segmentor contract on the first trained checkpoint.
    segmentor_contract(runs["full"][0].train.model, corpus, features);

    // Toy training.
    const auto& full = runs["full"];
    const model::Model untrained = model::init_model(base.model, prompt::build_vocab(corpus), base.seed);
    const metrics::EvalReport base_eval = harness::evaluate(untrained, corpus, features, kTestSplits);
    const double untrained_j = base_eval.splits.at("mix").j;
    bool loss_ok = true, seen_ok = true, unseen_ok = true;
    double train_secs = 0;
    std::vector<double> ratios;
    for (const auto& r : full) {
      const double ratio = r.train.final_epoch_loss / r.train.initial_loss;
      ratios.push_back(ratio);
      loss_ok = loss_ok && ratio < 0.1;
      seen_ok = seen_ok && split_j(r, "seen") >= 0.60;
      unseen_ok = unseen_ok && split_j(r, "unseen") >= 0.40;
      train_secs += r.seconds;
    }
    record["toy_training"] = {{"loss_ratio", ratios},
                              {"seen_j", collect(full, [](const RunResult& r) { return split_j(r, "seen"); })},
                              {"unseen_j", collect(full, [](const RunResult& r) { return split_j(r, "unseen"); })},
                              {"untrained_j", untrained_j},
                              {"seconds", train_secs}};
    report(6, "toy training", loss_ok && seen_ok && unseen_ok && untrained_j <= 0.2 && train_secs < 1800,
           fmt("loss ratio %s (<0.1), seen J %s (>=0.60), unseen J %s (>=0.40), untrained J %.3f (<=0.2), %.0f s (<1800)",
               list(ratios).c_str(), list(collect(full, [](const RunResult& r) { return split_j(r, "seen"); })).c_str(),
               list(collect(full, [](const RunResult& r) { return split_j(r, "unseen"); })).c_str(), untrained_j,
               train_secs));

    // Alignment loss on/off, paired by seed.
    const auto& no_sa = runs["disable_sa"];
    const auto cos_on = collect(full, [](const RunResult& r) { return r.eval.seg_cosine; });
    const auto cos_off = collect(no_sa, [](const RunResult& r) { return r.eval.seg_cosine; });
    const auto jf_on = collect(full, [](const RunResult& r) { return split_jf(r, "mix"); });
    const auto jf_off = collect(no_sa, [](const RunResult& r) { return split_jf(r, "mix"); });
    record["alignment_comparison"] = {{"seg_cos_with", cos_on}, {"seg_cos_without", cos_off},
                                      {"jf_mix_with", jf_on},   {"jf_mix_without", jf_off}};
    report(7, "alignment loss effect", mean(cos_on) > mean(cos_off) && mean(jf_on) >= mean(jf_off),
           fmt("seg cosine %.4f vs %.4f (%s vs %s), mix J&F %.4f vs %.4f", mean(cos_on), mean(cos_off),
               list(cos_on).c_str(), list(cos_off).c_str(), mean(jf_on), mean(jf_off)));

    // Dropping audio.
    const auto& no_audio = runs["drop_audio"];
    const double s_full = mean(collect(full, [](const RunResult& r) { return r.eval.s; }));
    const double s_drop = mean(collect(no_audio, [](const RunResult& r) { return r.eval.s; }));
    const double ja_full = mean(collect(full, [](const RunResult& r) { return split_j(r, "audio-cue"); }));
    const double ja_drop = mean(collect(no_audio, [](const RunResult& r) { return split_j(r, "audio-cue"); }));
    record["drop_audio"] = {{"s_full", s_full}, {"s_drop", s_drop}, {"j_audio_full", ja_full}, {"j_audio_drop", ja_drop}};
    report(8, "audio ablation", s_drop > s_full && ja_drop < ja_full,
           fmt("null S %.4f -> %.4f (must rise), audio-cue J %.4f -> %.4f (must fall)", s_full, s_drop, ja_full,
               ja_drop));

    // Visual views.
    const double ju_vf = mean(collect(runs["vf_only"], [](const RunResult& r) { return split_j(r, "unseen"); }));
    const double ju_vs = mean(collect(runs["vf+vs"], [](const RunResult& r) { return split_j(r, "unseen"); }));
    const double jf_vs = mean(collect(runs["vf+vs"], [](const RunResult& r) { return split_jf(r, "mix"); }));
    const double jf_all = mean(jf_on);
    record["visual_views"] = {{"unseen_j_vf", ju_vf}, {"unseen_j_vf_vs", ju_vs}, {"jf_mix_vf_vs", jf_vs}, {"jf_mix_full", jf_all}};
    report(9, "visual views", ju_vs > ju_vf && jf_all >= jf_vs,
           fmt("unseen J vf %.4f -> vf+vs %.4f (must rise), mix J&F vf+vs %.4f -> full %.4f (must not fall)", ju_vf,
               ju_vs, jf_vs, jf_all));

    // Determinism: a one-epoch run twice from scratch.
    harness::RunConfig short_run = base;
    short_run.epochs = 1;
    std::vector<std::string> ckpts, reports;
    for (int k = 0; k < 2; ++k) {
      const harness::TrainResult t = harness::train(short_run, corpus, features);
      const fs::path p = out / ("determinism_" + std::to_string(k) + ".stk");
      model::save_checkpoint(t.model, t.log.size(), {{"epoch", 1}}, p);
      ckpts.push_back(slurp(p));
      const model::LoadedCheckpoint loaded = model::load_checkpoint(p, prompt::build_vocab(corpus));
      reports.push_back(metrics::to_json(harness::evaluate(loaded.model, corpus, features, kTestSplits)).dump());
    }
    const bool ckpt_same = ckpts[0] == ckpts[1], report_same = reports[0] == reports[1];
    record["determinism"] = {{"dataset", data_same}, {"checkpoint", ckpt_same}, {"report", report_same}};
    report(10, "determinism", data_same && ckpt_same && report_same,
           fmt("dataset %s, checkpoint %s, report %s", data_same ? "identical" : "DIFFERENT",
               ckpt_same ? "identical" : "DIFFERENT", report_same ? "identical" : "DIFFERENT"));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance aborted: %s\n", e.what());
    return 1;
  }

  std::sort(verdicts.begin(), verdicts.end(), [](const Verdict& a, const Verdict& b) { return a.order < b.order; });
  std::size_t passed = 0;
  json v = json::array();
  for (const auto& x : verdicts) {
    std::printf("%s  %-22s %s\n", x.passed ? "PASS" : "FAIL", x.name.c_str(), x.detail.c_str());
    passed += x.passed;
    v.push_back({{"criterion", x.name}, {"passed", x.passed}, {"detail", x.detail}});
  }
  record["verdicts"] = v;
  record["seconds"] = seconds_since(suite_start);
  std::ofstream(out / "acceptance.json") << record.dump(2) << "\n";
  std::printf("%zu/%zu criteria passed in %.0f s; details in %s\n", passed, verdicts.size(), seconds_since(suite_start),
              (out / "acceptance.json").string().c_str());
  return 0;
}
