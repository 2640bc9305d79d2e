// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "simtoken/dataset.hpp"
#include "simtoken/errors.hpp"
#include "simtoken/harness.hpp"
#include "simtoken/metrics.hpp"
#include "simtoken/model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace simtoken;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::string split = "all";
  bool export_masks = false;
  std::string checkpoint;
  std::string inject_op;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

harness::RunConfig run_config(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  harness::RunConfig c = harness::load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  c.validate();
  return c;
}

std::vector<dataset::Split> eval_splits(const std::string& name) {
  using dataset::Split;
  if (name == "all") return {Split::SeenTest, Split::UnseenTest, Split::NullTest};
  try {
    return {dataset::split_from_string(name)};
  } catch (const Error&) {
    throw ConfigError("unknown split '" + name + "'");
  }
}

int cmd_generate(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  const json j = read_json(o.config);
  dataset::DatasetConfig config;
  std::uint64_t seed = 1;
  fs::path out = "data";
  // Either a bare dataset config or {"seed", "out", "config"}.
  if (j.contains("config")) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() != "config" && it.key() != "seed" && it.key() != "out") {
        throw ConfigError("dataset config: unknown field '" + it.key() + "'");
      }
    }
    config = dataset::dataset_config_from_json(j.at("config"));
    seed = j.value("seed", seed);
    if (j.contains("out")) out = fs::path(o.config).parent_path() / j.at("out").get<std::string>();
  } else {
    config = dataset::dataset_config_from_json(j);
  }
  if (o.seed) seed = *o.seed;
  if (o.out) out = *o.out;
  const dataset::Corpus corpus = dataset::generate_dataset(config, seed, out);
  std::size_t counts[4] = {};
  for (const auto& e : corpus.expressions) ++counts[static_cast<int>(e.split)];
  std::printf("wrote %zu scenes, %zu expressions to %s\n", corpus.scenes.size(), corpus.expressions.size(),
              out.string().c_str());
  for (dataset::Split s : dataset::kAllSplits) {
    std::printf("  %-12s %zu\n", std::string(dataset::to_string(s)).c_str(), counts[static_cast<int>(s)]);
  }
  return 0;
}

int cmd_train(const Options& o) {
  const harness::RunConfig config = run_config(o);
  const dataset::Corpus corpus = dataset::load_dataset(config.dataset);
  const model::FeatureCache features(corpus, compression::VisualExtractor::random(
                                                 config.model.extractor_seed, config.model.segmentor.patch,
                                                 config.model.reasoner.feature_dims));
  fs::create_directories(config.out);
  write_json(config.out / "config.json", harness::to_json(config));
  std::ofstream log(config.out / "log.jsonl");
  std::optional<prompt::Vocab> vocab;
  harness::TrainHooks hooks;
  hooks.on_step = [&](const harness::StepRecord& r) {
    log << harness::to_json(r).dump() << "\n";
    log.flush();
    if (r.step % 50 == 0) {
      std::fprintf(stderr, "step %zu epoch %zu loss %.5f\n", r.step, r.epoch, r.loss.total);
    }
  };
  hooks.on_epoch = [&](std::size_t epoch, std::uint64_t step, const model::Model& m) {
    if (!vocab) {
      vocab = m.vocab;
      write_json(config.out / "vocab.json", m.vocab.to_json());
    }
    model::save_checkpoint(m, step, {{"epoch", epoch}},
                           config.out / ("checkpoint_epoch" + std::to_string(epoch) + ".stk"));
  };
  const harness::TrainResult result = harness::train(config, corpus, features, hooks);
  model::save_checkpoint(result.model, result.log.size(), {{"epoch", config.epochs}}, config.out / "checkpoint.stk");
  std::printf("initial loss %.6f, final epoch loss %.6f, %zu steps\n", result.initial_loss, result.final_epoch_loss,
              result.log.size());
  return 0;
}

int cmd_eval(const Options& o) {
  const harness::RunConfig config = run_config(o);
  const dataset::Corpus corpus = dataset::load_dataset(config.dataset);
  const fs::path ckpt = o.checkpoint.empty() ? config.out / "checkpoint.stk" : fs::path(o.checkpoint);
  const model::LoadedCheckpoint loaded = model::load_checkpoint(ckpt, prompt::build_vocab(corpus));
  const model::FeatureCache features(corpus, loaded.model.extractor);
  harness::EvalOptions options;
  options.layout = config.ablation.layout();
  fs::create_directories(config.out);
  if (o.export_masks) options.export_dir = config.out / "masks";
  const metrics::EvalReport report =
      harness::evaluate(loaded.model, corpus, features, eval_splits(o.split), options);
  json j = metrics::to_json(report);
  j["checkpoint"] = ckpt.string();
  j["step"] = loaded.step;
  write_json(config.out / "report.json", j);
  std::cout << metrics::format_table(report);
  return 0;
}

int cmd_ablate(const Options& o) {
  const harness::RunConfig config = run_config(o);
  const dataset::Corpus corpus = dataset::load_dataset(config.dataset);
  const model::FeatureCache features(corpus, compression::VisualExtractor::random(
                                                 config.model.extractor_seed, config.model.segmentor.patch,
                                                 config.model.reasoner.feature_dims));
  const auto cells = harness::ablate(config, corpus, features, 3,
                                     [](const std::string& s) { std::fprintf(stderr, "training %s\n", s.c_str()); });
  fs::create_directories(config.out);
  write_json(config.out / "ablation.json", harness::to_json(cells));
  std::cout << harness::format_ablation(cells);
  return 0;
}

int cmd_gradcheck(const Options& o) {
  if (!o.inject_op.empty()) {
    std::optional<Op> op;
    for (int k = 0; k <= static_cast<int>(Op::Reshape); ++k) {
      if (op_name(static_cast<Op>(k)) == o.inject_op) op = static_cast<Op>(k);
    }
    if (!op) throw ConfigError("unknown op '" + o.inject_op + "'");
    debug::inject_wrong_sign(op);
  }
  const auto start = std::chrono::steady_clock::now();
  const auto lines = harness::gradcheck_suite();
  bool ok = true;
  json report = json::array();
  for (const auto& l : lines) {
    std::printf("%-4s %-22s max_rel_error %.3e%s%s\n", l.passed ? "PASS" : "FAIL", l.name.c_str(), l.max_rel_error,
                l.note.empty() ? "" : "  ", l.note.c_str());
    ok = ok && l.passed;
    report.push_back({{"name", l.name}, {"max_rel_error", l.max_rel_error}, {"passed", l.passed}, {"note", l.note}});
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%s in %.1f s\n", ok ? "all checks passed" : "gradient check FAILED", secs);
  if (o.out) {
    fs::create_directories(*o.out);
    write_json(fs::path(*o.out) / "gradcheck.json", report);
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SimToken toy referring segmentation pipeline"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", o.config, "JSON config file");
    if (needs_config) c->required();
    sub->add_option("--seed", o.seed, "seed override");
    sub->add_option("--out", o.out, "output directory override");
  };
  auto* gen = app.add_subcommand("generate", "generate a synthetic dataset");
  common(gen, true);
  auto* tr = app.add_subcommand("train", "train a model");
  common(tr, true);
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  common(ev, true);
  ev->add_option("--split", o.split, "seen-test, unseen-test, null-test, train or all");
  ev->add_flag("--export-masks", o.export_masks, "write PGM masks under <out>/masks");
  ev->add_option("--checkpoint", o.checkpoint, "checkpoint file (default <out>/checkpoint.stk)");
  auto* ab = app.add_subcommand("ablate", "train and score the ablation matrix");
  common(ab, true);
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gc->add_option("--out", o.out, "write gradcheck.json here");
  gc->add_option("--inject-wrong-sign", o.inject_op, "corrupt one op's backward rule")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  try {
    if (*gen) return cmd_generate(o);
    if (*tr) return cmd_train(o);
    if (*ev) return cmd_eval(o);
    if (*ab) return cmd_ablate(o);
    if (*gc) return cmd_gradcheck(o);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
