// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "simtoken/dataset.hpp"
#include "simtoken/metrics.hpp"
#include "simtoken/model.hpp"

namespace simtoken::harness {

struct OptimizerConfig {
  double lr = 3e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 1.0;  // global-norm clip; 0 disables
};

struct AblationFlags {
  bool drop_audio = false;
  bool drop_vs = false;
  bool drop_vt = false;
  bool drop_vf_extras = false;  // F_vf rows and their ". Image:" marker
  bool disable_sa = false;      // L_sa still computed and logged, weight 0

  prompt::Layout layout() const { return {!drop_vt, !drop_vs, !drop_vf_extras, !drop_audio}; }
};

struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path out = "run";
  model::ModelConfig model;
  OptimizerConfig optimizer;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  double lambda = losses::kLambda;
  double tau = losses::kTemperature;
  std::uint64_t seed = 0;
  AblationFlags ablation;

  double effective_lambda() const { return ablation.disable_sa ? 0.0 : lambda; }
  void validate() const;
};

/// Unknown keys are rejected; relative dataset/out paths resolve against
/// `base`.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
nlohmann::json to_json(const RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

/// Decoupled weight decay Adam.
class AdamW {
 public:
  explicit AdamW(OptimizerConfig config) : config_(config) {}
  /// Missing gradients count as zero.
  void step(ParamStore& params, const std::map<std::string, Tensor>& grads, double lr);
  std::size_t steps() const noexcept { return t_; }

 private:
  OptimizerConfig config_;
  std::map<std::string, std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// lr * 0.5 * (1 + cos(pi * step / total)).
double cosine_lr(double lr, std::size_t step, std::size_t total);

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  losses::LossBreakdown loss;
  double grad_norm = 0;
  double lr = 0;
  double wall_time = 0;
};

nlohmann::json to_json(const StepRecord& r);

struct TrainResult {
  model::Model model;  // final parameters, rounded to checkpoint precision
  std::vector<StepRecord> log;
  double initial_loss = 0;
  double final_epoch_loss = 0;  // mean total over the last epoch
};

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  /// Called with epoch 0 before training and after every epoch.
  std::function<void(std::size_t epoch, std::uint64_t step, const model::Model&)> on_epoch;
};

TrainResult train(const RunConfig& config, const dataset::Corpus& corpus, const model::FeatureCache& features,
                  const TrainHooks& hooks = {});

struct EvalOptions {
  prompt::Layout layout;
  std::optional<std::filesystem::path> export_dir;
};

/// Scores seen/unseen (with mix and per-cue groups) and S on null; splits
/// absent from `splits` are skipped.
metrics::EvalReport evaluate(const model::Model& model, const dataset::Corpus& corpus,
                             const model::FeatureCache& features, const std::vector<dataset::Split>& splits,
                             const EvalOptions& options = {});

struct AblationCell {
  std::string name;
  AblationFlags flags;
  std::vector<metrics::EvalReport> runs;  // one per seed
};

/// The fixed flag matrix: full, drop_audio, drop_audio+visual, vf-only,
/// vf+vs, disable_sa.
std::vector<std::pair<std::string, AblationFlags>> ablation_matrix();

std::vector<AblationCell> ablate(const RunConfig& config, const dataset::Corpus& corpus,
                                 const model::FeatureCache& features, std::size_t seeds,
                                 const std::function<void(const std::string&)>& progress = {});

nlohmann::json to_json(const std::vector<AblationCell>& cells);
std::string format_ablation(const std::vector<AblationCell>& cells);

struct GradcheckLine {
  std::string name;
  double max_rel_error = 0;
  bool passed = false;
  std::string note;
};

/// Ops, losses and a tiny end-to-end pipeline.
std::vector<GradcheckLine> gradcheck_suite(double tolerance = 1e-5);

}  // namespace simtoken::harness
