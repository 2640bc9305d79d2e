// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "simtoken/compression.hpp"
#include "simtoken/dataset.hpp"
#include "simtoken/losses.hpp"
#include "simtoken/params.hpp"
#include "simtoken/prompt.hpp"
#include "simtoken/reasoner.hpp"
#include "simtoken/segmentor.hpp"

namespace simtoken::model {

struct ModelConfig {
  reasoner::ReasonerConfig reasoner;
  segmentor::SegmentorConfig segmentor;
  std::size_t audio_dims = dataset::kAudioDims;
  std::uint64_t extractor_seed = 20260101;

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Audio projector + reasoner + segmentor.
std::size_t param_count(const ModelConfig& c);

struct Model {
  ModelConfig config;
  prompt::Vocab vocab;
  ParamStore params;
  compression::VisualExtractor extractor;  // frozen, rebuilt from extractor_seed
};

/// Sets the reasoner's vocab size from `vocab`; deterministic in `seed`.
Model init_model(ModelConfig config, const prompt::Vocab& vocab, std::uint64_t seed);

/// Frozen visual features of every scene, computed once.
class FeatureCache {
 public:
  FeatureCache(const dataset::Corpus& corpus, const compression::VisualExtractor& extractor);
  const compression::VideoFeatureBlock& at(const std::string& video_id) const;

 private:
  std::map<std::string, compression::VideoFeatureBlock, std::less<>> blocks_;
};

struct BatchOptions {
  prompt::Layout layout;
  bool with_losses = true;
  double lambda = losses::kLambda;
  double tau = losses::kTemperature;
  /// Logits at every position instead of only the response rows.
  bool all_logits = false;
};

/// One graph over a batch of (scene, expression) samples.
struct BatchRun {
  std::unique_ptr<Graph> graph;
  std::unique_ptr<Binder> binder;
  std::vector<prompt::PromptSequence> prompts;
  std::vector<reasoner::ReasonerOutput> reasoner_out;
  std::vector<Var> seg;  // 1 x D_m per sample
  std::vector<segmentor::VideoLogits> masks;
  std::optional<losses::TotalLoss> loss;
};

struct Sample {
  const dataset::ScenePack* scene = nullptr;
  const dataset::ExpressionRecord* expression = nullptr;
};

/// Ground truth for a sample: the target's masks, or all zeros for null
/// expressions.
Tensor ground_truth(const Sample& s);

BatchRun run_batch(const Model& model, const FeatureCache& features, const std::vector<Sample>& batch,
                   const BatchOptions& options);
/// Builds into an existing graph; the returned run does not own it.
BatchRun run_batch(Binder& binder, const Model& model, const FeatureCache& features, const std::vector<Sample>& batch,
                   const BatchOptions& options);

/// Checkpoint: "STKCKPT1", u64 little-endian header length, JSON header
/// (model config, vocab hash, step, parameter names and shapes, extra
/// fields), then one tensor blob per parameter in header order. Values are
/// stored at tensor storage precision.
void save_checkpoint(const Model& model, std::uint64_t step, const nlohmann::json& extra,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
  Model model;
  std::uint64_t step = 0;
  std::uint64_t vocab_hash = 0;
  nlohmann::json extra;
};

/// `vocab` must hash to the value recorded in the header.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const prompt::Vocab& vocab);

/// Every parameter rounded to storage precision.
void round_params(Model& model);

}  // namespace simtoken::model
