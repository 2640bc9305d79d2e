// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#include "simtoken/model.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "simtoken/errors.hpp"
#include "simtoken/tensor_io.hpp"

namespace simtoken::model {

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'T', 'K', 'C', 'K', 'P', 'T', '1'};

}  // namespace

void ModelConfig::validate() const {
  reasoner.validate();
  segmentor.validate();
  if (segmentor.prompt_dims != reasoner.model_width) {
    throw ConfigError("model config: segmentor prompt_dims must equal reasoner model_width");
  }
  if (audio_dims == 0) throw ConfigError("model config: audio_dims must be positive");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"reasoner", reasoner::to_json(c.reasoner)},
          {"segmentor", segmentor::to_json(c.segmentor)},
          {"audio_dims", c.audio_dims},
          {"extractor_seed", c.extractor_seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    if (j.contains("reasoner")) c.reasoner = reasoner::reasoner_config_from_json(j.at("reasoner"));
    if (j.contains("segmentor")) c.segmentor = segmentor::segmentor_config_from_json(j.at("segmentor"));
    c.audio_dims = j.value("audio_dims", c.audio_dims);
    c.extractor_seed = j.value("extractor_seed", c.extractor_seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

std::size_t param_count(const ModelConfig& c) {
  const std::size_t F = c.reasoner.feature_dims;
  return (c.audio_dims * F + F) + reasoner::param_count(c.reasoner) + segmentor::param_count(c.segmentor);
}

Model init_model(ModelConfig config, const prompt::Vocab& vocab, std::uint64_t seed) {
  config.reasoner.vocab_size = vocab.size();
  config.segmentor.prompt_dims = config.reasoner.model_width;
  config.validate();
  Model m;
  m.config = config;
  m.vocab = vocab;
  Rng audio_rng(derive_seed(seed, 1));
  Rng reasoner_rng(derive_seed(seed, 2));
  Rng segmentor_rng(derive_seed(seed, 3));
  compression::add_audio_projector(m.params, config.audio_dims, config.reasoner.feature_dims, audio_rng);
  reasoner::init_params(m.params, config.reasoner, reasoner_rng);
  segmentor::init_params(m.params, config.segmentor, segmentor_rng);
  m.extractor = compression::VisualExtractor::random(config.extractor_seed, config.segmentor.patch, config.reasoner.feature_dims);
  return m;
}

FeatureCache::FeatureCache(const dataset::Corpus& corpus, const compression::VisualExtractor& extractor) {
  for (const dataset::ScenePack& s : corpus.scenes) {
    blocks_.emplace(s.video_id, compression::compress(compression::extract_visual(s.frames, extractor)));
  }
}

const compression::VideoFeatureBlock& FeatureCache::at(const std::string& video_id) const {
  auto it = blocks_.find(video_id);
  if (it == blocks_.end()) throw Error("no cached features for video '" + video_id + "'");
  return it->second;
}

Tensor ground_truth(const Sample& s) {
  const dataset::ScenePack& scene = *s.scene;
  if (!s.expression->target_object_id) {
    return Tensor::zeros({scene.frame_count(), scene.canvas(), scene.canvas()});
  }
  auto it = scene.masks.find(*s.expression->target_object_id);
  if (it == scene.masks.end()) throw DatasetError("expression " + s.expression->expression_id + ": target has no mask");
  return it->second;
}

BatchRun run_batch(const Model& model, const FeatureCache& features, const std::vector<Sample>& batch,
                   const BatchOptions& options) {
  auto graph = std::make_unique<Graph>();
  auto binder = std::make_unique<Binder>(*graph, model.params);
  BatchRun run = run_batch(*binder, model, features, batch, options);
  run.graph = std::move(graph);
  run.binder = std::move(binder);
  return run;
}

BatchRun run_batch(Binder& b, const Model& model, const FeatureCache& features, const std::vector<Sample>& batch,
                   const BatchOptions& options) {
  if (batch.empty()) throw Error("run_batch: empty batch");
  BatchRun run;
  Graph& g = b.graph();
  const std::size_t P = model.config.segmentor.patch;

  // Per-video work shared by every expression of that video in the batch.
  struct VideoNodes {
    reasoner::ViewInputs views;
    std::vector<segmentor::FrameFeatures> frames;
  };
  std::map<std::string, VideoNodes> videos;
  auto video = [&](const dataset::ScenePack& scene) -> const VideoNodes& {
    auto it = videos.find(scene.video_id);
    if (it != videos.end()) return it->second;
    const compression::VideoFeatureBlock& block = features.at(scene.video_id);
    VideoNodes v;
    if (options.layout.vt) v.views.vt = g.input(block.f_vt);
    if (options.layout.vs) v.views.vs = g.input(block.f_vs);
    if (options.layout.vf) v.views.vf = g.input(block.f_vf);
    if (options.layout.audio) v.views.a = compression::extract_audio(b, g.input(scene.audio));
    for (std::size_t t = 0; t < scene.frame_count(); ++t) {
      v.frames.push_back(segmentor::encode_frame(b, model.config.segmentor, compression::frame_at(scene.frames, t)));
    }
    return videos.emplace(scene.video_id, std::move(v)).first->second;
  };

  const std::vector<std::size_t> targets = prompt::response_targets(model.vocab);
  std::vector<Var> text_terms, bce_terms, dice_terms;
  for (const Sample& s : batch) {
    const VideoNodes& v = video(*s.scene);
    const compression::VideoFeatureBlock& block = features.at(s.scene->video_id);
    prompt::PromptSequence seq = prompt::assemble(block, s.scene->audio, s.expression->text, model.vocab, options.layout);
    reasoner::ForwardOptions fo;
    const std::vector<std::size_t> rows = prompt::response_positions(seq);
    if (!options.all_logits) fo.logit_rows = std::pair{rows.front(), rows.back() + 1};
    reasoner::ReasonerOutput out = reasoner::forward(b, model.config.reasoner, seq, v.views, fo);
    Var seg = reasoner::extract_seg(g, out.hidden, seq.seg_position);
    segmentor::VideoLogits masks =
        segmentor::segment_video(b, v.frames, seg, s.scene->canvas(), s.scene->canvas(), P);

    if (options.with_losses) {
      Var logits = out.logits;
      if (options.all_logits) logits = g.slice(out.logits, 0, rows.front(), rows.back() + 1);
      text_terms.push_back(losses::loss_text(g, logits, targets));
      const Tensor gt = ground_truth(s);
      std::vector<Tensor> gt_frames;
      const std::size_t H = s.scene->canvas();
      for (std::size_t t = 0; t < s.scene->frame_count(); ++t) {
        std::vector<double> px(gt.data().begin() + static_cast<std::ptrdiff_t>(t * H * H),
                               gt.data().begin() + static_cast<std::ptrdiff_t>((t + 1) * H * H));
        gt_frames.push_back(segmentor::pixels_to_patches(Tensor({H, H}, std::move(px)), P));
      }
      const losses::MaskLoss ml = losses::loss_mask(g, masks.frames, gt_frames);
      bce_terms.push_back(ml.bce);
      dice_terms.push_back(ml.dice);
    }
    run.prompts.push_back(std::move(seq));
    run.reasoner_out.push_back(out);
    run.seg.push_back(seg);
    run.masks.push_back(std::move(masks));
  }

  if (!options.with_losses) return run;

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  auto mean = [&](const std::vector<Var>& terms, double scale) {
    Var acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = g.add(acc, terms[i]);
    return g.scale(acc, scale);
  };
  Var text = mean(text_terms, inv_b);
  losses::MaskLoss mask;
  mask.bce = mean(bce_terms, inv_b);
  mask.dice = mean(dice_terms, inv_b);
  mask.mask = g.add(mask.bce, mask.dice);

  std::vector<losses::SampleKey> keys;
  for (const Sample& s : batch) {
    keys.push_back({s.expression->expression_id, s.expression->video_id, s.expression->target_object_id});
  }
  const std::vector<losses::PositiveSet> sets = losses::build_positive_sets(keys);
  std::optional<Var> sa;
  if (!sets.empty()) {
    std::vector<Var> terms;
    for (const losses::PositiveSet& set : sets) {
      std::vector<Var> members;
      for (std::size_t m : set.members) members.push_back(run.seg[m]);
      terms.push_back(losses::loss_sa(g, run.seg[set.anchor], members, options.tau));
    }
    sa = mean(terms, 1.0 / static_cast<double>(terms.size()));
  }
  run.loss = losses::total_loss(g, text, mask, sa, options.lambda, sets.size());
  return run;
}

void save_checkpoint(const Model& model, std::uint64_t step, const nlohmann::json& extra,
                     const std::filesystem::path& path) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& [name, t] : model.params.entries()) params.push_back({{"name", name}, {"shape", t.shape()}});
  nlohmann::json header{{"format", "simtoken-checkpoint"},
                        {"model", to_json(model.config)},
                        {"vocab_hash", model.vocab.hash()},
                        {"vocab_size", model.vocab.size()},
                        {"step", step},
                        {"params", params},
                        {"extra", extra}};
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint64_t n = text.size();
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((n >> (8 * i)) & 0xffU));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : model.params.entries()) write_tensor(os, t);
  if (!os) throw Error("write failed for " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const prompt::Vocab& vocab) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("missing checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  }
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) {
    const int c = is.get();
    if (c == EOF) throw FormatError(path.string() + ": truncated header");
    n |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  if (n > (1u << 26)) throw FormatError(path.string() + ": implausible header length");
  std::string text(n, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(n))) throw FormatError(path.string() + ": truncated header");

  LoadedCheckpoint out;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    out.step = header.at("step").get<std::uint64_t>();
    out.vocab_hash = header.at("vocab_hash").get<std::uint64_t>();
    out.extra = header.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (out.vocab_hash != vocab.hash()) {
    throw FormatError(path.string() + ": vocab hash " + std::to_string(out.vocab_hash) +
                      " does not match the dataset vocab " + std::to_string(vocab.hash()));
  }
  out.model = init_model(model_config_from_json(header.at("model")), vocab, 0);
  const auto& entries = out.model.params.entries();
  const auto& listed = header.at("params");
  if (listed.size() != entries.size()) throw FormatError(path.string() + ": parameter list does not match the model");
  auto it = entries.begin();
  for (const auto& p : listed) {
    const std::string name = p.at("name").get<std::string>();
    if (name != it->first) throw FormatError(path.string() + ": unexpected parameter '" + name + "'");
    ++it;
    out.model.params.set(name, read_tensor(is, path.string() + " (" + name + ")"));
  }
  if (is.peek() != EOF) throw FormatError(path.string() + ": trailing bytes after the last tensor");
  return out;
}

void round_params(Model& model) {
  std::vector<std::string> names;
  for (const auto& [name, t] : model.params.entries()) names.push_back(name);
  for (const std::string& name : names) model.params.set(name, round_to_storage(model.params.at(name)));
}

}  // namespace simtoken::model
