// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "simtoken/params.hpp"

namespace simtoken::segmentor {

struct SegmentorConfig {
  std::size_t width = 32;  // D_s
  std::size_t patch = 4;
  std::size_t prompt_dims = 64;  // D_m of the incoming semantic embedding
  std::size_t grid = 16;         // patches per frame, fixes the position table

  void validate() const;
};

nlohmann::json to_json(const SegmentorConfig& c);
SegmentorConfig segmentor_config_from_json(const nlohmann::json& j);

/// With D = width, P = patch, M = prompt_dims, G = grid:
///   (3*P*P*D + D) + G*D + (8*D*D + 11*D) + (M*D + D) + 4*(D*D + D)
///     + (D*D + D) + (D*P*P + P*P) + (3*D + 3)
/// i.e. patch embedding, position table, one encoder block, the prompt
/// encoder, the decoder's cross-attention, its mixing layer, the per-patch
/// pixel head and the colour skip weights.
std::size_t param_count(const SegmentorConfig& c);

/// Adds every "segmentor.*" tensor.
void init_params(ParamStore& store, const SegmentorConfig& c, Rng& rng);

/// Encoded frame: patch features and the raw patch pixels the colour skip reads.
struct FrameFeatures {
  Var patches;  // L_s x D_s
  Var pixels;   // L_s x 3*P*P, channel-major per patch
};

/// Frame encoder: 3 x H x W -> L_s x D_s.
FrameFeatures encode_frame(Binder& b, const SegmentorConfig& c, const Tensor& frame);
/// Prompt encoder: 1 x D_m -> 1 x D_s.
Var encode_prompt(Binder& b, Var f_seg);
/// Mask decoder: per-patch pixel logits, L_s x (P*P). The prompt attends
/// over the patches and gates them into a per-patch head, plus a
/// prompt-weighted sum of each pixel's colour channels.
Var decode(Binder& b, const FrameFeatures& features, Var prompt);

/// Per-frame patch-layout logits of one video under one prompt.
struct VideoLogits {
  std::vector<Var> frames;
  std::size_t height = 0, width = 0, patch = 0;
};

/// Encodes the prompt once and decodes every frame against it. Frames of the
/// same video may be pre-encoded and passed in to share work.
VideoLogits segment_video(Binder& b, const SegmentorConfig& c, const Tensor& frames, Var f_seg);
VideoLogits segment_video(Binder& b, const std::vector<FrameFeatures>& frame_features, Var f_seg, std::size_t height,
                          std::size_t width, std::size_t patch);

/// [L, P*P] patch layout <-> [H, W] pixels.
Tensor patches_to_pixels(const Tensor& patches, std::size_t height, std::size_t width, std::size_t patch);
Tensor pixels_to_patches(const Tensor& pixels, std::size_t patch);

struct MaskSet {
  Tensor logits;  // T x H x W
  Tensor binary;  // T x H x W in {0, 1}, sigmoid(logit) > 0.5
};

MaskSet to_mask_set(const Graph& g, const VideoLogits& v);
Tensor threshold(const Tensor& logits);

/// Binary PGM (P5, maxval 255) per frame: {video}_{expression}_{t}.pgm.
void export_pgm(const MaskSet& masks, const std::filesystem::path& dir, const std::string& video_id,
                const std::string& expression_id);

}  // namespace simtoken::segmentor
