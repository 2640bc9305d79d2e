// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "simtoken/graph.hpp"
#include "simtoken/params.hpp"
#include "simtoken/tensor.hpp"

namespace simtoken::compression {

inline constexpr std::size_t kFeatureDims = 32;
inline constexpr std::size_t kPatch = 4;

/// Raw per-patch features and the three compressed views.
struct VideoFeatureBlock {
  Tensor f_v;   // T x L x D
  Tensor f_vt;  // T x D, spatial average per frame
  Tensor f_vs;  // L x D, temporal average per patch
  Tensor f_vf;  // L x D, frame 0 untouched
};

/// Frozen random patch embedder standing in for a pretrained image encoder.
struct VisualExtractor {
  std::size_t patch = kPatch;
  Tensor weight;  // (3 * patch * patch) x D
  Tensor bias;    // D

  static VisualExtractor random(std::uint64_t seed, std::size_t patch = kPatch, std::size_t dims = kFeatureDims);
};

/// Patch rows of one 3 x H x W frame: L x (3 P P), patches in row-major grid
/// order, each flattened channel-major.
Tensor patchify(const Tensor& frame, std::size_t patch);

/// One frame of a T x 3 x H x W stack.
Tensor frame_at(const Tensor& frames, std::size_t t);

/// T x L x D. Throws ShapeError when H or W is not divisible by the patch.
Tensor extract_visual(const Tensor& frames, const VisualExtractor& extractor);

VideoFeatureBlock compress(const Tensor& f_v);

struct CompressedVars {
  Var f_vt, f_vs, f_vf;
};
/// Differentiable form of compress over a T x L x D node.
CompressedVars compress(Graph& g, Var f_v);

/// Trainable audio projector, D_a -> D.
void add_audio_projector(ParamStore& store, std::size_t audio_dims, std::size_t dims, Rng& rng);
Var extract_audio(Binder& b, Var audio);

}  // namespace simtoken::compression
