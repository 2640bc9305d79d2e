// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>

#include "json.hpp"

#include "simtoken/params.hpp"
#include "simtoken/prompt.hpp"

namespace simtoken::reasoner {

struct ReasonerConfig {
  std::size_t model_width = 64;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t feature_dims = compression::kFeatureDims;
  std::size_t vocab_size = 0;
  std::size_t max_length = 64;

  void validate() const;
};

nlohmann::json to_json(const ReasonerConfig& c);
ReasonerConfig reasoner_config_from_json(const nlohmann::json& j);

/// Closed form, with D = model_width, F = feature_dims, V = vocab_size,
/// S = max_length, N = layers:
///   V*D + S*D + 4*(F*D + D) + N*(8*D*D + 11*D) + 2*D + (D*V + V)
/// i.e. token and position tables, four view projectors, N pre-LN blocks
/// (attention, 2D-wide MLP, two layer norms), the final layer norm and an
/// untied output head.
std::size_t param_count(const ReasonerConfig& c);

/// Adds every "reasoner.*" tensor. Weights use scaled uniform init.
void init_params(ParamStore& store, const ReasonerConfig& c, Rng& rng);

/// Feature rows per view, D_feat wide. Views absent from the prompt may be
/// left unset.
struct ViewInputs {
  std::optional<Var> vt, vs, vf, a;
};

struct ForwardOptions {
  /// Logit rows [begin, end); defaults to every position.
  std::optional<std::pair<std::size_t, std::size_t>> logit_rows;
};

struct ReasonerOutput {
  Var hidden;  // S x D_m, after the final layer norm
  Var logits;  // rows x V
  std::size_t logit_begin = 0;
};

/// Strictly causal; feature slots enter through their view's projector.
ReasonerOutput forward(Binder& b, const ReasonerConfig& c, const prompt::PromptSequence& seq, const ViewInputs& views,
                       const ForwardOptions& options = {});

/// The hidden row at seg_position as a 1 x D_m node.
Var extract_seg(Graph& g, Var hidden, std::size_t seg_position);

}  // namespace simtoken::reasoner
