// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#include "simtoken/reasoner.hpp"

#include <cmath>

#include "simtoken/errors.hpp"

namespace simtoken::reasoner {

using prompt::View;

void ReasonerConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("reasoner config: " + m); };
  if (model_width == 0 || heads == 0 || model_width % heads != 0) fail("model_width must be a positive multiple of heads");
  if (layers == 0) fail("layers must be positive");
  if (feature_dims == 0) fail("feature_dims must be positive");
  if (vocab_size <= prompt::kSeg) fail("vocab_size must cover the special tokens");
  if (max_length == 0) fail("max_length must be positive");
}

nlohmann::json to_json(const ReasonerConfig& c) {
  return {{"model_width", c.model_width}, {"layers", c.layers},         {"heads", c.heads},
          {"feature_dims", c.feature_dims}, {"vocab_size", c.vocab_size}, {"max_length", c.max_length}};
}

ReasonerConfig reasoner_config_from_json(const nlohmann::json& j) {
  ReasonerConfig c;
  try {
    c.model_width = j.value("model_width", c.model_width);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.feature_dims = j.value("feature_dims", c.feature_dims);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.max_length = j.value("max_length", c.max_length);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("reasoner config: ") + e.what());
  }
  return c;
}

std::size_t param_count(const ReasonerConfig& c) {
  const std::size_t D = c.model_width, F = c.feature_dims, V = c.vocab_size, S = c.max_length, N = c.layers;
  return V * D + S * D + 4 * (F * D + D) + N * (8 * D * D + 11 * D) + 2 * D + (D * V + V);
}

void init_params(ParamStore& store, const ReasonerConfig& c, Rng& rng) {
  c.validate();
  const std::size_t D = c.model_width;
  const double s = 1.0 / std::sqrt(static_cast<double>(D));
  store.add("reasoner.tok_emb", rng.uniform_tensor({c.vocab_size, D}, -s, s));
  store.add("reasoner.pos_emb", rng.uniform_tensor({c.max_length, D}, -s, s));
  for (const char* v : {"vt", "vs", "vf", "a"}) nn::add_linear(store, std::string("reasoner.proj.") + v, c.feature_dims, D, rng);
  for (std::size_t i = 0; i < c.layers; ++i) nn::add_block(store, "reasoner.block" + std::to_string(i), D, rng);
  nn::add_layer_norm(store, "reasoner.ln_f", D);
  nn::add_linear(store, "reasoner.head", D, c.vocab_size, rng);
}

namespace {

const char* proj_name(View v) {
  switch (v) {
    case View::VT: return "reasoner.proj.vt";
    case View::VS: return "reasoner.proj.vs";
    case View::VF: return "reasoner.proj.vf";
    case View::A: return "reasoner.proj.a";
  }
  return "";
}

const std::optional<Var>& view_input(const ViewInputs& v, View view) {
  switch (view) {
    case View::VT: return v.vt;
    case View::VS: return v.vs;
    case View::VF: return v.vf;
    case View::A: return v.a;
  }
  return v.vt;
}

}  // namespace

ReasonerOutput forward(Binder& b, const ReasonerConfig& c, const prompt::PromptSequence& seq, const ViewInputs& views,
                       const ForwardOptions& options) {
  Graph& g = b.graph();
  const std::size_t S = seq.size();
  if (S > c.max_length) {
    throw ShapeError("reasoner: sequence length " + std::to_string(S) + " exceeds max_length " + std::to_string(c.max_length));
  }

  std::map<View, Var> projected;
  auto project = [&](View v) {
    auto it = projected.find(v);
    if (it != projected.end()) return it->second;
    const auto& in = view_input(views, v);
    if (!in) throw Error(std::string("reasoner: prompt uses view ") + std::string(prompt::to_string(v)) + " but no features were given");
    Var p = nn::linear(b, *in, proj_name(v));
    projected.emplace(v, p);
    return p;
  };

  // Contiguous runs of tokens become one lookup; runs of consecutive rows of
  // one view become one slice.
  std::vector<Var> parts;
  const Var table = b("reasoner.tok_emb");
  std::size_t i = 0;
  while (i < S) {
    const prompt::Element& e = seq.elements[i];
    std::size_t j = i + 1;
    if (e.is_token) {
      std::vector<std::size_t> ids{e.id};
      while (j < S && seq.elements[j].is_token) ids.push_back(seq.elements[j++].id);
      for (std::size_t id : ids) {
        if (id >= c.vocab_size) throw ShapeError("reasoner: token id " + std::to_string(id) + " outside the vocabulary");
      }
      parts.push_back(g.embedding(table, std::move(ids)));
    } else {
      while (j < S && !seq.elements[j].is_token && seq.elements[j].view == e.view &&
             seq.elements[j].row == seq.elements[j - 1].row + 1) {
        ++j;
      }
      Var p = project(e.view);
      const std::size_t n = g.value(p).dim(0);
      const std::size_t end = e.row + (j - i);
      if (end > n) throw ShapeError("reasoner: view " + std::string(prompt::to_string(e.view)) + " has " + std::to_string(n) + " rows");
      parts.push_back(e.row == 0 && end == n ? p : g.slice(p, 0, e.row, end));
    }
    i = j;
  }
  Var x = parts.size() == 1 ? parts[0] : g.concat(parts, 0);
  x = g.add(x, g.slice(b("reasoner.pos_emb"), 0, 0, S));

  for (std::size_t l = 0; l < c.layers; ++l) x = nn::block(b, x, "reasoner.block" + std::to_string(l), c.heads, true);
  ReasonerOutput out;
  out.hidden = nn::layer_norm(b, x, "reasoner.ln_f");

  const auto [begin, end] = options.logit_rows.value_or(std::pair<std::size_t, std::size_t>{0, S});
  if (begin >= end || end > S) throw ShapeError("reasoner: logit rows out of range");
  Var rows = (begin == 0 && end == S) ? out.hidden : g.slice(out.hidden, 0, begin, end);
  out.logits = nn::linear(b, rows, "reasoner.head");
  out.logit_begin = begin;
  return out;
}

Var extract_seg(Graph& g, Var hidden, std::size_t seg_position) {
  const std::size_t n = g.value(hidden).dim(0);
  if (seg_position >= n) {
    throw ShapeError("extract_seg: position " + std::to_string(seg_position) + " outside " + std::to_string(n) + " rows");
  }
  g.mark("extract_seg");
  return g.slice(hidden, 0, seg_position, seg_position + 1);
}

}  // namespace simtoken::reasoner
