// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#include "simtoken/prompt.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "simtoken/errors.hpp"

namespace simtoken::prompt {

namespace {

const std::vector<std::string>& specials() {
  static const std::vector<std::string> s = {"<BOS>", "<EOS>", "<PAD>", "<SEG>"};
  return s;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream is{std::string(text)};
  std::string w;
  while (is >> w) words.push_back(w);
  return words;
}

}  // namespace

std::vector<std::string> template_literals() {
  return {"Video:", ".", "Image:", "Audio:", "What", "is", "in", "video?", "It"};
}

Vocab Vocab::from_words(std::vector<std::string> words) {
  std::set<std::string> rest(words.begin(), words.end());
  for (const std::string& s : specials()) rest.erase(s);
  Vocab v;
  v.words_ = specials();
  v.words_.insert(v.words_.end(), rest.begin(), rest.end());
  return v;
}

std::size_t Vocab::id(std::string_view word) const {
  auto it = std::lower_bound(words_.begin() + 4, words_.end(), word);
  if (it != words_.end() && *it == word) return static_cast<std::size_t>(it - words_.begin());
  for (std::size_t i = 0; i < 4; ++i) {
    if (words_[i] == word) return i;
  }
  throw Error("out-of-vocabulary word '" + std::string(word) + "'");
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const std::string& w : words_) {
    for (unsigned char c : w) h = (h ^ c) * 0x100000001b3ULL;
    h = (h ^ 0xffU) * 0x100000001b3ULL;
  }
  return h;
}

nlohmann::json Vocab::to_json() const { return nlohmann::json{{"tokens", words_}}; }

Vocab Vocab::from_json(const nlohmann::json& j) {
  std::vector<std::string> words;
  try {
    words = j.at("tokens").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("vocab: ") + e.what());
  }
  Vocab v = from_words(words);
  if (v.words_ != words) throw FormatError("vocab: tokens are not in canonical order");
  return v;
}

Vocab build_vocab(const dataset::Corpus& corpus) {
  std::vector<std::string> words = dataset::template_words();
  for (const std::string& w : template_literals()) words.push_back(w);
  for (const dataset::ExpressionRecord& e : corpus.expressions) {
    for (std::string& w : split_words(e.text)) words.push_back(std::move(w));
  }
  return Vocab::from_words(std::move(words));
}

std::vector<std::size_t> tokenize(std::string_view text, const Vocab& vocab) {
  std::vector<std::size_t> ids;
  for (const std::string& w : split_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

std::string_view to_string(View v) {
  switch (v) {
    case View::VT: return "VT";
    case View::VS: return "VS";
    case View::VF: return "VF";
    case View::A: return "A";
  }
  return "?";
}

std::size_t PromptSequence::feature_slots() const {
  return static_cast<std::size_t>(std::count_if(elements.begin(), elements.end(), [](const Element& e) { return !e.is_token; }));
}

std::size_t PromptSequence::slots(View v) const {
  return static_cast<std::size_t>(
      std::count_if(elements.begin(), elements.end(), [v](const Element& e) { return !e.is_token && e.view == v; }));
}

std::size_t prefix_length(std::size_t frames, std::size_t patches, const Layout& layout) {
  std::size_t n = 0;
  if (layout.vt || layout.vs) n += 1 + (layout.vt ? frames : 0) + (layout.vs ? patches : 0);
  if (layout.vf) n += 2 + patches;
  if (layout.audio) n += 2 + frames;
  return n + 3;  // ". What is"
}

PromptSequence assemble(std::size_t frames, std::size_t patches, std::string_view referent, const Vocab& vocab,
                        const Layout& layout) {
  const std::vector<std::size_t> ref = tokenize(referent, vocab);
  if (ref.empty()) throw Error("assemble: empty referent");
  PromptSequence seq;
  auto& el = seq.elements;
  auto text = [&](std::initializer_list<const char*> words) {
    for (const char* w : words) el.push_back(Element::token(vocab.id(w)));
  };
  auto rows = [&](View v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) el.push_back(Element::slot(v, i));
  };
  if (layout.vt || layout.vs) {
    text({"Video:"});
    if (layout.vt) rows(View::VT, frames);
    if (layout.vs) rows(View::VS, patches);
  }
  if (layout.vf) {
    text({".", "Image:"});
    rows(View::VF, patches);
  }
  if (layout.audio) {
    text({".", "Audio:"});
    rows(View::A, frames);
  }
  text({".", "What", "is"});
  for (std::size_t id : ref) el.push_back(Element::token(id));
  text({"in", "video?", "It", "is"});
  seq.seg_position = el.size();
  el.push_back(Element::token(kSeg));
  el.push_back(Element::token(kEos));
  seq.referent_length = ref.size();
  return seq;
}

PromptSequence assemble(const compression::VideoFeatureBlock& block, const Tensor& audio_features,
                        std::string_view referent, const Vocab& vocab, const Layout& layout) {
  const std::size_t T = block.f_vt.dim(0), L = block.f_vs.dim(0);
  if (audio_features.rank() != 2 || audio_features.dim(0) != T) {
    throw ShapeError("assemble: audio features " + shape_string(audio_features.shape()) + " do not cover " +
                     std::to_string(T) + " frames");
  }
  return assemble(T, L, referent, vocab, layout);
}

std::vector<std::size_t> response_targets(const Vocab& vocab) {
  return {vocab.id("It"), vocab.id("is"), kSeg, kEos};
}

std::vector<std::size_t> response_positions(const PromptSequence& seq) {
  const std::size_t first = seq.seg_position - 2;  // "It"
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < kResponseLength; ++i) rows.push_back(first - 1 + i);
  return rows;
}

}  // namespace simtoken::prompt
