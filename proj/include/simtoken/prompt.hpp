// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "simtoken/compression.hpp"
#include "simtoken/dataset.hpp"

namespace simtoken::prompt {

inline constexpr std::size_t kBos = 0;
inline constexpr std::size_t kEos = 1;
inline constexpr std::size_t kPad = 2;
inline constexpr std::size_t kSeg = 3;
inline constexpr std::size_t kResponseLength = 4;  // It is <SEG> <EOS>
inline constexpr std::size_t kSuffixLength = 2;    // in video?

/// Literal words of the instruction template and its response.
std::vector<std::string> template_literals();

class Vocab {
 public:
  /// Specials take ids 0-3; the remaining words follow in sorted order.
  static Vocab from_words(std::vector<std::string> words);

  std::size_t id(std::string_view word) const;
  const std::string& word(std::size_t id) const { return words_.at(id); }
  std::size_t size() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  /// FNV-1a over the id-ordered words.
  std::uint64_t hash() const;

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

  bool operator==(const Vocab& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
};

Vocab build_vocab(const dataset::Corpus& corpus);
std::vector<std::size_t> tokenize(std::string_view text, const Vocab& vocab);

enum class View { VT, VS, VF, A };
std::string_view to_string(View v);

struct Element {
  bool is_token = true;
  std::size_t id = 0;  // token id when is_token
  View view = View::VT;
  std::size_t row = 0;

  static Element token(std::size_t id) { return {true, id, View::VT, 0}; }
  static Element slot(View view, std::size_t row) { return {false, 0, view, row}; }
  bool operator==(const Element& o) const {
    return is_token == o.is_token && (is_token ? id == o.id : (view == o.view && row == o.row));
  }
};

/// Which modality views enter the sequence. Dropped views lose their rows and
/// their marker text.
struct Layout {
  bool vt = true;
  bool vs = true;
  bool vf = true;
  bool audio = true;
};

struct PromptSequence {
  std::vector<Element> elements;  // prompt followed by the response
  std::size_t seg_position = 0;
  std::size_t referent_length = 0;

  std::size_t size() const noexcept { return elements.size(); }
  std::size_t feature_slots() const;
  std::size_t slots(View v) const;
  bool operator==(const PromptSequence& o) const {
    return elements == o.elements && seg_position == o.seg_position;
  }
};

/// Elements before the referent, i.e. up to and including "What is".
std::size_t prefix_length(std::size_t frames, std::size_t patches, const Layout& layout = {});

PromptSequence assemble(std::size_t frames, std::size_t patches, std::string_view referent, const Vocab& vocab,
                        const Layout& layout = {});
PromptSequence assemble(const compression::VideoFeatureBlock& block, const Tensor& audio_features,
                        std::string_view referent, const Vocab& vocab, const Layout& layout = {});

/// Ids of It, is, <SEG>, <EOS>.
std::vector<std::size_t> response_targets(const Vocab& vocab);

/// Rows whose next-token predictions are the response tokens.
std::vector<std::size_t> response_positions(const PromptSequence& seq);

}  // namespace simtoken::prompt
