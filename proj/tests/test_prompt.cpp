// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "simtoken/errors.hpp"
#include "simtoken/prompt.hpp"

namespace simtoken::prompt {
namespace {

const dataset::Corpus& corpus() {
  static const dataset::Corpus c = [] {
    dataset::DatasetConfig cfg;
    cfg.train_scenes = 12;
    cfg.seen_test_scenes = 3;
    cfg.unseen_test_scenes = 3;
    cfg.null_test_scenes = 2;
    return dataset::generate(cfg, 3);
  }();
  return c;
}

const Vocab& vocab() {
  static const Vocab v = build_vocab(corpus());
  return v;
}

TEST(Vocab, BuildIsDeterministic) {
  const Vocab a = build_vocab(corpus()), b = build_vocab(corpus());
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.hash(), b.hash());
}

TEST(Vocab, SpecialsThenSortedWords) {
  const Vocab& v = vocab();
  EXPECT_EQ(v.word(kBos), "<BOS>");
  EXPECT_EQ(v.word(kEos), "<EOS>");
  EXPECT_EQ(v.word(kPad), "<PAD>");
  EXPECT_EQ(v.word(kSeg), "<SEG>");
  for (std::size_t i = 5; i < v.size(); ++i) EXPECT_LT(v.word(i - 1), v.word(i));
}

TEST(Vocab, CoversTemplateAndCorpus) {
  for (const std::string& w : dataset::template_words()) EXPECT_NO_THROW(vocab().id(w)) << w;
  for (const std::string& w : template_literals()) EXPECT_NO_THROW(vocab().id(w)) << w;
  for (const auto& e : corpus().expressions) EXPECT_NO_THROW(tokenize(e.text, vocab())) << e.text;
}

TEST(Vocab, OutOfVocabularyNamesTheWord) {
  try {
    tokenize("the zeppelin", vocab());
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("zeppelin"), std::string::npos);
  }
}

TEST(Vocab, JsonRoundTripAndCanonicalOrder) {
  EXPECT_EQ(Vocab::from_json(vocab().to_json()), vocab());
  nlohmann::json j = vocab().to_json();
  std::swap(j["tokens"][5], j["tokens"][6]);
  EXPECT_THROW(Vocab::from_json(j), FormatError);
  EXPECT_THROW(Vocab::from_json(nlohmann::json{{"words", 1}}), FormatError);
}

TEST(Vocab, HashSeesOrderAndContent) {
  const Vocab a = Vocab::from_words({"a", "b"}), b = Vocab::from_words({"b", "a"}), c = Vocab::from_words({"a", "c"});
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
}

TEST(Assemble, FortySlotsInViewOrder) {
  const PromptSequence s = assemble(4, 16, "the red shape", vocab());
  std::vector<Element> expect;
  for (std::size_t i = 0; i < 4; ++i) expect.push_back(Element::slot(View::VT, i));
  for (std::size_t i = 0; i < 16; ++i) expect.push_back(Element::slot(View::VS, i));
  for (std::size_t i = 0; i < 16; ++i) expect.push_back(Element::slot(View::VF, i));
  for (std::size_t i = 0; i < 4; ++i) expect.push_back(Element::slot(View::A, i));
  std::vector<Element> got;
  for (const Element& e : s.elements)
    if (!e.is_token) got.push_back(e);
  EXPECT_EQ(s.feature_slots(), 40u);
  EXPECT_EQ(got, expect);
  EXPECT_EQ(s.slots(View::VT), 4u);
  EXPECT_EQ(s.slots(View::A), 4u);
}

TEST(Assemble, SegPositionAndReferent) {
  const PromptSequence s = assemble(4, 16, "the red shape", vocab());
  EXPECT_EQ(s.elements[s.seg_position], Element::token(kSeg));
  EXPECT_EQ(s.elements.back(), Element::token(kEos));
  EXPECT_EQ(s.referent_length, 3u);
  const std::size_t p = prefix_length(4, 16);
  EXPECT_EQ(s.elements[p], Element::token(vocab().id("the")));
  EXPECT_EQ(s.elements[p - 1], Element::token(vocab().id("is")));
  // prefix, referent, "in video? It is", <SEG>, <EOS>
  EXPECT_EQ(s.size(), p + 3 + 4 + 2);
}

TEST(Assemble, EmptyReferentRejected) {
  EXPECT_THROW(assemble(4, 16, "", vocab()), Error);
  EXPECT_THROW(assemble(4, 16, "   ", vocab()), Error);
}

TEST(Assemble, Deterministic) {
  EXPECT_EQ(assemble(4, 16, "the blue shape", vocab()), assemble(4, 16, "the blue shape", vocab()));
}

TEST(Assemble, DroppedViewsLoseRowsAndMarkers) {
  Layout no_audio;
  no_audio.audio = false;
  const PromptSequence s = assemble(4, 16, "the red shape", vocab(), no_audio);
  EXPECT_EQ(s.slots(View::A), 0u);
  EXPECT_EQ(s.feature_slots(), 36u);
  for (const Element& e : s.elements) EXPECT_FALSE(e.is_token && e.id == vocab().id("Audio:"));
  EXPECT_EQ(s.size(), assemble(4, 16, "the red shape", vocab()).size() - 6);

  Layout vf_only;
  vf_only.vt = vf_only.vs = false;
  const PromptSequence f = assemble(4, 16, "the red shape", vocab(), vf_only);
  EXPECT_EQ(f.feature_slots(), 20u);
  for (const Element& e : f.elements) EXPECT_FALSE(e.is_token && e.id == vocab().id("Video:"));
  EXPECT_EQ(prefix_length(4, 16, vf_only), f.size() - 3 - 4 - 2);
}

TEST(Assemble, BlockOverloadChecksAudioFrames) {
  const compression::VideoFeatureBlock block = compression::compress(Tensor::zeros({4, 16, 8}));
  EXPECT_EQ(assemble(block, Tensor::zeros({4, 8}), "the red shape", vocab()),
            assemble(4, 16, "the red shape", vocab()));
  EXPECT_THROW(assemble(block, Tensor::zeros({3, 8}), "the red shape", vocab()), ShapeError);
}

TEST(Response, FixedFourTokens) {
  const auto r = response_targets(vocab());
  ASSERT_EQ(r.size(), kResponseLength);
  EXPECT_EQ(r[2], kSeg);
  EXPECT_EQ(r[3], kEos);
  EXPECT_EQ(response_targets(build_vocab(corpus())), r);
}

TEST(Response, PositionsPredictTheResponse) {
  for (const char* text : {"the red shape", "the shape that is sounding"}) {
    const PromptSequence s = assemble(4, 16, text, vocab());
    const auto rows = response_positions(s);
    const auto targets = response_targets(vocab());
    ASSERT_EQ(rows.size(), targets.size());
    for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(s.elements[rows[i] + 1], Element::token(targets[i]));
    EXPECT_GE(rows.front(), prefix_length(4, 16) + s.referent_length);
  }
}

}  // namespace
}  // namespace simtoken::prompt
