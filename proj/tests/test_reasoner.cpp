// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "simtoken/errors.hpp"
#include "simtoken/reasoner.hpp"

namespace simtoken::reasoner {
namespace {

const prompt::Vocab& vocab() {
  static const prompt::Vocab v = [] {
    std::vector<std::string> words = dataset::template_words();
    for (const std::string& w : prompt::template_literals()) words.push_back(w);
    return prompt::Vocab::from_words(words);
  }();
  return v;
}

ReasonerConfig small() {
  ReasonerConfig c;
  c.model_width = 16;
  c.layers = 2;
  c.heads = 2;
  c.feature_dims = 8;
  c.vocab_size = vocab().size();
  c.max_length = 48;
  return c;
}

struct Views {
  Tensor vt, vs, vf, a;
};

Views random_views(std::uint64_t seed, std::size_t T, std::size_t L, std::size_t F) {
  Rng rng(seed);
  return {rng.uniform_tensor({T, F}, -1, 1), rng.uniform_tensor({L, F}, -1, 1), rng.uniform_tensor({L, F}, -1, 1),
          rng.uniform_tensor({T, F}, -1, 1)};
}

struct Outputs {
  Tensor hidden, logits;
};

Outputs run(const ParamStore& store, const ReasonerConfig& c, const prompt::PromptSequence& seq, const Views& v) {
  Graph g;
  Binder b(g, store);
  const ViewInputs in{g.input(v.vt), g.input(v.vs), g.input(v.vf), g.input(v.a)};
  const ReasonerOutput out = forward(b, c, seq, in);
  return {g.value(out.hidden), g.value(out.logits)};
}

bool rows_equal(const Tensor& a, const Tensor& b, std::size_t rows) {
  const std::size_t w = a.dim(1);
  for (std::size_t i = 0; i < rows * w; ++i)
    if (a[i] != b[i]) return false;
  return true;
}

// Counted tensor by tensor from the architecture description.
std::size_t count_oracle(const ReasonerConfig& c) {
  const std::size_t D = c.model_width, F = c.feature_dims, V = c.vocab_size, S = c.max_length;
  const std::size_t attention = 4 * (D * D + D);
  const std::size_t mlp = (D * 2 * D + 2 * D) + (2 * D * D + D);
  const std::size_t norms = 2 * (2 * D);
  std::size_t n = V * D + S * D;
  for (int view = 0; view < 4; ++view) n += F * D + D;
  for (std::size_t l = 0; l < c.layers; ++l) n += attention + mlp + norms;
  return n + 2 * D + D * V + V;
}

TEST(ReasonerParams, CountMatchesOracle) {
  for (std::size_t D : {8, 16, 24})
    for (std::size_t N : {1, 2, 3}) {
      ReasonerConfig c = small();
      c.model_width = D;
      c.layers = N;
      c.heads = 2;
      ParamStore store;
      Rng rng(1);
      init_params(store, c, rng);
      EXPECT_EQ(store.scalar_count("reasoner."), count_oracle(c));
      EXPECT_EQ(param_count(c), count_oracle(c));
    }
}

TEST(ReasonerParams, SeedDeterminism) {
  auto make = [](std::uint64_t seed) {
    ParamStore s;
    Rng rng(seed);
    init_params(s, small(), rng);
    return s;
  };
  EXPECT_TRUE(make(4).identical(make(4)));
  EXPECT_FALSE(make(4).identical(make(5)));
}

TEST(ReasonerParams, ConfigValidation) {
  ReasonerConfig c = small();
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small();
  c.vocab_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

class ReasonerForward : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(11);
    init_params(store, config, rng);
  }
  ReasonerConfig config = small();
  ParamStore store;
  // 2 frames, 4 patches.
  prompt::PromptSequence seq = prompt::assemble(2, 4, "the red shape", vocab());
  Views views = random_views(3, 2, 4, 8);
};

TEST_F(ReasonerForward, OutputShapes) {
  const Outputs r = run(store, config, seq, views);
  EXPECT_EQ(r.hidden.shape(), (Shape{seq.size(), 16}));
  EXPECT_EQ(r.logits.shape(), (Shape{seq.size(), vocab().size()}));
}

TEST_F(ReasonerForward, TokenPerturbationIsCausal) {
  const Outputs base = run(store, config, seq, views);
  for (std::size_t j = 1; j < seq.size(); ++j) {
    if (!seq.elements[j].is_token) continue;
    prompt::PromptSequence changed = seq;
    changed.elements[j].id = (changed.elements[j].id + 1) % vocab().size();
    const Outputs r = run(store, config, changed, views);
    ASSERT_TRUE(rows_equal(r.logits, base.logits, j)) << "position " << j;
    ASSERT_FALSE(rows_equal(r.hidden, base.hidden, j + 1)) << "position " << j;
  }
}

TEST_F(ReasonerForward, SlotPerturbationIsCausal) {
  const Outputs base = run(store, config, seq, views);
  std::size_t first_a = seq.size();
  for (std::size_t i = 0; i < seq.size(); ++i)
    if (!seq.elements[i].is_token && seq.elements[i].view == prompt::View::A) {
      first_a = i;
      break;
    }
  ASSERT_LT(first_a, seq.size());
  Views changed = views;
  changed.a = Tensor::zeros(views.a.shape());
  const Outputs r = run(store, config, seq, changed);
  EXPECT_TRUE(rows_equal(r.logits, base.logits, first_a));
  EXPECT_FALSE(rows_equal(r.logits, base.logits, first_a + 1));
}

TEST_F(ReasonerForward, LogitRowWindow) {
  const Outputs full = run(store, config, seq, views);
  Graph g;
  Binder b(g, store);
  ForwardOptions o;
  o.logit_rows = std::pair<std::size_t, std::size_t>{5, 9};
  const ReasonerOutput out =
      forward(b, config, seq, {g.input(views.vt), g.input(views.vs), g.input(views.vf), g.input(views.a)}, o);
  EXPECT_EQ(out.logit_begin, 5u);
  const Tensor& l = g.value(out.logits);
  ASSERT_EQ(l.dim(0), 4u);
  const std::size_t V = vocab().size();
  for (std::size_t i = 0; i < 4 * V; ++i) EXPECT_EQ(l[i], full.logits[5 * V + i]);
}

TEST_F(ReasonerForward, MissingViewAndOverflow) {
  Graph g;
  Binder b(g, store);
  EXPECT_THROW(forward(b, config, seq, {g.input(views.vt), g.input(views.vs), g.input(views.vf), std::nullopt}), Error);
  prompt::Layout no_audio;
  no_audio.audio = false;
  const prompt::PromptSequence dropped = prompt::assemble(2, 4, "the red shape", vocab(), no_audio);
  EXPECT_NO_THROW(forward(b, config, dropped, {g.input(views.vt), g.input(views.vs), g.input(views.vf), std::nullopt}));
  const prompt::PromptSequence long_seq = prompt::assemble(4, 16, "the red shape", vocab());
  const Views big = random_views(1, 4, 16, 8);
  EXPECT_THROW(forward(b, config, long_seq, {g.input(big.vt), g.input(big.vs), g.input(big.vf), g.input(big.a)}),
               ShapeError);
}

TEST_F(ReasonerForward, ExtractSegIsTheHiddenRow) {
  Graph g;
  Binder b(g, store);
  const ViewInputs in{g.input(views.vt), g.input(views.vs), g.input(views.vf), g.input(views.a)};
  const ReasonerOutput out = forward(b, config, seq, in);
  const Tensor seg = g.value(extract_seg(g, out.hidden, seq.seg_position));
  ASSERT_EQ(seg.shape(), (Shape{1, 16}));
  const Tensor& h = g.value(out.hidden);
  for (std::size_t d = 0; d < 16; ++d) EXPECT_EQ(seg[d], h[seq.seg_position * 16 + d]);
  EXPECT_TRUE(g.value(extract_seg(g, out.hidden, seq.seg_position)).identical(seg));
  EXPECT_THROW(extract_seg(g, out.hidden, seq.size()), ShapeError);
}

TEST_F(ReasonerForward, RepeatedCallsIdentical) {
  const Outputs a = run(store, config, seq, views), b = run(store, config, seq, views);
  EXPECT_TRUE(a.hidden.identical(b.hidden));
  EXPECT_TRUE(a.logits.identical(b.logits));
}

}  // namespace
}  // namespace simtoken::reasoner
