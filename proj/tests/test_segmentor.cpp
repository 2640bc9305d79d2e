// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "simtoken/compression.hpp"
#include "simtoken/errors.hpp"
#include "simtoken/segmentor.hpp"

namespace simtoken::segmentor {
namespace {

SegmentorConfig small() {
  SegmentorConfig c;
  c.width = 8;
  c.patch = 4;
  c.prompt_dims = 12;
  c.grid = 4;
  return c;
}

// Tensor by tensor: patch embedding, position table, encoder block (two
// norms, attention, 2D-wide MLP), prompt linear, decoder attention, mixing
// layer, pixel head and colour skip.
std::size_t count_oracle(const SegmentorConfig& c) {
  const std::size_t D = c.width, P2 = c.patch * c.patch;
  auto lin = [](std::size_t in, std::size_t out) { return in * out + out; };
  const std::size_t block = 2 * (2 * D) + 4 * lin(D, D) + lin(D, 2 * D) + lin(2 * D, D);
  return lin(3 * P2, D) + c.grid * D + block + lin(c.prompt_dims, D) + 4 * lin(D, D) + lin(D, D) + lin(D, P2) +
         lin(D, 3);
}

class Segmentor : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(21);
    init_params(store, config, rng);
    frames = Rng(5).uniform_tensor({3, 3, 8, 8}, 0, 1);
    f_seg = Rng(6).uniform_tensor({1, 12}, -1, 1);
  }
  SegmentorConfig config = small();
  ParamStore store;
  Tensor frames, f_seg;
};

TEST(SegmentorParams, CountMatchesOracle) {
  for (std::size_t D : {4, 8, 16})
    for (std::size_t P : {2, 4}) {
      SegmentorConfig c = small();
      c.width = D;
      c.patch = P;
      ParamStore store;
      Rng rng(2);
      init_params(store, c, rng);
      EXPECT_EQ(store.scalar_count("segmentor."), count_oracle(c));
      EXPECT_EQ(param_count(c), count_oracle(c));
    }
}

TEST(SegmentorParams, ConfigValidation) {
  SegmentorConfig c = small();
  c.width = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small();
  c.patch = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(to_json(segmentor_config_from_json(to_json(small()))), to_json(small()));
}

TEST_F(Segmentor, VideoPathMatchesSingleFramePath) {
  Graph g;
  Binder b(g, store);
  const VideoLogits v = segment_video(b, config, frames, g.input(f_seg));
  ASSERT_EQ(v.frames.size(), 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    Graph g1;
    Binder b1(g1, store);
    const FrameFeatures f = encode_frame(b1, config, compression::frame_at(frames, t));
    const Var logits = decode(b1, f, encode_prompt(b1, g1.input(f_seg)));
    EXPECT_TRUE(g.value(v.frames[t]).identical(g1.value(logits))) << "frame " << t;
  }
}

TEST_F(Segmentor, PromptEncodedOncePerVideo) {
  Graph g;
  Binder b(g, store);
  segment_video(b, config, frames, g.input(f_seg));
  EXPECT_EQ(g.marks("prompt_encode"), 1u);
  segment_video(b, config, frames, g.input(f_seg));
  EXPECT_EQ(g.marks("prompt_encode"), 2u);
}

TEST_F(Segmentor, FramePermutationPermutesMasks) {
  const std::vector<std::size_t> perm{2, 0, 1};
  std::vector<double> shuffled;
  for (std::size_t t : perm) {
    const Tensor f = compression::frame_at(frames, t);
    shuffled.insert(shuffled.end(), f.data().begin(), f.data().end());
  }
  Graph g;
  Binder b(g, store);
  const VideoLogits base = segment_video(b, config, frames, g.input(f_seg));
  const VideoLogits moved = segment_video(b, config, Tensor(frames.shape(), shuffled), g.input(f_seg));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(g.value(moved.frames[i]).identical(g.value(base.frames[perm[i]])));
}

TEST_F(Segmentor, PromptEncoderIsAffine) {
  const Tensor a = Rng(8).uniform_tensor({1, 12}, -1, 1), c = Rng(9).uniform_tensor({1, 12}, -1, 1);
  Graph g;
  Binder b(g, store);
  const Tensor ea = g.value(encode_prompt(b, g.input(a)));
  const Tensor ec = g.value(encode_prompt(b, g.input(c)));
  const Tensor e0 = g.value(encode_prompt(b, g.input(Tensor::zeros({1, 12}))));
  std::vector<double> sum(12);
  for (std::size_t i = 0; i < 12; ++i) sum[i] = a[i] + c[i];
  const Tensor es = g.value(encode_prompt(b, g.input(Tensor({1, 12}, sum))));
  ASSERT_EQ(es.shape(), (Shape{1, 8}));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(es[i] - e0[i], (ea[i] - e0[i]) + (ec[i] - e0[i]), 1e-12);
}

TEST_F(Segmentor, LogitShapesAndBadFrames) {
  Graph g;
  Binder b(g, store);
  const VideoLogits v = segment_video(b, config, frames, g.input(f_seg));
  EXPECT_EQ(g.value(v.frames[0]).shape(), (Shape{4, 16}));
  const MaskSet m = to_mask_set(g, v);
  EXPECT_EQ(m.logits.shape(), (Shape{3, 8, 8}));
  EXPECT_THROW(segment_video(b, config, Tensor::zeros({3, 3, 12, 12}), g.input(f_seg)), ShapeError);
  EXPECT_THROW(segment_video(b, config, Tensor::zeros({3, 8, 8}), g.input(f_seg)), ShapeError);
}

TEST(PatchLayout, RoundTripAndPlacement) {
  std::vector<double> px(8 * 12);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<double>(i);
  const Tensor pixels({8, 12}, px);
  const Tensor patches = pixels_to_patches(pixels, 4);
  ASSERT_EQ(patches.shape(), (Shape{6, 16}));
  // Patch 4 is grid row 1, column 1; its element (2, 3) is pixel (6, 7).
  EXPECT_EQ(patches[4 * 16 + 2 * 4 + 3], pixels[6 * 12 + 7]);
  EXPECT_TRUE(patches_to_pixels(patches, 8, 12, 4).identical(pixels));
  EXPECT_THROW(pixels_to_patches(pixels, 5), ShapeError);
  EXPECT_THROW(patches_to_pixels(patches, 8, 8, 4), ShapeError);
}

TEST(Threshold, PositiveLogitsOnly) {
  const Tensor t = threshold(Tensor({4}, {-1e-9, 0.0, 1e-9, 3.0}));
  EXPECT_EQ(t[0], 0.0);
  EXPECT_EQ(t[1], 0.0);
  EXPECT_EQ(t[2], 1.0);
  EXPECT_EQ(t[3], 1.0);
}

TEST(ExportPgm, WritesOneFilePerFrame) {
  const auto dir = std::filesystem::temp_directory_path() / "simtoken_test_pgm";
  std::filesystem::remove_all(dir);
  MaskSet m;
  m.binary = Tensor({2, 2, 3}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0});
  m.logits = m.binary;
  export_pgm(m, dir, "v1", "e2");
  std::ifstream is(dir / "v1_e2_0.pgm", std::ios::binary);
  const std::string bytes{std::istreambuf_iterator<char>(is), {}};
  EXPECT_EQ(bytes.substr(0, 11), "P5\n3 2\n255\n");
  ASSERT_EQ(bytes.size(), 17u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[11]), 255);
  EXPECT_EQ(bytes[12], 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "v1_e2_1.pgm"));
}

}  // namespace
}  // namespace simtoken::segmentor
