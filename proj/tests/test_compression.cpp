// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "simtoken/compression.hpp"
#include "simtoken/errors.hpp"
#include "simtoken/params.hpp"

#include "oracles.hpp"

namespace simtoken::compression {
namespace {

double at3(const Tensor& t, std::size_t a, std::size_t b, std::size_t c) {
  return t[(a * t.dim(1) + b) * t.dim(2) + c];
}

TEST(Compress, WorkedExample) {
  const Tensor f_v({2, 2, 1}, {1, 3, 5, 7});
  const VideoFeatureBlock b = compress(f_v);
  EXPECT_EQ(b.f_vt.shape(), (Shape{2, 1}));
  EXPECT_EQ(b.f_vt[0], 2.0);
  EXPECT_EQ(b.f_vt[1], 6.0);
  EXPECT_EQ(b.f_vs[0], 3.0);
  EXPECT_EQ(b.f_vs[1], 5.0);
  EXPECT_EQ(b.f_vf[0], 1.0);
  EXPECT_EQ(b.f_vf[1], 3.0);
}

TEST(Compress, ConstantTensor) {
  const VideoFeatureBlock b = compress(Tensor::full({3, 5, 4}, 0.375));
  for (const Tensor* t : {&b.f_vt, &b.f_vs, &b.f_vf})
    for (double v : t->data()) EXPECT_EQ(v, 0.375);
}

TEST(Compress, SingleFrame) {
  const Tensor f_v = Rng(4).uniform_tensor({1, 6, 3}, -1, 1);
  const VideoFeatureBlock b = compress(f_v);
  for (std::size_t i = 0; i < 18; ++i) {
    EXPECT_EQ(b.f_vs[i], f_v[i]);
    EXPECT_EQ(b.f_vf[i], f_v[i]);
  }
  for (std::size_t d = 0; d < 3; ++d) {
    double s = 0;
    for (std::size_t l = 0; l < 6; ++l) s += at3(f_v, 0, l, d);
    EXPECT_NEAR(b.f_vt[d], s / 6, 1e-15);
  }
}

TEST(Compress, MatchesDirectAveraging) {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 1 + rng.index(5), L = 1 + rng.index(9), D = 1 + rng.index(6);
    const Tensor f_v = rng.uniform_tensor({T, L, D}, -3, 3);
    const VideoFeatureBlock b = compress(f_v);
    ASSERT_EQ(b.f_vt.shape(), (Shape{T, D}));
    ASSERT_EQ(b.f_vs.shape(), (Shape{L, D}));
    ASSERT_EQ(b.f_vf.shape(), (Shape{L, D}));
    const oracle::Views v = oracle::compress(f_v, T, L, D);
    for (std::size_t i = 0; i < T * D; ++i) EXPECT_NEAR(b.f_vt[i], v.vt[i], 1e-12);
    for (std::size_t i = 0; i < L * D; ++i) {
      EXPECT_NEAR(b.f_vs[i], v.vs[i], 1e-12);
      EXPECT_EQ(b.f_vf[i], v.vf[i]);
    }
  }
}

TEST(Compress, GraphFormMatchesTensorForm) {
  const Tensor f_v = Rng(7).uniform_tensor({3, 4, 5}, -1, 1);
  const VideoFeatureBlock ref = compress(f_v);
  Graph g;
  const CompressedVars v = compress(g, g.input(f_v));
  for (std::size_t i = 0; i < ref.f_vt.size(); ++i) EXPECT_NEAR(g.value(v.f_vt)[i], ref.f_vt[i], 1e-15);
  for (std::size_t i = 0; i < ref.f_vs.size(); ++i) EXPECT_NEAR(g.value(v.f_vs)[i], ref.f_vs[i], 1e-15);
  EXPECT_TRUE(g.value(v.f_vf).identical(ref.f_vf));
}

TEST(Patchify, GridArithmeticAndLayout) {
  std::vector<double> px(3 * 16 * 16);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<double>(i);
  const Tensor frame({3, 16, 16}, px);
  const Tensor p = patchify(frame, 4);
  ASSERT_EQ(p.shape(), (Shape{16, 48}));
  // Patch 5 is grid row 1, column 1; its channel-1 pixel (2, 3).
  const std::size_t y = 4 + 2, x = 4 + 3;
  EXPECT_EQ(p[5 * 48 + 16 + 2 * 4 + 3], frame[(1 * 16 + y) * 16 + x]);
  EXPECT_THROW(patchify(Tensor::zeros({3, 10, 16}), 4), ShapeError);
}

TEST(Extractor, ZeroFramesZeroBias) {
  VisualExtractor e = VisualExtractor::random(3);
  e.bias = Tensor::zeros({kFeatureDims});
  const Tensor f = extract_visual(Tensor::zeros({2, 3, 16, 16}), e);
  ASSERT_EQ(f.shape(), (Shape{2, 16, kFeatureDims}));
  for (double v : f.data()) EXPECT_EQ(v, 0.0);
}

TEST(Extractor, SinglePatchIsMatrixProduct) {
  const VisualExtractor e = VisualExtractor::random(5);
  const Tensor frames = Rng(6).uniform_tensor({2, 3, 8, 8}, 0, 1);
  const Tensor f = extract_visual(frames, e);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t l = 0; l < 4; ++l) {
      const std::size_t gy = l / 2, gx = l % 2;
      for (std::size_t d = 0; d < kFeatureDims; ++d) {
        double s = e.bias[d];
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
              const double v = frames[((t * 3 + c) * 8 + gy * 4 + i) * 8 + gx * 4 + j];
              s += v * e.weight[(c * 16 + i * 4 + j) * kFeatureDims + d];
            }
        EXPECT_NEAR(at3(f, t, l, d), s, 1e-12);
      }
    }
}

TEST(Extractor, DeterministicInSeed) {
  EXPECT_TRUE(VisualExtractor::random(9).weight.identical(VisualExtractor::random(9).weight));
  EXPECT_FALSE(VisualExtractor::random(9).weight.identical(VisualExtractor::random(10).weight));
}

TEST(AudioProjector, ZeroInputZeroBias) {
  ParamStore store;
  Rng rng(1);
  add_audio_projector(store, 8, 8, rng);
  store.set("audio.proj.bias", Tensor::zeros({1, 8}));
  Graph g;
  Binder b(g, store);
  const Var y = extract_audio(b, g.input(Tensor::zeros({4, 8})));
  for (double v : g.value(y).data()) EXPECT_EQ(v, 0.0);
}

TEST(AudioProjector, IdentityPassthrough) {
  ParamStore store;
  Rng rng(1);
  add_audio_projector(store, 8, 8, rng);
  std::vector<double> eye(64, 0.0);
  for (std::size_t i = 0; i < 8; ++i) eye[i * 9] = 1.0;
  store.set("audio.proj.weight", Tensor({8, 8}, eye));
  store.set("audio.proj.bias", Tensor::zeros({1, 8}));
  const Tensor a = Rng(2).uniform_tensor({4, 8}, -1, 1);
  Graph g;
  Binder b(g, store);
  EXPECT_TRUE(g.value(extract_audio(b, g.input(a))).identical(a));
}

TEST(AudioProjector, MatchesMatrixProduct) {
  ParamStore store;
  Rng rng(3);
  add_audio_projector(store, 8, 5, rng);
  const Tensor a = Rng(4).uniform_tensor({3, 8}, -1, 1);
  Graph g;
  Binder b(g, store);
  const Tensor y = g.value(extract_audio(b, g.input(a)));
  const Tensor& w = store.at("audio.proj.weight");
  const Tensor& bias = store.at("audio.proj.bias");
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t d = 0; d < 5; ++d) {
      double s = bias[d];
      for (std::size_t k = 0; k < 8; ++k) s += a[t * 8 + k] * w[k * 5 + d];
      EXPECT_NEAR(y[t * 5 + d], s, 1e-12);
    }
}

}  // namespace
}  // namespace simtoken::compression
