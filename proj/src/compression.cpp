// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#include "simtoken/compression.hpp"

#include <cmath>

#include "simtoken/errors.hpp"
#include "simtoken/random.hpp"

namespace simtoken::compression {

VisualExtractor VisualExtractor::random(std::uint64_t seed, std::size_t patch, std::size_t dims) {
  Rng rng(seed);
  const std::size_t in = 3 * patch * patch;
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  VisualExtractor e;
  e.patch = patch;
  e.weight = rng.uniform_tensor({in, dims}, -s, s);
  e.bias = rng.uniform_tensor({dims}, -s, s);
  return e;
}

Tensor patchify(const Tensor& frame, std::size_t patch) {
  if (frame.rank() != 3 || frame.dim(0) != 3) throw ShapeError("patchify: expected 3 x H x W, got " + shape_string(frame.shape()));
  const std::size_t h = frame.dim(1), w = frame.dim(2);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw ShapeError("patchify: frame " + shape_string(frame.shape()) + " not divisible by patch " + std::to_string(patch));
  }
  const std::size_t gh = h / patch, gw = w / patch, cols = 3 * patch * patch;
  std::vector<double> out(gh * gw * cols);
  for (std::size_t pr = 0; pr < gh; ++pr) {
    for (std::size_t pc = 0; pc < gw; ++pc) {
      double* row = out.data() + (pr * gw + pc) * cols;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < patch; ++i)
          for (std::size_t j = 0; j < patch; ++j) {
            *row++ = frame[(c * h + pr * patch + i) * w + pc * patch + j];
          }
    }
  }
  return Tensor({gh * gw, cols}, std::move(out));
}

Tensor frame_at(const Tensor& frames, std::size_t t) {
  if (frames.rank() != 4) throw ShapeError("frame_at: expected T x C x H x W, got " + shape_string(frames.shape()));
  const std::size_t n = frames.size() / frames.dim(0);
  std::vector<double> out(frames.data().begin() + static_cast<std::ptrdiff_t>(t * n),
                          frames.data().begin() + static_cast<std::ptrdiff_t>((t + 1) * n));
  return Tensor({frames.dim(1), frames.dim(2), frames.dim(3)}, std::move(out));
}

Tensor extract_visual(const Tensor& frames, const VisualExtractor& extractor) {
  if (frames.rank() != 4 || frames.dim(1) != 3) {
    throw ShapeError("extract_visual: expected T x 3 x H x W, got " + shape_string(frames.shape()));
  }
  const std::size_t T = frames.dim(0);
  const std::size_t in = extractor.weight.dim(0), d = extractor.weight.dim(1);
  std::vector<double> out;
  std::size_t L = 0;
  for (std::size_t t = 0; t < T; ++t) {
    const Tensor p = patchify(frame_at(frames, t), extractor.patch);
    if (p.dim(1) != in) throw ShapeError("extract_visual: extractor expects " + std::to_string(in) + " inputs per patch");
    L = p.dim(0);
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t j = 0; j < d; ++j) {
        double acc = extractor.bias[j];
        for (std::size_t i = 0; i < in; ++i) acc += p[l * in + i] * extractor.weight[i * d + j];
        out.push_back(acc);
      }
    }
  }
  return Tensor({T, L, d}, std::move(out));
}

VideoFeatureBlock compress(const Tensor& f_v) {
  if (f_v.rank() != 3) throw ShapeError("compress: expected T x L x D, got " + shape_string(f_v.shape()));
  const std::size_t T = f_v.dim(0), L = f_v.dim(1), D = f_v.dim(2);
  std::vector<double> vt(T * D, 0.0), vs(L * D, 0.0), vf(L * D);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t j = 0; j < D; ++j) {
        const double x = f_v[(t * L + l) * D + j];
        vt[t * D + j] += x;
        vs[l * D + j] += x;
        if (t == 0) vf[l * D + j] = x;
      }
  for (double& x : vt) x /= static_cast<double>(L);
  for (double& x : vs) x /= static_cast<double>(T);
  return {f_v, Tensor({T, D}, std::move(vt)), Tensor({L, D}, std::move(vs)), Tensor({L, D}, std::move(vf))};
}

CompressedVars compress(Graph& g, Var f_v) {
  const Shape s = g.value(f_v).shape();
  if (s.size() != 3) throw ShapeError("compress: expected T x L x D, got " + shape_string(s));
  Var first = g.reshape(g.slice(f_v, 0, 0, 1), {s[1], s[2]});
  return {g.mean(f_v, 1), g.mean(f_v, 0), first};
}

void add_audio_projector(ParamStore& store, std::size_t audio_dims, std::size_t dims, Rng& rng) {
  nn::add_linear(store, "audio.proj", audio_dims, dims, rng);
}

Var extract_audio(Binder& b, Var audio) { return nn::linear(b, audio, "audio.proj"); }

}  // namespace simtoken::compression
