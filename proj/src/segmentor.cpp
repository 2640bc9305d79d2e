// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#include "simtoken/segmentor.hpp"

#include <cmath>
#include <fstream>

#include "simtoken/compression.hpp"
#include "simtoken/errors.hpp"

namespace simtoken::segmentor {

void SegmentorConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("segmentor config: " + m); };
  if (width == 0) fail("width must be positive");
  if (patch == 0) fail("patch must be positive");
  if (prompt_dims == 0) fail("prompt_dims must be positive");
  if (grid == 0) fail("grid must be positive");
}

nlohmann::json to_json(const SegmentorConfig& c) {
  return {{"width", c.width}, {"patch", c.patch}, {"prompt_dims", c.prompt_dims}, {"grid", c.grid}};
}

SegmentorConfig segmentor_config_from_json(const nlohmann::json& j) {
  SegmentorConfig c;
  try {
    c.width = j.value("width", c.width);
    c.patch = j.value("patch", c.patch);
    c.prompt_dims = j.value("prompt_dims", c.prompt_dims);
    c.grid = j.value("grid", c.grid);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("segmentor config: ") + e.what());
  }
  return c;
}

std::size_t param_count(const SegmentorConfig& c) {
  const std::size_t D = c.width, P2 = c.patch * c.patch, M = c.prompt_dims, G = c.grid;
  return (3 * P2 * D + D) + G * D + (8 * D * D + 11 * D) + (M * D + D) + 4 * (D * D + D) + (D * D + D) +
         (D * P2 + P2) + (3 * D + 3);
}

void init_params(ParamStore& store, const SegmentorConfig& c, Rng& rng) {
  c.validate();
  const std::size_t D = c.width, P2 = c.patch * c.patch;
  nn::add_linear(store, "segmentor.patch", 3 * P2, D, rng);
  const double s = 1.0 / std::sqrt(static_cast<double>(D));
  store.add("segmentor.pos", rng.uniform_tensor({c.grid, D}, -s, s));
  nn::add_block(store, "segmentor.block", D, rng);
  nn::add_linear(store, "segmentor.prompt", c.prompt_dims, D, rng);
  nn::add_attention(store, "segmentor.decoder", D, rng);
  nn::add_linear(store, "segmentor.mix", D, D, rng);
  nn::add_linear(store, "segmentor.head", D, P2, rng);
  nn::add_linear(store, "segmentor.skip", D, 3, rng);
}

FrameFeatures encode_frame(Binder& b, const SegmentorConfig& c, const Tensor& frame) {
  Graph& g = b.graph();
  const Tensor patches = compression::patchify(frame, c.patch);
  if (patches.dim(0) != c.grid) {
    throw ShapeError("encode_frame: frame " + shape_string(frame.shape()) + " gives " + std::to_string(patches.dim(0)) +
                     " patches, expected " + std::to_string(c.grid));
  }
  Var pixels = g.input(patches);
  Var x = nn::linear(b, pixels, "segmentor.patch");
  x = g.add(x, b("segmentor.pos"));
  return {nn::block(b, x, "segmentor.block", 1, false), pixels};
}

Var encode_prompt(Binder& b, Var f_seg) {
  b.graph().mark("prompt_encode");
  return nn::linear(b, f_seg, "segmentor.prompt");
}

Var decode(Binder& b, const FrameFeatures& features, Var prompt) {
  Graph& g = b.graph();
  const std::size_t L = g.value(features.patches).dim(0);
  const std::size_t P2 = g.value(features.pixels).dim(1) / 3;
  Var p = g.add(prompt, nn::attention(b, prompt, features.patches, "segmentor.decoder", 1, false));
  Var gated = g.multiply(features.patches, nn::rows(g, p, L));
  Var logits = nn::linear(b, g.gelu(nn::linear(b, gated, "segmentor.mix")), "segmentor.head");

  Var w = nn::linear(b, p, "segmentor.skip");  // 1 x 3
  Var spread = g.input(Tensor::full({1, P2}, 1.0));
  for (std::size_t c = 0; c < 3; ++c) {
    Var wc = g.matmul(nn::ones(g, L), g.matmul(g.slice(w, 1, c, c + 1), spread));
    logits = g.add(logits, g.multiply(g.slice(features.pixels, 1, c * P2, (c + 1) * P2), wc));
  }
  return logits;
}

VideoLogits segment_video(Binder& b, const std::vector<FrameFeatures>& frame_features, Var f_seg, std::size_t height,
                          std::size_t width, std::size_t patch) {
  VideoLogits out{{}, height, width, patch};
  Var prompt = encode_prompt(b, f_seg);
  for (const FrameFeatures& f : frame_features) out.frames.push_back(decode(b, f, prompt));
  return out;
}

VideoLogits segment_video(Binder& b, const SegmentorConfig& c, const Tensor& frames, Var f_seg) {
  if (frames.rank() != 4) throw ShapeError("segment_video: expected T x 3 x H x W, got " + shape_string(frames.shape()));
  std::vector<FrameFeatures> feats;
  for (std::size_t t = 0; t < frames.dim(0); ++t) feats.push_back(encode_frame(b, c, compression::frame_at(frames, t)));
  return segment_video(b, feats, f_seg, frames.dim(2), frames.dim(3), c.patch);
}

Tensor patches_to_pixels(const Tensor& patches, std::size_t height, std::size_t width, std::size_t patch) {
  const std::size_t gw = width / patch;
  if (patches.rank() != 2 || patches.dim(1) != patch * patch || patches.dim(0) * patch * patch != height * width) {
    throw ShapeError("patches_to_pixels: " + shape_string(patches.shape()) + " does not tile " + std::to_string(height) +
                     "x" + std::to_string(width));
  }
  std::vector<double> out(height * width);
  for (std::size_t l = 0; l < patches.dim(0); ++l)
    for (std::size_t i = 0; i < patch; ++i)
      for (std::size_t j = 0; j < patch; ++j) {
        out[((l / gw) * patch + i) * width + (l % gw) * patch + j] = patches[l * patch * patch + i * patch + j];
      }
  return Tensor({height, width}, std::move(out));
}

Tensor pixels_to_patches(const Tensor& pixels, std::size_t patch) {
  if (pixels.rank() != 2 || pixels.dim(0) % patch || pixels.dim(1) % patch) {
    throw ShapeError("pixels_to_patches: " + shape_string(pixels.shape()) + " not divisible by patch " + std::to_string(patch));
  }
  const std::size_t w = pixels.dim(1), gw = w / patch, n = (pixels.dim(0) / patch) * gw;
  std::vector<double> out(pixels.size());
  for (std::size_t l = 0; l < n; ++l)
    for (std::size_t i = 0; i < patch; ++i)
      for (std::size_t j = 0; j < patch; ++j) {
        out[l * patch * patch + i * patch + j] = pixels[((l / gw) * patch + i) * w + (l % gw) * patch + j];
      }
  return Tensor({n, patch * patch}, std::move(out));
}

Tensor threshold(const Tensor& logits) {
  std::vector<double> out(logits.size());
  // sigmoid(x) > 0.5 exactly when x > 0.
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits[i] > 0.0 ? 1.0 : 0.0;
  return Tensor(logits.shape(), std::move(out));
}

MaskSet to_mask_set(const Graph& g, const VideoLogits& v) {
  const std::size_t T = v.frames.size(), HW = v.height * v.width;
  std::vector<double> data(T * HW);
  for (std::size_t t = 0; t < T; ++t) {
    const Tensor px = patches_to_pixels(g.value(v.frames[t]), v.height, v.width, v.patch);
    std::copy(px.data().begin(), px.data().end(), data.begin() + static_cast<std::ptrdiff_t>(t * HW));
  }
  MaskSet m;
  m.logits = Tensor({T, v.height, v.width}, std::move(data));
  m.binary = threshold(m.logits);
  return m;
}

void export_pgm(const MaskSet& masks, const std::filesystem::path& dir, const std::string& video_id,
                const std::string& expression_id) {
  std::filesystem::create_directories(dir);
  const std::size_t T = masks.binary.dim(0), H = masks.binary.dim(1), W = masks.binary.dim(2);
  for (std::size_t t = 0; t < T; ++t) {
    const auto path = dir / (video_id + "_" + expression_id + "_" + std::to_string(t) + ".pgm");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + path.string());
    os << "P5\n" << W << " " << H << "\n255\n";
    for (std::size_t p = 0; p < H * W; ++p) os.put(masks.binary[t * H * W + p] > 0.5 ? static_cast<char>(255) : 0);
  }
}

}  // namespace simtoken::segmentor
