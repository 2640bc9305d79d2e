// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "simtoken/tensor.hpp"

namespace simtoken::dataset {

inline constexpr int kDatasetVersion = 1;
inline constexpr std::size_t kAudioClassDims = 4;
inline constexpr std::size_t kAudioNoiseDims = 4;
inline constexpr std::size_t kAudioDims = kAudioClassDims + kAudioNoiseDims;
inline constexpr double kAudioNoise = 0.1;

enum class ShapeClass { Square, Circle, Triangle, Cross };
enum class Color { Red, Green, Blue, Yellow, Purple, Cyan };
enum class Motion { Static, Left, Right, Down };
enum class Cue { Audio, Visual, Motion };
enum class Split { Train, SeenTest, UnseenTest, NullTest };

inline constexpr ShapeClass kAllShapes[] = {ShapeClass::Square, ShapeClass::Circle, ShapeClass::Triangle,
                                            ShapeClass::Cross};
inline constexpr Color kAllColors[] = {Color::Red, Color::Green, Color::Blue, Color::Yellow, Color::Purple,
                                       Color::Cyan};
inline constexpr Motion kAllMotions[] = {Motion::Static, Motion::Left, Motion::Right, Motion::Down};
inline constexpr Split kAllSplits[] = {Split::Train, Split::SeenTest, Split::UnseenTest, Split::NullTest};

std::string_view to_string(ShapeClass s);
std::string_view to_string(Color c);
std::string_view to_string(Motion m);
std::string_view to_string(Cue c);
std::string_view to_string(Split s);
ShapeClass shape_from_string(std::string_view s);
Color color_from_string(std::string_view s);
Motion motion_from_string(std::string_view s);
Cue cue_from_string(std::string_view s);
Split split_from_string(std::string_view s);

struct Rgb {
  double r, g, b;
};
Rgb rgb(Color c);

struct SceneObject {
  int object_id = 0;
  ShapeClass shape = ShapeClass::Square;
  Color color = Color::Red;
  Motion motion = Motion::Static;
  int x = 0;  // bounding-box column at frame 0
  int y = 0;  // bounding-box row at frame 0
  int size = 5;
  int speed = 1;  // pixels per frame along the motion direction
  std::vector<bool> sounding_frames;

  bool sounds() const;
  /// Bounding-box origin at frame t.
  std::pair<int, int> origin(std::size_t t) const;
};

/// Pixel membership of a shape inside its size x size bounding box, row-major.
std::vector<std::uint8_t> shape_stencil(ShapeClass shape, int size);

/// Canvas-sized binary mask of the object at frame t.
std::vector<std::uint8_t> rasterize(const SceneObject& obj, std::size_t t, std::size_t canvas);

struct ScenePack {
  std::string video_id;
  Split split = Split::Train;
  Tensor frames;  // T x 3 x H x W in [0,1]
  Tensor audio;   // T x kAudioDims
  std::vector<SceneObject> objects;
  std::map<int, Tensor> masks;  // object id -> T x H x W in {0,1}

  std::size_t frame_count() const { return frames.dim(0); }
  std::size_t canvas() const { return frames.dim(2); }
  const SceneObject* object(int id) const;
};

struct ExpressionRecord {
  std::string expression_id;
  std::string video_id;
  std::string text;
  std::optional<int> target_object_id;
  Cue cue = Cue::Visual;
  Split split = Split::Train;
};

struct DatasetConfig {
  std::size_t train_scenes = 240;
  std::size_t seen_test_scenes = 60;
  std::size_t unseen_test_scenes = 60;
  std::size_t null_test_scenes = 40;
  std::size_t frames = 4;
  std::size_t size = 16;
  std::size_t min_objects = 2;
  std::size_t max_objects = 4;
  int object_size = 5;
  int speed = 1;
  std::vector<ShapeClass> holdout = {ShapeClass::Cross};
  double p_sound = 0.7;       // a scene has one sounding object
  double p_share = 0.6;       // a scene has two objects of one color
  double p_null = 0.5;        // a train scene also gets a null expression
  double p_second_target = 0.5;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

struct Manifest {
  int version = kDatasetVersion;
  std::uint64_t seed = 0;
  DatasetConfig config;
  std::vector<ShapeClass> holdout;
  std::map<std::string, Split> expression_splits;
  std::vector<std::string> scene_ids;
};

struct Corpus {
  Manifest manifest;
  std::vector<ScenePack> scenes;
  std::vector<ExpressionRecord> expressions;

  const ScenePack& scene(std::string_view video_id) const;
  std::vector<std::size_t> split_indices(Split split) const;
};

/// Every word any expression template can produce.
std::vector<std::string> template_words();

/// Object ids in `scene` matched by an expression's text. Throws DatasetError
/// for text outside the template grammar.
std::vector<int> resolve(std::string_view text, const std::vector<SceneObject>& objects);
Cue cue_of(std::string_view text);

/// Deterministic in (config, seed).
Corpus generate(const DatasetConfig& config, std::uint64_t seed);

/// Writes manifest.json, expressions.json and scenes/<id>/{scene.json,
/// frames.stk, audio.stk, mask_<object>.stk}. The config is validated before
/// any file is written.
void save(const Corpus& corpus, const std::filesystem::path& dir);
Corpus generate_dataset(const DatasetConfig& config, std::uint64_t seed, const std::filesystem::path& dir);

/// Loads and re-validates every invariant; errors name the offending record.
Corpus load_dataset(const std::filesystem::path& dir);

/// Throws DatasetError on the first violated invariant.
void validate(const Corpus& corpus);

using Batch = std::vector<std::size_t>;  // indices into Corpus::expressions

/// Grouped batches: expressions that share a (video, target) stay together
/// when the group fits in a batch. Order is a function of (seed, epoch).
std::vector<Batch> batch_iter(const Corpus& corpus, Split split, std::size_t batch_size, std::uint64_t seed,
                              std::size_t epoch);

}  // namespace simtoken::dataset
