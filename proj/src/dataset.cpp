// Copyright 2026 The SimToken Authors
// SPDX-License-Identifier: Apache-2.0

#include "simtoken/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "simtoken/errors.hpp"
#include "simtoken/random.hpp"
#include "simtoken/tensor_io.hpp"

namespace simtoken::dataset {

using nlohmann::json;

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const E (&all)[N], const char* what) {
  for (E e : all) {
    if (to_string(e) == s) return e;
  }
  throw DatasetError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr Cue kAllCues[] = {Cue::Audio, Cue::Visual, Cue::Motion};

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream is{std::string(text)};
  std::string w;
  while (is >> w) words.push_back(w);
  return words;
}

std::string zero_pad(std::size_t v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

std::pair<int, int> velocity(Motion m) {
  switch (m) {
    case Motion::Static: return {0, 0};
    case Motion::Left: return {-1, 0};
    case Motion::Right: return {1, 0};
    case Motion::Down: return {0, 1};
  }
  return {0, 0};
}

}  // namespace

std::string_view to_string(ShapeClass s) {
  switch (s) {
    case ShapeClass::Square: return "square";
    case ShapeClass::Circle: return "circle";
    case ShapeClass::Triangle: return "triangle";
    case ShapeClass::Cross: return "cross";
  }
  return "?";
}

std::string_view to_string(Color c) {
  switch (c) {
    case Color::Red: return "red";
    case Color::Green: return "green";
    case Color::Blue: return "blue";
    case Color::Yellow: return "yellow";
    case Color::Purple: return "purple";
    case Color::Cyan: return "cyan";
  }
  return "?";
}

std::string_view to_string(Motion m) {
  switch (m) {
    case Motion::Static: return "static";
    case Motion::Left: return "left";
    case Motion::Right: return "right";
    case Motion::Down: return "down";
  }
  return "?";
}

std::string_view to_string(Cue c) {
  switch (c) {
    case Cue::Audio: return "audio-cue";
    case Cue::Visual: return "visual-cue";
    case Cue::Motion: return "motion-cue";
  }
  return "?";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::SeenTest: return "seen-test";
    case Split::UnseenTest: return "unseen-test";
    case Split::NullTest: return "null-test";
  }
  return "?";
}

ShapeClass shape_from_string(std::string_view s) { return parse_enum(s, kAllShapes, "shape class"); }
Color color_from_string(std::string_view s) { return parse_enum(s, kAllColors, "color"); }
Motion motion_from_string(std::string_view s) { return parse_enum(s, kAllMotions, "motion"); }
Cue cue_from_string(std::string_view s) { return parse_enum(s, kAllCues, "cue"); }
Split split_from_string(std::string_view s) { return parse_enum(s, kAllSplits, "split"); }

Rgb rgb(Color c) {
  switch (c) {
    case Color::Red: return {1, 0, 0};
    case Color::Green: return {0, 1, 0};
    case Color::Blue: return {0, 0, 1};
    case Color::Yellow: return {1, 1, 0};
    case Color::Purple: return {1, 0, 1};
    case Color::Cyan: return {0, 1, 1};
  }
  return {0, 0, 0};
}

bool SceneObject::sounds() const { return std::find(sounding_frames.begin(), sounding_frames.end(), true) != sounding_frames.end(); }

std::pair<int, int> SceneObject::origin(std::size_t t) const {
  const auto [dx, dy] = velocity(motion);
  const int step = static_cast<int>(t) * speed;
  return {x + dx * step, y + dy * step};
}

std::vector<std::uint8_t> shape_stencil(ShapeClass shape, int size) {
  std::vector<std::uint8_t> st(static_cast<std::size_t>(size * size), 0);
  const double half = size / 2.0;
  const int thick = size % 2 ? 1 : 2;
  const int lo = (size - thick) / 2;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double cx = c + 0.5 - half, cy = r + 0.5 - half;
      bool on = false;
      switch (shape) {
        case ShapeClass::Square: on = true; break;
        case ShapeClass::Circle: on = cx * cx + cy * cy <= half * half; break;
        case ShapeClass::Triangle: on = std::abs(cx) <= (r + 1) / 2.0; break;
        case ShapeClass::Cross: on = (r >= lo && r < lo + thick) || (c >= lo && c < lo + thick); break;
      }
      st[static_cast<std::size_t>(r * size + c)] = on ? 1 : 0;
    }
  }
  return st;
}

std::vector<std::uint8_t> rasterize(const SceneObject& obj, std::size_t t, std::size_t canvas) {
  std::vector<std::uint8_t> mask(canvas * canvas, 0);
  const std::vector<std::uint8_t> st = shape_stencil(obj.shape, obj.size);
  const auto [ox, oy] = obj.origin(t);
  for (int r = 0; r < obj.size; ++r) {
    for (int c = 0; c < obj.size; ++c) {
      if (!st[static_cast<std::size_t>(r * obj.size + c)]) continue;
      const int py = oy + r, px = ox + c;
      if (py < 0 || px < 0 || py >= static_cast<int>(canvas) || px >= static_cast<int>(canvas)) continue;
      mask[static_cast<std::size_t>(py) * canvas + static_cast<std::size_t>(px)] = 1;
    }
  }
  return mask;
}

const SceneObject* ScenePack::object(int id) const {
  for (const SceneObject& o : objects) {
    if (o.object_id == id) return &o;
  }
  return nullptr;
}

const ScenePack& Corpus::scene(std::string_view video_id) const {
  for (const ScenePack& s : scenes) {
    if (s.video_id == video_id) return s;
  }
  throw DatasetError("unknown video id '" + std::string(video_id) + "'");
}

std::vector<std::size_t> Corpus::split_indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < expressions.size(); ++i) {
    if (expressions[i].split == split) out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config

void DatasetConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("dataset config: " + m); };
  if (frames < 2) fail("frames must be >= 2");
  if (min_objects < 2 || max_objects > 4 || min_objects > max_objects) fail("objects per scene must lie in [2,4]");
  if (object_size < 2) fail("object_size must be >= 2");
  if (speed < 0) fail("speed must be >= 0");
  const int travel = speed * static_cast<int>(frames - 1);
  if (static_cast<int>(size) < object_size + travel + 2) fail("canvas too small for object_size and motion");
  const int cells = static_cast<int>(size) / (object_size + 1);
  if (static_cast<std::size_t>(cells * cells) < max_objects) fail("canvas cannot hold max_objects without overlap");
  std::set<ShapeClass> held(holdout.begin(), holdout.end());
  if (held.size() != holdout.size()) fail("duplicate holdout class");
  if (held.size() >= std::size(kAllShapes)) fail("all shape classes are held out");
  if (std::size(kAllShapes) - held.size() < 2) fail("need at least two seen shape classes");
  if (unseen_test_scenes > 0 && held.empty()) fail("unseen-test scenes need at least one holdout class");
  if (train_scenes == 0) fail("train_scenes must be > 0");
  for (double p : {p_sound, p_share, p_null, p_second_target}) {
    if (!(p >= 0.0 && p <= 1.0)) fail("probabilities must lie in [0,1]");
  }
}

json to_json(const DatasetConfig& c) {
  json holdout = json::array();
  for (ShapeClass s : c.holdout) holdout.push_back(std::string(to_string(s)));
  return json{{"train_scenes", c.train_scenes},
              {"seen_test_scenes", c.seen_test_scenes},
              {"unseen_test_scenes", c.unseen_test_scenes},
              {"null_test_scenes", c.null_test_scenes},
              {"frames", c.frames},
              {"size", c.size},
              {"min_objects", c.min_objects},
              {"max_objects", c.max_objects},
              {"object_size", c.object_size},
              {"speed", c.speed},
              {"holdout", holdout},
              {"p_sound", c.p_sound},
              {"p_share", c.p_share},
              {"p_null", c.p_null},
              {"p_second_target", c.p_second_target}};
}

DatasetConfig dataset_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("dataset config: expected a JSON object");
  static const std::set<std::string> known = {"train_scenes", "seen_test_scenes", "unseen_test_scenes",
                                              "null_test_scenes", "frames", "size", "min_objects", "max_objects",
                                              "object_size", "speed", "holdout", "p_sound", "p_share", "p_null",
                                              "p_second_target"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError("dataset config: unknown field '" + it.key() + "'");
  }
  DatasetConfig c;
  try {
    c.train_scenes = j.value("train_scenes", c.train_scenes);
    c.seen_test_scenes = j.value("seen_test_scenes", c.seen_test_scenes);
    c.unseen_test_scenes = j.value("unseen_test_scenes", c.unseen_test_scenes);
    c.null_test_scenes = j.value("null_test_scenes", c.null_test_scenes);
    c.frames = j.value("frames", c.frames);
    c.size = j.value("size", c.size);
    c.min_objects = j.value("min_objects", c.min_objects);
    c.max_objects = j.value("max_objects", c.max_objects);
    c.object_size = j.value("object_size", c.object_size);
    c.speed = j.value("speed", c.speed);
    c.p_sound = j.value("p_sound", c.p_sound);
    c.p_share = j.value("p_share", c.p_share);
    c.p_null = j.value("p_null", c.p_null);
    c.p_second_target = j.value("p_second_target", c.p_second_target);
    if (j.contains("holdout")) {
      c.holdout.clear();
      for (const auto& s : j.at("holdout")) c.holdout.push_back(shape_from_string(s.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset config: ") + e.what());
  } catch (const DatasetError& e) {
    throw ConfigError(std::string("dataset config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Expression grammar

std::vector<std::string> template_words() {
  std::set<std::string> words = {"the", "shape", "moving", "that", "is", "still", "sounding"};
  for (Color c : kAllColors) words.insert(std::string(to_string(c)));
  for (Motion m : kAllMotions) {
    if (m != Motion::Static) words.insert(std::string(to_string(m)));
  }
  return {words.begin(), words.end()};
}

namespace {

enum class Template { Color, Motion, Still, Sounding, ColorSounding };

struct Parsed {
  Template kind;
  Color color = Color::Red;
  Motion motion = Motion::Static;
};

std::optional<Parsed> parse(std::string_view text) {
  const auto w = split_words(text);
  auto color_of = [](const std::string& s) -> std::optional<Color> {
    for (Color c : kAllColors)
      if (to_string(c) == s) return c;
    return std::nullopt;
  };
  if (w.size() == 3 && w[0] == "the" && w[2] == "shape") {
    if (auto c = color_of(w[1])) return Parsed{Template::Color, *c};
  }
  if (w.size() == 4 && w[0] == "the" && w[1] == "shape" && w[2] == "moving") {
    for (Motion m : kAllMotions)
      if (m != Motion::Static && to_string(m) == w[3]) return Parsed{Template::Motion, Color::Red, m};
  }
  if (w.size() == 5 && w[0] == "the" && w[1] == "shape" && w[2] == "that" && w[3] == "is") {
    if (w[4] == "still") return Parsed{Template::Still, Color::Red, Motion::Static};
    if (w[4] == "sounding") return Parsed{Template::Sounding};
  }
  if (w.size() == 6 && w[0] == "the" && w[2] == "shape" && w[3] == "that" && w[4] == "is" && w[5] == "sounding") {
    if (auto c = color_of(w[1])) return Parsed{Template::ColorSounding, *c};
  }
  return std::nullopt;
}

std::vector<std::string> all_template_texts() {
  std::vector<std::string> out;
  for (Color c : kAllColors) out.push_back("the " + std::string(to_string(c)) + " shape");
  for (Motion m : kAllMotions) {
    if (m != Motion::Static) out.push_back("the shape moving " + std::string(to_string(m)));
  }
  out.push_back("the shape that is still");
  out.push_back("the shape that is sounding");
  for (Color c : kAllColors) out.push_back("the " + std::string(to_string(c)) + " shape that is sounding");
  return out;
}

bool color_shared(const SceneObject& target, const std::vector<SceneObject>& objects) {
  int n = 0;
  for (const SceneObject& o : objects) n += o.color == target.color;
  return n >= 2;
}

}  // namespace

std::vector<int> resolve(std::string_view text, const std::vector<SceneObject>& objects) {
  const auto p = parse(text);
  if (!p) throw DatasetError("expression '" + std::string(text) + "' is outside the template grammar");
  std::vector<int> ids;
  for (const SceneObject& o : objects) {
    bool match = false;
    switch (p->kind) {
      case Template::Color: match = o.color == p->color; break;
      case Template::Motion: match = o.motion == p->motion; break;
      case Template::Still: match = o.motion == Motion::Static; break;
      case Template::Sounding: match = o.sounds(); break;
      case Template::ColorSounding: match = o.color == p->color && o.sounds(); break;
    }
    if (match) ids.push_back(o.object_id);
  }
  return ids;
}

Cue cue_of(std::string_view text) {
  const auto p = parse(text);
  if (!p) throw DatasetError("expression '" + std::string(text) + "' is outside the template grammar");
  switch (p->kind) {
    case Template::Color: return Cue::Visual;
    case Template::Motion:
    case Template::Still: return Cue::Motion;
    case Template::Sounding:
    case Template::ColorSounding: return Cue::Audio;
  }
  return Cue::Visual;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

struct Candidate {
  std::string text;
  Cue cue;
  std::vector<int> matches;
};

std::vector<Candidate> candidates(const std::vector<SceneObject>& objects) {
  std::vector<Candidate> out;
  for (const std::string& text : all_template_texts()) out.push_back({text, cue_of(text), resolve(text, objects)});
  return out;
}

// Valid referring expressions for one object: unique match, and audio cues
// only where another object shares the target's color.
std::vector<const Candidate*> referring(const std::vector<Candidate>& cands, const SceneObject& obj,
                                        const std::vector<SceneObject>& objects) {
  std::vector<const Candidate*> out;
  for (const Candidate& c : cands) {
    if (c.matches.size() != 1 || c.matches[0] != obj.object_id) continue;
    if (c.cue == Cue::Audio && !color_shared(obj, objects)) continue;
    out.push_back(&c);
  }
  return out;
}

bool boxes_clear(const SceneObject& a, const SceneObject& b, std::size_t frames) {
  for (std::size_t t = 0; t < frames; ++t) {
    const auto [ax, ay] = a.origin(t);
    const auto [bx, by] = b.origin(t);
    // one pixel of background between bounding boxes
    const bool apart = ax + a.size + 1 <= bx || bx + b.size + 1 <= ax || ay + a.size + 1 <= by || by + b.size + 1 <= ay;
    if (!apart) return false;
  }
  return true;
}

bool place(SceneObject& obj, const std::vector<SceneObject>& placed, const DatasetConfig& cfg, Rng& rng) {
  const int travel = obj.speed * static_cast<int>(cfg.frames - 1);
  const auto [dx, dy] = velocity(obj.motion);
  const int limit = static_cast<int>(cfg.size) - obj.size;
  const int xmin = dx < 0 ? travel : 0, xmax = dx > 0 ? limit - travel : limit;
  const int ymin = dy < 0 ? travel : 0, ymax = dy > 0 ? limit - travel : limit;
  if (xmax < xmin || ymax < ymin) return false;
  for (int attempt = 0; attempt < 60; ++attempt) {
    obj.x = xmin + static_cast<int>(rng.index(static_cast<std::size_t>(xmax - xmin + 1)));
    obj.y = ymin + static_cast<int>(rng.index(static_cast<std::size_t>(ymax - ymin + 1)));
    bool ok = true;
    for (const SceneObject& o : placed) ok = ok && boxes_clear(obj, o, cfg.frames);
    if (ok) return true;
  }
  return false;
}

template <typename T>
T pick(const std::vector<T>& v, Rng& rng) {
  return v[rng.index(v.size())];
}

std::vector<SceneObject> sample_objects(Split split, const DatasetConfig& cfg, Rng& rng) {
  std::vector<ShapeClass> seen;
  for (ShapeClass s : kAllShapes) {
    if (std::find(cfg.holdout.begin(), cfg.holdout.end(), s) == cfg.holdout.end()) seen.push_back(s);
  }
  const std::vector<ShapeClass> pool =
      split == Split::UnseenTest ? std::vector<ShapeClass>(std::begin(kAllShapes), std::end(kAllShapes)) : seen;
  const std::vector<Color> colors(std::begin(kAllColors), std::end(kAllColors));
  const std::vector<Motion> motions(std::begin(kAllMotions), std::end(kAllMotions));

  const std::size_t n = cfg.min_objects + rng.index(cfg.max_objects - cfg.min_objects + 1);
  const bool share = rng.chance(cfg.p_share);
  std::vector<SceneObject> objs;
  std::set<std::pair<ShapeClass, Color>> used;
  for (std::size_t i = 0; i < n; ++i) {
    SceneObject o;
    o.object_id = static_cast<int>(i);
    o.size = cfg.object_size;
    o.speed = cfg.speed;
    o.sounding_frames.assign(cfg.frames, false);
    for (int attempt = 0; attempt < 100; ++attempt) {
      o.shape = (split == Split::UnseenTest && i == 0) ? pick(cfg.holdout, rng) : pick(pool, rng);
      o.color = (share && i == 1) ? objs[0].color : pick(colors, rng);
      if (!used.count({o.shape, o.color})) break;
    }
    if (used.count({o.shape, o.color})) return {};
    used.insert({o.shape, o.color});
    o.motion = pick(motions, rng);
    objs.push_back(o);
  }

  if (rng.chance(cfg.p_sound)) {
    std::size_t who = rng.index(n);
    if (share && rng.chance(0.75)) who = rng.index(2);
    const std::size_t start = rng.index(cfg.frames - 1);
    const std::size_t len = 2 + rng.index(cfg.frames - start - 1);
    for (std::size_t t = start; t < start + len; ++t) objs[who].sounding_frames[t] = true;
  }

  std::vector<SceneObject> placed;
  for (SceneObject& o : objs) {
    if (!place(o, placed, cfg, rng)) return {};
    placed.push_back(o);
  }
  return placed;
}

void render(ScenePack& scene, const DatasetConfig& cfg, Rng& rng) {
  const std::size_t T = cfg.frames, H = cfg.size;
  std::vector<double> frames(T * 3 * H * H, 0.0);
  std::vector<double> audio(T * kAudioDims, 0.0);
  for (const SceneObject& o : scene.objects) {
    std::vector<double> mask(T * H * H, 0.0);
    const Rgb c = rgb(o.color);
    for (std::size_t t = 0; t < T; ++t) {
      const auto m = rasterize(o, t, H);
      for (std::size_t p = 0; p < H * H; ++p) {
        if (!m[p]) continue;
        mask[t * H * H + p] = 1.0;
        frames[((t * 3 + 0) * H * H) + p] = c.r;
        frames[((t * 3 + 1) * H * H) + p] = c.g;
        frames[((t * 3 + 2) * H * H) + p] = c.b;
      }
      if (o.sounding_frames[t]) audio[t * kAudioDims + static_cast<std::size_t>(o.shape)] = rng.uniform(0.5, 1.0);
    }
    scene.masks.emplace(o.object_id, Tensor({T, H, H}, std::move(mask)));
  }
  for (double& a : audio) a += rng.uniform(-kAudioNoise, kAudioNoise);
  scene.frames = Tensor({T, 3, H, H}, std::move(frames));
  scene.audio = round_to_storage(Tensor({T, kAudioDims}, std::move(audio)));
}

std::vector<const Candidate*> nulls_by_cue(const std::vector<Candidate>& cands, Rng& rng, std::size_t count) {
  std::map<Cue, std::vector<const Candidate*>> by_cue;
  for (const Candidate& c : cands) {
    if (c.matches.empty()) by_cue[c.cue].push_back(&c);
  }
  std::vector<const Candidate*> out;
  std::vector<Cue> cues;
  for (auto& [cue, list] : by_cue) cues.push_back(cue);
  rng.shuffle(cues);
  for (std::size_t i = 0; i < count && i < cues.size(); ++i) out.push_back(pick(by_cue[cues[i]], rng));
  return out;
}

bool make_scene(Split split, const std::string& video_id, const DatasetConfig& cfg, Rng& rng, ScenePack& scene,
                std::vector<ExpressionRecord>& exprs) {
  std::vector<SceneObject> objs = sample_objects(split, cfg, rng);
  if (objs.empty()) return false;
  const std::vector<Candidate> cands = candidates(objs);

  std::vector<std::pair<const SceneObject*, std::vector<const Candidate*>>> chosen;
  if (split != Split::NullTest) {
    const std::size_t need = split == Split::Train ? 2 : 1;
    std::vector<std::pair<const SceneObject*, std::vector<const Candidate*>>> eligible;
    for (const SceneObject& o : objs) {
      if (split == Split::UnseenTest &&
          std::find(cfg.holdout.begin(), cfg.holdout.end(), o.shape) == cfg.holdout.end()) {
        continue;
      }
      auto refs = referring(cands, o, objs);
      if (refs.size() >= need) eligible.emplace_back(&o, std::move(refs));
    }
    if (eligible.empty()) return false;
    // Targets with an audio cue go first so audio expressions stay common.
    std::stable_partition(eligible.begin(), eligible.end(), [](const auto& e) {
      return std::any_of(e.second.begin(), e.second.end(), [](const Candidate* c) { return c->cue == Cue::Audio; });
    });
    const bool has_audio = std::any_of(eligible[0].second.begin(), eligible[0].second.end(),
                                       [](const Candidate* c) { return c->cue == Cue::Audio; });
    std::size_t first = has_audio ? 0 : rng.index(eligible.size());
    chosen.push_back(eligible[first]);
    eligible.erase(eligible.begin() + static_cast<std::ptrdiff_t>(first));
    if (!eligible.empty() && rng.chance(cfg.p_second_target)) chosen.push_back(eligible[rng.index(eligible.size())]);
  }

  std::vector<const Candidate*> nulls;
  if (split == Split::NullTest) {
    nulls = nulls_by_cue(cands, rng, 1 + rng.index(2));
    if (nulls.empty()) return false;
  } else if (split == Split::Train && rng.chance(cfg.p_null)) {
    nulls = nulls_by_cue(cands, rng, 1);
  }

  scene = ScenePack{};
  scene.video_id = video_id;
  scene.split = split;
  scene.objects = std::move(objs);
  render(scene, cfg, rng);

  std::size_t k = 0;
  exprs.clear();
  for (const auto& [obj, refs] : chosen) {
    for (const Candidate* c : refs) {
      exprs.push_back({video_id + "_e" + std::to_string(k++), video_id, c->text, obj->object_id, c->cue, split});
    }
  }
  for (const Candidate* c : nulls) {
    exprs.push_back({video_id + "_e" + std::to_string(k++), video_id, c->text, std::nullopt, c->cue, split});
  }
  return true;
}

std::string split_prefix(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::SeenTest: return "seen";
    case Split::UnseenTest: return "unseen";
    case Split::NullTest: return "null";
  }
  return "x";
}

}  // namespace

Corpus generate(const DatasetConfig& config, std::uint64_t seed) {
  config.validate();
  Corpus corpus;
  corpus.manifest.seed = seed;
  corpus.manifest.config = config;
  corpus.manifest.holdout = config.holdout;
  const std::pair<Split, std::size_t> plan[] = {{Split::Train, config.train_scenes},
                                                {Split::SeenTest, config.seen_test_scenes},
                                                {Split::UnseenTest, config.unseen_test_scenes},
                                                {Split::NullTest, config.null_test_scenes}};
  std::uint64_t global = 0;
  for (const auto& [split, count] : plan) {
    for (std::size_t i = 0; i < count; ++i, ++global) {
      Rng rng(derive_seed(seed, global));
      const std::string id = split_prefix(split) + "_" + zero_pad(i, 4);
      ScenePack scene;
      std::vector<ExpressionRecord> exprs;
      bool ok = false;
      for (int attempt = 0; attempt < 1000 && !ok; ++attempt) ok = make_scene(split, id, config, rng, scene, exprs);
      if (!ok) throw ConfigError("dataset config: could not build scene " + id + " after 1000 attempts");
      corpus.manifest.scene_ids.push_back(id);
      for (const ExpressionRecord& e : exprs) corpus.manifest.expression_splits.emplace(e.expression_id, e.split);
      corpus.scenes.push_back(std::move(scene));
      corpus.expressions.insert(corpus.expressions.end(), exprs.begin(), exprs.end());
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json object_json(const SceneObject& o) {
  json frames = json::array();
  for (bool b : o.sounding_frames) frames.push_back(b);
  return json{{"object_id", o.object_id},
              {"shape_class", std::string(to_string(o.shape))},
              {"color", std::string(to_string(o.color))},
              {"motion", std::string(to_string(o.motion))},
              {"x", o.x},
              {"y", o.y},
              {"size", o.size},
              {"speed", o.speed},
              {"sounding_frames", frames}};
}

SceneObject object_from_json(const json& j) {
  SceneObject o;
  o.object_id = j.at("object_id").get<int>();
  o.shape = shape_from_string(j.at("shape_class").get<std::string>());
  o.color = color_from_string(j.at("color").get<std::string>());
  o.motion = motion_from_string(j.at("motion").get<std::string>());
  o.x = j.at("x").get<int>();
  o.y = j.at("y").get<int>();
  o.size = j.at("size").get<int>();
  o.speed = j.at("speed").get<int>();
  for (const auto& b : j.at("sounding_frames")) o.sounding_frames.push_back(b.get<bool>());
  return o;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DatasetError("cannot write " + path.string());
  os << text;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("missing file " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }
}

}  // namespace

void save(const Corpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "scenes");
  json holdout = json::array();
  for (ShapeClass s : corpus.manifest.holdout) holdout.push_back(std::string(to_string(s)));
  json splits = json::object();
  for (const auto& [id, s] : corpus.manifest.expression_splits) splits[id] = std::string(to_string(s));
  json manifest{{"dataset_version", corpus.manifest.version},
                {"generator_seed", corpus.manifest.seed},
                {"config", to_json(corpus.manifest.config)},
                {"holdout_classes", holdout},
                {"scenes", corpus.manifest.scene_ids},
                {"splits", splits}};
  json scene_splits = json::object();
  for (const ScenePack& s : corpus.scenes) scene_splits[s.video_id] = std::string(to_string(s.split));
  manifest["scene_splits"] = scene_splits;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  json exprs = json::array();
  for (const ExpressionRecord& e : corpus.expressions) {
    exprs.push_back(json{{"expression_id", e.expression_id},
                         {"video_id", e.video_id},
                         {"text", e.text},
                         {"target_object_id", e.target_object_id ? json(*e.target_object_id) : json(nullptr)},
                         {"cue_modality", std::string(to_string(e.cue))}});
  }
  write_text(dir / "expressions.json", exprs.dump(2) + "\n");

  for (const ScenePack& s : corpus.scenes) {
    const fs::path sd = dir / "scenes" / s.video_id;
    fs::create_directories(sd);
    json objs = json::array();
    for (const SceneObject& o : s.objects) objs.push_back(object_json(o));
    write_text(sd / "scene.json", json{{"video_id", s.video_id}, {"objects", objs}}.dump(2) + "\n");
    save_tensor(sd / "frames.stk", s.frames);
    save_tensor(sd / "audio.stk", s.audio);
    for (const auto& [id, m] : s.masks) save_tensor(sd / ("mask_" + std::to_string(id) + ".stk"), m);
  }
}

Corpus generate_dataset(const DatasetConfig& config, std::uint64_t seed, const std::filesystem::path& dir) {
  Corpus corpus = generate(config, seed);
  save(corpus, dir);
  return corpus;
}

Corpus load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const json manifest = read_json(dir / "manifest.json");
  Corpus corpus;
  try {
    corpus.manifest.version = manifest.at("dataset_version").get<int>();
    if (corpus.manifest.version != kDatasetVersion) {
      throw DatasetError("manifest.json: unsupported dataset_version " + std::to_string(corpus.manifest.version));
    }
    corpus.manifest.seed = manifest.at("generator_seed").get<std::uint64_t>();
    corpus.manifest.config = dataset_config_from_json(manifest.at("config"));
    for (const auto& s : manifest.at("holdout_classes")) {
      corpus.manifest.holdout.push_back(shape_from_string(s.get<std::string>()));
    }
    corpus.manifest.scene_ids = manifest.at("scenes").get<std::vector<std::string>>();
    for (auto it = manifest.at("splits").begin(); it != manifest.at("splits").end(); ++it) {
      corpus.manifest.expression_splits.emplace(it.key(), split_from_string(it.value().get<std::string>()));
    }
    const json& scene_splits = manifest.at("scene_splits");
    for (const std::string& id : corpus.manifest.scene_ids) {
      const fs::path sd = dir / "scenes" / id;
      const json sj = read_json(sd / "scene.json");
      ScenePack s;
      s.video_id = id;
      if (!scene_splits.contains(id)) throw DatasetError("scene " + id + ": no split in manifest");
      s.split = split_from_string(scene_splits.at(id).get<std::string>());
      for (const auto& oj : sj.at("objects")) s.objects.push_back(object_from_json(oj));
      s.frames = load_tensor(sd / "frames.stk");
      s.audio = load_tensor(sd / "audio.stk");
      for (const SceneObject& o : s.objects) {
        s.masks.emplace(o.object_id, load_tensor(sd / ("mask_" + std::to_string(o.object_id) + ".stk")));
      }
      corpus.scenes.push_back(std::move(s));
    }
    const json exprs = read_json(dir / "expressions.json");
    for (const auto& ej : exprs) {
      ExpressionRecord e;
      e.expression_id = ej.at("expression_id").get<std::string>();
      e.video_id = ej.at("video_id").get<std::string>();
      e.text = ej.at("text").get<std::string>();
      if (!ej.at("target_object_id").is_null()) e.target_object_id = ej.at("target_object_id").get<int>();
      e.cue = cue_from_string(ej.at("cue_modality").get<std::string>());
      auto it = corpus.manifest.expression_splits.find(e.expression_id);
      if (it == corpus.manifest.expression_splits.end()) {
        throw DatasetError("expression " + e.expression_id + ": no split assignment in manifest");
      }
      e.split = it->second;
      corpus.expressions.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw DatasetError("malformed dataset record: " + std::string(e.what()));
  } catch (const FormatError& e) {
    throw DatasetError(e.what());
  }
  validate(corpus);
  return corpus;
}

// ---------------------------------------------------------------------------
// Validation

void validate(const Corpus& corpus) {
  const Manifest& m = corpus.manifest;
  const DatasetConfig& cfg = m.config;
  const std::size_t T = cfg.frames, H = cfg.size;
  auto held = [&](ShapeClass s) { return std::find(m.holdout.begin(), m.holdout.end(), s) != m.holdout.end(); };

  for (const ScenePack& s : corpus.scenes) {
    const std::string who = "scene " + s.video_id + ": ";
    if (T < 2) throw DatasetError(who + "fewer than two frames");
    if (s.frames.shape() != Shape{T, 3, H, H}) throw DatasetError(who + "frames shape " + shape_string(s.frames.shape()));
    if (s.audio.shape() != Shape{T, kAudioDims}) throw DatasetError(who + "audio shape " + shape_string(s.audio.shape()));
    std::set<std::pair<ShapeClass, Color>> pairs;
    std::vector<double> frames(T * 3 * H * H, 0.0);
    for (const SceneObject& o : s.objects) {
      const std::string ow = who + "object " + std::to_string(o.object_id) + ": ";
      if (!pairs.insert({o.shape, o.color}).second) throw DatasetError(ow + "duplicate (shape_class, color) pair");
      if (o.sounding_frames.size() != T) throw DatasetError(ow + "sounding_frames length mismatch");
      for (std::size_t t = 0; t < T; ++t) {
        const auto [ox, oy] = o.origin(t);
        if (ox < 0 || oy < 0 || ox + o.size > static_cast<int>(H) || oy + o.size > static_cast<int>(H)) {
          throw DatasetError(ow + "leaves the canvas at frame " + std::to_string(t));
        }
      }
      if (s.split == Split::Train && held(o.shape)) {
        throw DatasetError(ow + "held-out class " + std::string(to_string(o.shape)) + " in a train scene");
      }
      auto mit = s.masks.find(o.object_id);
      if (mit == s.masks.end()) throw DatasetError(ow + "missing mask");
      const Tensor& mask = mit->second;
      if (mask.shape() != Shape{T, H, H}) throw DatasetError(ow + "mask shape " + shape_string(mask.shape()));
      const Rgb c = rgb(o.color);
      for (std::size_t t = 0; t < T; ++t) {
        const auto r = rasterize(o, t, H);
        for (std::size_t p = 0; p < H * H; ++p) {
          const double mv = mask[t * H * H + p];
          if (mv != 0.0 && mv != 1.0) throw DatasetError(ow + "non-binary mask value");
          if (mv != static_cast<double>(r[p])) {
            throw DatasetError(ow + "mask disagrees with re-rendered object at frame " + std::to_string(t));
          }
          if (r[p]) {
            frames[(t * 3 + 0) * H * H + p] = c.r;
            frames[(t * 3 + 1) * H * H + p] = c.g;
            frames[(t * 3 + 2) * H * H + p] = c.b;
          }
        }
        if (o.sounding_frames[t] && s.audio[t * kAudioDims + static_cast<std::size_t>(o.shape)] < 0.5 - kAudioNoise) {
          throw DatasetError(ow + "sounding frame " + std::to_string(t) + " has a weak class coordinate");
        }
      }
    }
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (frames[i] != s.frames[i]) throw DatasetError(who + "frames disagree with re-rendered objects");
    }
  }

  std::set<std::string> scene_ids;
  for (const ScenePack& s : corpus.scenes) scene_ids.insert(s.video_id);
  std::map<std::pair<std::string, int>, std::size_t> train_counts;
  std::set<std::string> seen_ids;
  for (const ExpressionRecord& e : corpus.expressions) {
    const std::string who = "expression " + e.expression_id + ": ";
    if (!seen_ids.insert(e.expression_id).second) throw DatasetError(who + "duplicate id");
    if (!scene_ids.count(e.video_id)) throw DatasetError(who + "dangling video_id " + e.video_id);
    const ScenePack& s = corpus.scene(e.video_id);
    if (s.split != e.split) throw DatasetError(who + "split inconsistent with its scene");
    std::vector<int> matches;
    try {
      matches = resolve(e.text, s.objects);
      if (cue_of(e.text) != e.cue) throw DatasetError("cue_modality does not match the text");
    } catch (const DatasetError& err) {
      throw DatasetError(who + err.what());
    }
    if (e.target_object_id) {
      const SceneObject* o = s.object(*e.target_object_id);
      if (!o) throw DatasetError(who + "dangling object_id " + std::to_string(*e.target_object_id));
      if (matches.size() != 1 || matches[0] != o->object_id) {
        throw DatasetError(who + "text does not resolve to exactly its target");
      }
      if (e.cue == Cue::Audio && !color_shared(*o, s.objects)) {
        throw DatasetError(who + "audio-cue target identifiable from color alone");
      }
      if (e.split == Split::UnseenTest && !held(o->shape)) {
        throw DatasetError(who + "unseen-test target has seen class " + std::string(to_string(o->shape)));
      }
      if ((e.split == Split::SeenTest || e.split == Split::Train) && held(o->shape)) {
        throw DatasetError(who + "held-out class target outside the unseen split");
      }
      if (e.split == Split::NullTest) throw DatasetError(who + "null-test expression with a target");
      if (e.split == Split::Train) ++train_counts[{e.video_id, o->object_id}];
    } else if (!matches.empty()) {
      throw DatasetError(who + "null expression matches an object in the scene");
    }
  }
  for (const auto& [key, n] : train_counts) {
    if (n < 2) {
      throw DatasetError("train target " + key.first + "/" + std::to_string(key.second) +
                         " has fewer than two expressions");
    }
  }
}

// ---------------------------------------------------------------------------
// Batching

std::vector<Batch> batch_iter(const Corpus& corpus, Split split, std::size_t batch_size, std::uint64_t seed,
                              std::size_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_iter: batch_size must be positive");
  if (split == Split::Train && batch_size < 2) throw ConfigError("batch_iter: train batches need batch_size >= 2");

  std::vector<std::vector<std::size_t>> groups;
  std::map<std::pair<std::string, int>, std::size_t> group_of;
  for (std::size_t i : corpus.split_indices(split)) {
    const ExpressionRecord& e = corpus.expressions[i];
    if (!e.target_object_id) {
      groups.push_back({i});
      continue;
    }
    auto [it, fresh] = group_of.emplace(std::pair{e.video_id, *e.target_object_id}, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }

  Rng rng(derive_seed(seed, 0x5eed0000ULL + epoch));
  rng.shuffle(groups);

  std::vector<std::vector<std::size_t>> chunks;
  for (auto& g : groups) {
    if (g.size() <= batch_size) {
      chunks.push_back(std::move(g));
      continue;
    }
    const std::size_t parts = (g.size() + batch_size - 1) / batch_size;
    std::size_t begin = 0;
    for (std::size_t p = 0; p < parts; ++p) {
      const std::size_t len = g.size() / parts + (p < g.size() % parts ? 1 : 0);
      chunks.emplace_back(g.begin() + static_cast<std::ptrdiff_t>(begin),
                          g.begin() + static_cast<std::ptrdiff_t>(begin + len));
      // Only reachable for batch_size < 4: reuse a member so the chunk still
      // carries a positive pair.
      if (len == 1) chunks.back().push_back(g[begin == 0 ? 1 : 0]);
      begin += len;
    }
  }

  std::vector<Batch> batches;
  Batch current;
  for (const auto& c : chunks) {
    if (current.size() + c.size() > batch_size) {
      batches.push_back(std::move(current));
      current.clear();
    }
    current.insert(current.end(), c.begin(), c.end());
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

}  // namespace simtoken::dataset
