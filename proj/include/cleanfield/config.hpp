#pragma once

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"

#include "cleanfield/core.hpp"
#include "cleanfield/field.hpp"
#include "cleanfield/render.hpp"
#include "cleanfield/scenes.hpp"
#include "cleanfield/train.hpp"

namespace cleanfield {

struct RenderSettings {
  int samples = 64;
  friend bool operator==(const RenderSettings&, const RenderSettings&) = default;
};

struct EvalSettings {
  double floater_threshold = 5.0;
  friend bool operator==(const EvalSettings&, const EvalSettings&) = default;
};

/// Everything a run needs. Every key is optional; absent keys keep the
/// defaults below. Sections: scene, dataset, field, train, sh, correction,
/// render, eval, runtime.
struct RunConfig {
  SceneSpec scene = default_scene();
  DatasetParams dataset{};
  FieldSetup field{{64, 64, 64}, float_representable(Bounds{})};
  TrainConfig train{};
  RenderSettings render{};
  EvalSettings eval{};
  unsigned threads = 0;

  RenderOptions render_options() const {
    RenderOptions o;
    o.samples = render.samples;
    o.correction = train.correction;
    o.correction_params = train.correction_params;
    return o;
  }

  friend bool operator==(const RunConfig& a, const RunConfig& b) {
    return a.scene == b.scene && a.dataset == b.dataset && a.field.resolution == b.field.resolution &&
           a.field.bounds == b.field.bounds && a.train == b.train && a.render == b.render && a.eval == b.eval &&
           a.threads == b.threads;
  }
};

namespace config_detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) fail(ErrorKind::config, "'" + where + "' must be an object");
  const std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items()) {
    if (!known.count(k)) fail(ErrorKind::config, "unknown key '" + (where.empty() ? k : where + "." + k) + "'");
  }
}

template <class T>
void read(const json& obj, const char* key, const std::string& where, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::config, "key '" + where + "." + key + "' has the wrong type");
  }
}

inline Vec3 to_vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) fail(ErrorKind::config, "'" + where + "' must be a 3-element array");
  try {
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  } catch (const json::exception&) {
    fail(ErrorKind::config, "'" + where + "' must contain numbers");
  }
}

inline void read_vec3(const json& obj, const char* key, const std::string& where, Vec3& out) {
  if (obj.contains(key)) out = to_vec3(obj.at(key), where + "." + key);
}

inline void read_rgb(const json& obj, const char* key, const std::string& where, Rgb& out) {
  if (!obj.contains(key)) return;
  const Vec3 v = to_vec3(obj.at(key), where + "." + key);
  out = {v.x, v.y, v.z};
}

inline json vec3(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
inline json rgb(const Rgb& c) { return json::array({c.r, c.g, c.b}); }

}  // namespace config_detail

inline nlohmann::json scene_to_json(const SceneSpec& s) {
  using namespace config_detail;
  json spheres = json::array();
  for (const auto& sp : s.spheres) {
    spheres.push_back({{"center", vec3(sp.center)},
                       {"radius", sp.radius},
                       {"albedo", rgb(sp.albedo)},
                       {"specular_strength", sp.specular_strength},
                       {"shininess", sp.shininess}});
  }
  return {{"spheres", spheres},
          {"light_direction", vec3(s.light_direction.vec())},
          {"ambient", s.ambient},
          {"background", rgb(s.background)}};
}

inline SceneSpec scene_from_json(const nlohmann::json& j, SceneSpec s = default_scene()) {
  using namespace config_detail;
  reject_unknown(j, "scene", {"spheres", "light_direction", "ambient", "background"});
  if (j.contains("spheres")) {
    if (!j["spheres"].is_array()) fail(ErrorKind::config, "'scene.spheres' must be an array");
    s.spheres.clear();
    for (std::size_t i = 0; i < j["spheres"].size(); ++i) {
      const json& o = j["spheres"][i];
      const std::string where = "scene.spheres[" + std::to_string(i) + "]";
      reject_unknown(o, where, {"center", "radius", "albedo", "specular_strength", "shininess"});
      Sphere sp;
      read_vec3(o, "center", where, sp.center);
      read(o, "radius", where, sp.radius);
      read_rgb(o, "albedo", where, sp.albedo);
      read(o, "specular_strength", where, sp.specular_strength);
      read(o, "shininess", where, sp.shininess);
      s.spheres.push_back(sp);
    }
  }
  if (j.contains("light_direction")) {
    try {
      s.light_direction = Direction::normalize(to_vec3(j["light_direction"], "scene.light_direction"));
    } catch (const Error& e) {
      fail(ErrorKind::config, std::string("scene.light_direction: ") + e.what());
    }
  }
  read(j, "ambient", "scene", s.ambient);
  read_rgb(j, "background", "scene", s.background);
  try {
    validate_scene(s);
  } catch (const Error& e) {
    fail(ErrorKind::config, std::string("scene: ") + e.what());
  }
  return s;
}

inline nlohmann::json to_json(const RunConfig& c) {
  using namespace config_detail;
  const auto& t = c.train;
  const auto& r = c.field.resolution;
  return {
      {"scene", scene_to_json(c.scene)},
      {"dataset",
       {{"n_views", c.dataset.n_views},
        {"width", c.dataset.width},
        {"height", c.dataset.height},
        {"fov_degrees", c.dataset.fov_degrees},
        {"ring_radius", c.dataset.ring_radius},
        {"elevation_degrees", c.dataset.elevation_degrees},
        {"jitter_degrees", c.dataset.jitter_degrees},
        {"test_stride", c.dataset.test_stride},
        {"seed", c.dataset.seed}}},
      {"field",
       {{"resolution", json::array({r.nx, r.ny, r.nz})},
        {"bounds_min", vec3(c.field.bounds.lo)},
        {"bounds_max", vec3(c.field.bounds.hi)}}},
      {"train",
       {{"iterations", t.iterations},
        {"batch_rays", t.batch_rays},
        {"samples", t.samples},
        {"learning_rate", t.learning_rate},
        {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2},
        {"adam_epsilon", t.adam_epsilon},
        {"lambda_vi", t.lambda_vi},
        {"lambda_vd", t.lambda_vd},
        {"reg_position_fraction", t.reg_position_fraction},
        {"seed", t.seed},
        {"stratified", t.stratified}}},
      {"sh", {{"l_max", t.sh.l_max}, {"split_degree", t.sh.split_degree}, {"directions", t.sh.directions}}},
      {"correction",
       {{"enabled", t.correction},
        {"relative", t.correction_params.relative},
        {"threshold", t.correction_params.threshold},
        {"floor", t.correction_params.floor},
        {"margin", t.correction_params.margin}}},
      {"render", {{"samples", c.render.samples}}},
      {"eval", {{"floater_threshold", c.eval.floater_threshold}}},
      {"runtime", {{"threads", c.threads}}},
  };
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  using namespace config_detail;
  RunConfig c;
  reject_unknown(j, "", {"scene", "dataset", "field", "train", "sh", "correction", "render", "eval", "runtime"});
  if (j.contains("scene")) c.scene = scene_from_json(j["scene"]);
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    reject_unknown(d, "dataset", {"n_views", "width", "height", "fov_degrees", "ring_radius", "elevation_degrees",
                                  "jitter_degrees", "test_stride", "seed"});
    read(d, "n_views", "dataset", c.dataset.n_views);
    read(d, "width", "dataset", c.dataset.width);
    read(d, "height", "dataset", c.dataset.height);
    read(d, "fov_degrees", "dataset", c.dataset.fov_degrees);
    read(d, "ring_radius", "dataset", c.dataset.ring_radius);
    read(d, "elevation_degrees", "dataset", c.dataset.elevation_degrees);
    read(d, "jitter_degrees", "dataset", c.dataset.jitter_degrees);
    read(d, "test_stride", "dataset", c.dataset.test_stride);
    read(d, "seed", "dataset", c.dataset.seed);
  }
  if (j.contains("field")) {
    const json& f = j["field"];
    reject_unknown(f, "field", {"resolution", "bounds_min", "bounds_max"});
    if (f.contains("resolution")) {
      const json& r = f["resolution"];
      if (!r.is_array() || r.size() != 3) fail(ErrorKind::config, "'field.resolution' must be a 3-element array");
      try {
        c.field.resolution = {r[0].get<std::uint32_t>(), r[1].get<std::uint32_t>(), r[2].get<std::uint32_t>()};
      } catch (const json::exception&) {
        fail(ErrorKind::config, "'field.resolution' must contain non-negative integers");
      }
    }
    read_vec3(f, "bounds_min", "field", c.field.bounds.lo);
    read_vec3(f, "bounds_max", "field", c.field.bounds.hi);
    c.field.bounds = float_representable(c.field.bounds);
  }
  auto& t = c.train;
  if (j.contains("train")) {
    const json& o = j["train"];
    reject_unknown(o, "train", {"iterations", "batch_rays", "samples", "learning_rate", "adam_beta1", "adam_beta2",
                                "adam_epsilon", "lambda_vi", "lambda_vd", "reg_position_fraction", "seed",
                                "stratified"});
    read(o, "iterations", "train", t.iterations);
    read(o, "batch_rays", "train", t.batch_rays);
    read(o, "samples", "train", t.samples);
    read(o, "learning_rate", "train", t.learning_rate);
    read(o, "adam_beta1", "train", t.adam_beta1);
    read(o, "adam_beta2", "train", t.adam_beta2);
    read(o, "adam_epsilon", "train", t.adam_epsilon);
    read(o, "lambda_vi", "train", t.lambda_vi);
    read(o, "lambda_vd", "train", t.lambda_vd);
    read(o, "reg_position_fraction", "train", t.reg_position_fraction);
    read(o, "seed", "train", t.seed);
    read(o, "stratified", "train", t.stratified);
  }
  if (j.contains("sh")) {
    const json& o = j["sh"];
    reject_unknown(o, "sh", {"l_max", "split_degree", "directions"});
    read(o, "l_max", "sh", t.sh.l_max);
    read(o, "split_degree", "sh", t.sh.split_degree);
    read(o, "directions", "sh", t.sh.directions);
  }
  if (j.contains("correction")) {
    const json& o = j["correction"];
    reject_unknown(o, "correction", {"enabled", "relative", "threshold", "floor", "margin"});
    read(o, "enabled", "correction", t.correction);
    read(o, "relative", "correction", t.correction_params.relative);
    read(o, "threshold", "correction", t.correction_params.threshold);
    read(o, "floor", "correction", t.correction_params.floor);
    read(o, "margin", "correction", t.correction_params.margin);
  }
  if (j.contains("render")) {
    reject_unknown(j["render"], "render", {"samples"});
    read(j["render"], "samples", "render", c.render.samples);
  }
  if (j.contains("eval")) {
    reject_unknown(j["eval"], "eval", {"floater_threshold"});
    read(j["eval"], "floater_threshold", "eval", c.eval.floater_threshold);
  }
  if (j.contains("runtime")) {
    reject_unknown(j["runtime"], "runtime", {"threads"});
    read(j["runtime"], "threads", "runtime", c.threads);
  }
  try {
    validate_train_config(t);
  } catch (const Error& e) {
    fail(ErrorKind::config, e.what());
  }
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline std::string echo_config(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

}  // namespace cleanfield
