#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cleanfield/camera.hpp"
#include "cleanfield/core.hpp"
#include "cleanfield/field.hpp"
#include "cleanfield/image.hpp"
#include "cleanfield/parallel.hpp"
#include "cleanfield/render.hpp"

namespace cleanfield {

struct Sphere {
  Vec3 center;
  double radius = 0.5;
  Rgb albedo{0.5, 0.5, 0.5};
  double specular_strength = 0.0;
  double shininess = 1.0;

  friend bool operator==(const Sphere&, const Sphere&) = default;
};

/// Spheres under a fixed directional light. Shading at a hit point is
///   ambient·albedo + max(0, n·l)·albedo + specular·max(0, r·(−d))^shininess
/// with r the mirror of the light direction about the normal.
struct SceneSpec {
  std::vector<Sphere> spheres;
  Direction light_direction = Direction::normalize({0.4, 1.0, 0.3});
  double ambient = 0.1;
  Rgb background{0.0, 0.0, 0.0};

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

inline constexpr double kSolidDensity = 50.0;

/// Three non-overlapping spheres inside [-1,1]³, all sharing one Phong lobe.
inline SceneSpec default_scene(double specular_strength = 0.8, double shininess = 64.0) {
  SceneSpec s;
  s.spheres = {
      {{-0.25, 0.0, 0.0}, 0.5, {0.6, 0.25, 0.15}, specular_strength, shininess},
      {{0.55, 0.1, 0.4}, 0.25, {0.15, 0.35, 0.6}, specular_strength, shininess},
      {{0.4, -0.25, -0.6}, 0.3, {0.2, 0.5, 0.2}, specular_strength, shininess},
  };
  return s;
}

inline void validate_scene(const SceneSpec& spec) {
  if (!(spec.ambient >= 0.0 && spec.ambient <= 1.0)) fail(ErrorKind::invalid_input, "ambient must lie in [0,1]");
  for (std::size_t i = 0; i < spec.spheres.size(); ++i) {
    const Sphere& a = spec.spheres[i];
    if (!(a.radius > 0.0)) fail(ErrorKind::invalid_input, "sphere " + std::to_string(i) + " has non-positive radius");
    if (!(a.specular_strength >= 0.0)) fail(ErrorKind::invalid_input, "specular strength must be >= 0");
    if (!(a.shininess >= 1.0)) fail(ErrorKind::invalid_input, "shininess must be >= 1");
    for (std::size_t j = i + 1; j < spec.spheres.size(); ++j) {
      const Sphere& b = spec.spheres[j];
      if (!(norm(a.center - b.center) > a.radius + b.radius)) {
        fail(ErrorKind::invalid_input,
             "spheres " + std::to_string(i) + " and " + std::to_string(j) + " overlap");
      }
    }
  }
}

struct SphereHit {
  double t = 0.0;
  std::size_t sphere = 0;
};

/// Closest t >= 0 where the ray enters sphere s, if any.
inline std::optional<double> intersect_sphere(const Sphere& s, const Vec3& origin, const Direction& d) {
  const Vec3 oc = origin - s.center;
  const double b = dot(oc, d.vec());
  const double c = dot(oc, oc) - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc <= 0.0) return std::nullopt;
  const double root = std::sqrt(disc);
  const double t0 = -b - root;
  const double t1 = -b + root;
  if (t0 >= 0.0) return t0;
  if (t1 >= 0.0) return t1;
  return std::nullopt;
}

/// Chord [enter, exit] of a ray through a sphere (may start behind the origin).
inline std::optional<std::pair<double, double>> sphere_chord(const Sphere& s, const Vec3& origin,
                                                             const Direction& d) {
  const Vec3 oc = origin - s.center;
  const double b = dot(oc, d.vec());
  const double c = dot(oc, oc) - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc <= 0.0) return std::nullopt;
  const double root = std::sqrt(disc);
  return std::make_pair(-b - root, -b + root);
}

class SceneOracle {
 public:
  explicit SceneOracle(SceneSpec spec) : spec_(std::move(spec)) { validate_scene(spec_); }

  const SceneSpec& spec() const { return spec_; }

  std::optional<SphereHit> intersect(const Vec3& origin, const Direction& d) const {
    std::optional<SphereHit> best;
    for (std::size_t i = 0; i < spec_.spheres.size(); ++i) {
      if (auto t = intersect_sphere(spec_.spheres[i], origin, d); t && (!best || *t < best->t)) {
        best = SphereHit{*t, i};
      }
    }
    return best;
  }

  /// Color of sphere `index` at surface point p seen along view direction d.
  Rgb shade(std::size_t index, const Vec3& p, const Direction& d) const {
    const Sphere& s = spec_.spheres[index];
    const Vec3 n = (p - s.center) * (1.0 / s.radius);
    const Vec3& l = spec_.light_direction.vec();
    const double n_dot_l = dot(n, l);
    const Vec3 r = n * (2.0 * n_dot_l) - l;
    Rgb c = s.albedo * (spec_.ambient + std::max(0.0, n_dot_l));
    const double spec = s.specular_strength * std::pow(std::max(0.0, dot(r, -d.vec())), s.shininess);
    c += Rgb{spec, spec, spec};
    return c;
  }

  /// Specular term alone; used to locate glints.
  double specular(std::size_t index, const Vec3& p, const Direction& d) const {
    const Sphere& s = spec_.spheres[index];
    const Vec3 n = (p - s.center) * (1.0 / s.radius);
    const Vec3& l = spec_.light_direction.vec();
    const Vec3 r = n * (2.0 * dot(n, l)) - l;
    return s.specular_strength * std::pow(std::max(0.0, dot(r, -d.vec())), s.shininess);
  }

  Rgb trace(const Vec3& origin, const Direction& d) const {
    const auto hit = intersect(origin, d);
    if (!hit) return spec_.background;
    return shade(hit->sphere, origin + d.vec() * hit->t, d);
  }

  bool inside_any(const Vec3& p, double dilation = 0.0) const {
    for (const auto& s : spec_.spheres) {
      if (norm(p - s.center) < s.radius + dilation) return true;
    }
    return false;
  }

  Vec3 centroid() const {
    Vec3 c;
    if (spec_.spheres.empty()) return c;
    for (const auto& s : spec_.spheres) c += s.center;
    return c * (1.0 / static_cast<double>(spec_.spheres.size()));
  }

 private:
  SceneSpec spec_;
};

inline SceneOracle generate_scene(const SceneSpec& spec) { return SceneOracle(spec); }

inline Image oracle_render(const SceneOracle& scene, const CameraPose& cam) {
  validate_camera(cam);
  std::vector<Rgb> px(std::size_t{cam.width} * cam.height);
  parallel_for(px.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto [o, d] = cam.pixel_ray(static_cast<double>(i % cam.width), static_cast<double>(i / cam.width));
      px[i] = scene.trace(o, d);
    }
  });
  return Image(cam.width, cam.height, std::move(px));
}

/// Ideal density along a ray: σ_solid inside any sphere, zero elsewhere,
/// sampled at the unstratified bin centers.
inline DensityProfile oracle_density(const SceneOracle& scene, const Ray& ray, int samples,
                                     double sigma_solid = kSolidDensity) {
  DensityProfile p = sample_ray(ray, samples, false, 0);
  for (std::size_t k = 0; k < p.size(); ++k) {
    p.sigma[k] = scene.inside_any(ray.origin + ray.direction.vec() * p.t[k]) ? sigma_solid : 0.0;
  }
  return p;
}

/// Writes σ_solid into every voxel whose center lies inside a sphere and
/// zero elsewhere (as raw density).
template <class Real>
void rasterize_density(VoxelField<Real>& field, const SceneOracle& scene, double sigma_solid = kSolidDensity) {
  for (std::size_t v = 0; v < field.voxel_count(); ++v) {
    field.density_raw(v) = Real(scene.inside_any(field.voxel_center(v)) ? sigma_solid : 0.0);
  }
}

struct DatasetParams {
  std::uint32_t n_views = 25;
  std::uint32_t width = 64;
  std::uint32_t height = 64;
  double fov_degrees = 45.0;
  double ring_radius = 3.0;
  double elevation_degrees = 25.0;
  double jitter_degrees = 3.0;
  std::uint32_t test_stride = 5;
  std::uint64_t seed = 0;

  friend bool operator==(const DatasetParams&, const DatasetParams&) = default;
};

struct View {
  CameraPose camera;
  Image image;
  bool train = true;
};

struct Dataset {
  std::vector<View> views;
  std::optional<SceneSpec> scene;

  std::vector<std::size_t> split(bool train) const {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < views.size(); ++i) {
      if (views[i].train == train) ids.push_back(i);
    }
    return ids;
  }
};

/// Ring poses around the scene centroid at the given azimuths. Every
/// test_stride-th view (indices stride-1, 2·stride-1, ...) is held out.
inline std::vector<CameraPose> ring_poses(const SceneOracle& scene, const DatasetParams& params) {
  if (params.n_views < 2) fail(ErrorKind::invalid_input, "a dataset needs at least 2 views");
  if (params.width == 0 || params.height == 0) fail(ErrorKind::invalid_input, "image resolution must be non-zero");
  if (!(params.fov_degrees > 0.0 && params.fov_degrees < 180.0)) fail(ErrorKind::invalid_input, "fov must lie in (0, 180)");
  if (!(params.ring_radius > 0.0)) fail(ErrorKind::invalid_input, "ring radius must be positive");
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  const Vec3 target = scene.centroid();
  const double focal = 0.5 * params.width / std::tan(0.5 * params.fov_degrees * kPi / 180.0);
  std::vector<CameraPose> poses;
  for (std::uint32_t i = 0; i < params.n_views; ++i) {
    const double az = 2.0 * kPi * i / params.n_views;
    const double el = (params.elevation_degrees + params.jitter_degrees * jitter(rng)) * kPi / 180.0;
    const Vec3 offset{std::cos(el) * std::cos(az), std::sin(el), std::cos(el) * std::sin(az)};
    poses.push_back(look_at(target + offset * params.ring_radius, target, {0.0, 1.0, 0.0}, params.width,
                            params.height, focal));
  }
  return poses;
}

inline Dataset make_dataset(const SceneOracle& scene, const DatasetParams& params) {
  Dataset ds;
  ds.scene = scene.spec();
  const auto poses = ring_poses(scene, params);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const bool test = params.test_stride > 0 && (i % params.test_stride) == params.test_stride - 1;
    ds.views.push_back({poses[i], oracle_render(scene, poses[i]), !test});
  }
  return ds;
}

}  // namespace cleanfield
