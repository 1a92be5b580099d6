#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cleanfield/camera.hpp"
#include "cleanfield/core.hpp"
#include "cleanfield/field.hpp"
#include "cleanfield/image.hpp"
#include "cleanfield/parallel.hpp"
#include "cleanfield/sh.hpp"

namespace cleanfield {

struct Ray {
  Vec3 origin;
  Direction direction;
  double near = 0.0;
  double far = 1.0;
};

inline void validate_ray(const Ray& ray) {
  if (!(ray.near >= 0.0 && ray.near < ray.far) || !std::isfinite(ray.far)) {
    fail(ErrorKind::invalid_input, "ray interval must satisfy 0 <= near < far");
  }
}

/// Samples along one ray: depths, densities, and step sizes.
struct DensityProfile {
  std::vector<double> t;
  std::vector<double> sigma;
  std::vector<double> delta;

  std::size_t size() const { return t.size(); }
  friend bool operator==(const DensityProfile&, const DensityProfile&) = default;
};

/// K depths in [near, far]: bin centers, or one uniform draw per bin when
/// stratified. Steps are t[k+1]-t[k]; the last step is the bin width.
/// `stream` selects an independent random stream (e.g. the pixel index).
inline DensityProfile sample_ray(const Ray& ray, int samples, bool stratified, std::uint64_t seed,
                                 std::uint64_t stream = 0) {
  if (samples < 2) fail(ErrorKind::invalid_input, "need at least 2 samples per ray");
  validate_ray(ray);
  const std::size_t k_count = static_cast<std::size_t>(samples);
  const double width = (ray.far - ray.near) / static_cast<double>(k_count);
  DensityProfile p;
  p.t.resize(k_count);
  p.sigma.assign(k_count, 0.0);
  p.delta.resize(k_count);
  const std::uint64_t base = mix_seed(seed ^ mix_seed(stream));
  for (std::size_t k = 0; k < k_count; ++k) {
    const double u = stratified ? unit_from_bits(mix_seed(base + k)) : 0.5;
    p.t[k] = ray.near + (static_cast<double>(k) + u) * width;
  }
  for (std::size_t k = 0; k + 1 < k_count; ++k) p.delta[k] = p.t[k + 1] - p.t[k];
  p.delta[k_count - 1] = width;
  return p;
}

struct CorrectionParams {
  double threshold = 0.1;   // absolute density, or fraction of the profile max
  double floor = 1e-3;      // lower bound on the relative threshold
  int margin = 2;           // samples kept on either side of the window
  bool relative = true;

  friend bool operator==(const CorrectionParams&, const CorrectionParams&) = default;
};

inline void validate_correction(const CorrectionParams& p) {
  if (p.margin < 0) fail(ErrorKind::invalid_input, "correction margin must be >= 0");
  if (p.relative) {
    if (!(p.threshold > 0.0 && p.threshold <= 1.0)) {
      fail(ErrorKind::invalid_input, "relative correction threshold must lie in (0, 1]");
    }
  } else if (!(p.threshold > 0.0)) {
    fail(ErrorKind::invalid_input, "absolute correction threshold must be > 0");
  }
}

inline double effective_threshold(std::span<const double> sigma, const CorrectionParams& p) {
  if (!p.relative) return p.threshold;
  double peak = 0.0;
  for (double s : sigma) peak = std::max(peak, s);
  return std::max(p.threshold * peak, p.floor);
}

/// Inclusive index window [first, last] kept by the geometry correction, or
/// nullopt if no sample exceeds the threshold.
struct KeepWindow {
  std::size_t first = 0;
  std::size_t last = 0;
};

inline std::optional<KeepWindow> correction_window(std::span<const double> sigma, const CorrectionParams& p) {
  const double thres = effective_threshold(sigma, p);
  const std::size_t k_count = sigma.size();
  std::size_t front = k_count;
  for (std::size_t k = 0; k < k_count; ++k) {
    if (sigma[k] > thres) {
      front = k;
      break;
    }
  }
  if (front == k_count) return std::nullopt;
  std::size_t back = front;
  for (std::size_t k = k_count; k-- > 0;) {
    if (sigma[k] > thres) {
      back = k;
      break;
    }
  }
  const std::size_t m = static_cast<std::size_t>(p.margin);
  return KeepWindow{front > m ? front - m : 0, std::min(k_count - 1, back + m)};
}

/// Zeroes density before the first and after the last salient sample (with
/// a margin); depths and steps are untouched.
inline DensityProfile correct_density(const DensityProfile& profile, const CorrectionParams& params) {
  DensityProfile out = profile;
  const auto window = correction_window(profile.sigma, params);
  if (!window) return out;
  for (std::size_t k = 0; k < out.sigma.size(); ++k) {
    if (k < window->first || k > window->last) out.sigma[k] = 0.0;
  }
  return out;
}

struct CompositeResult {
  Rgb color;
  std::vector<double> weights;
  std::vector<double> transmittance;
};

/// Quadrature of the volume rendering integral with alpha = 1 - exp(-σδ).
inline CompositeResult composite(std::span<const double> sigma, std::span<const Rgb> colors,
                                 std::span<const double> delta) {
  if (sigma.size() != colors.size() || sigma.size() != delta.size()) {
    fail(ErrorKind::invalid_input, "composite inputs differ in length");
  }
  CompositeResult r;
  r.weights.resize(sigma.size());
  r.transmittance.resize(sigma.size());
  double optical_depth = 0.0;
  for (std::size_t k = 0; k < sigma.size(); ++k) {
    if (!(sigma[k] >= 0.0) || !(delta[k] >= 0.0)) {
      fail(ErrorKind::invalid_input, "composite needs non-negative densities and steps");
    }
    const double tau = sigma[k] * delta[k];
    const double trans = std::exp(-optical_depth);
    const double w = trans * -std::expm1(-tau);
    r.transmittance[k] = trans;
    r.weights[k] = w;
    r.color += colors[k] * w;
    optical_depth += tau;
  }
  return r;
}

enum class RenderMode { full, vi_only, initial };

struct RenderOptions {
  int samples = 64;
  bool stratified = false;
  std::uint64_t seed = 0;
  bool correction = true;
  CorrectionParams correction_params{};
  RenderMode mode = RenderMode::full;
};

/// Initial (Ĉ₀) and final (Ĉ) estimates for one ray; weights and
/// transmittance belong to the final pass.
struct PixelEstimate {
  Rgb c_initial;
  Rgb c_final;
  std::vector<double> weights;
  std::vector<double> transmittance;
};

template <class Real>
PixelEstimate render_ray(const VoxelField<Real>& field, const Ray& ray, const RenderOptions& opts,
                         std::uint64_t stream = 0) {
  DensityProfile profile = sample_ray(ray, opts.samples, opts.stratified, opts.seed, stream);
  const std::size_t k_count = profile.size();
  std::array<double, sh_count(kMaxShDegree)> basis{};
  const Direction& d = ray.direction;
  eval_sh_unchecked(d.x(), d.y(), d.z(), field.sh_layout().l_max, basis.data());
  std::vector<double> raw(field.channels());
  std::vector<Rgb> c0(k_count), c_out(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    const Vec3 p = ray.origin + d.vec() * profile.t[k];
    const CellStencil s = make_stencil(field, p);
    if (!s.inside) continue;
    interpolate_all(field, s, raw.data());
    const RadianceSample r = activate(raw.data(), field.layout(), basis.data(), field.sh_layout().low_count());
    profile.sigma[k] = r.sigma0;
    c0[k] = r.c0;
    c_out[k] = opts.mode == RenderMode::vi_only ? r.c_vi : (opts.mode == RenderMode::initial ? r.c0 : r.c_final);
  }
  PixelEstimate est;
  est.c_initial = composite(profile.sigma, c0, profile.delta).color;
  const DensityProfile corrected =
      opts.correction ? correct_density(profile, opts.correction_params) : profile;
  CompositeResult fin = composite(corrected.sigma, c_out, corrected.delta);
  est.c_final = fin.color;
  est.weights = std::move(fin.weights);
  est.transmittance = std::move(fin.transmittance);
  return est;
}

/// Ray for pixel (px, py) clipped to the field bounds; nullopt if it misses.
inline std::optional<Ray> camera_ray(const CameraPose& cam, std::uint32_t px, std::uint32_t py,
                                     const Bounds& bounds) {
  const auto [origin, dir] = cam.pixel_ray(px, py);
  const auto span = clip_to_bounds(origin, dir, bounds);
  if (!span) return std::nullopt;
  return Ray{origin, dir, span->first, span->second};
}

/// One ray per pixel. Pixels whose ray misses the field bounds are black.
template <class Real>
Image render_image(const VoxelField<Real>& field, const CameraPose& cam, const RenderOptions& opts) {
  if (cam.width == 0 || cam.height == 0) fail(ErrorKind::invalid_input, "image resolution must be non-zero");
  validate_camera(cam);
  if (opts.correction) validate_correction(opts.correction_params);
  std::vector<Rgb> px(std::size_t{cam.width} * cam.height);
  parallel_for(px.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto x = static_cast<std::uint32_t>(i % cam.width);
      const auto y = static_cast<std::uint32_t>(i / cam.width);
      const auto ray = camera_ray(cam, x, y, field.bounds());
      if (!ray) continue;
      const PixelEstimate est = render_ray(field, *ray, opts, i);
      px[i] = opts.mode == RenderMode::initial ? est.c_initial : est.c_final;
    }
  });
  return Image(cam.width, cam.height, std::move(px));
}

}  // namespace cleanfield
