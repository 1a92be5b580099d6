#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>

#include "cleanfield/core.hpp"
#include "cleanfield/field.hpp"

namespace cleanfield {

/// Pinhole camera. Camera axes follow the x-right, y-down, z-forward
/// convention; `rotation` is camera-to-world, row-major, with the camera
/// axes as its columns.
struct CameraPose {
  std::uint32_t width = 64;
  std::uint32_t height = 64;
  double focal = 64.0;
  double cx = 32.0;
  double cy = 32.0;
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 position;

  Vec3 axis(int column) const {
    return {rotation[column], rotation[3 + column], rotation[6 + column]};
  }
  Vec3 forward() const { return axis(2); }

  /// Ray through the center of pixel (px, py).
  std::pair<Vec3, Direction> pixel_ray(double px, double py) const {
    const Vec3 local{(px + 0.5 - cx) / focal, (py + 0.5 - cy) / focal, 1.0};
    const Vec3 world = axis(0) * local.x + axis(1) * local.y + axis(2) * local.z;
    return {position, Direction::normalize(world)};
  }

  friend bool operator==(const CameraPose&, const CameraPose&) = default;
};

inline void validate_camera(const CameraPose& cam) {
  if (cam.width == 0 || cam.height == 0) fail(ErrorKind::invalid_input, "camera resolution must be non-zero");
  if (!(cam.focal > 0.0)) fail(ErrorKind::invalid_input, "focal length must be positive");
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double d = dot(cam.axis(i), cam.axis(j));
      if (std::abs(d - (i == j ? 1.0 : 0.0)) > 1e-9) {
        fail(ErrorKind::invalid_input, "camera rotation is not orthonormal");
      }
    }
  }
}

/// Camera at eye looking at target; `up` fixes the roll.
inline CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up, std::uint32_t width,
                          std::uint32_t height, double focal) {
  const Vec3 f = Direction::normalize(target - eye).vec();
  const Vec3 r = Direction::normalize(cross(f, up)).vec();
  const Vec3 d = cross(f, r);
  CameraPose cam;
  cam.width = width;
  cam.height = height;
  cam.focal = focal;
  cam.cx = width * 0.5;
  cam.cy = height * 0.5;
  cam.rotation = {r.x, d.x, f.x, r.y, d.y, f.y, r.z, d.z, f.z};
  cam.position = eye;
  return cam;
}

/// Slab intersection of a ray with a box; nullopt when it misses or the
/// overlap is empty.
inline std::optional<std::pair<double, double>> clip_to_bounds(const Vec3& origin, const Direction& dir,
                                                                const Bounds& box) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = origin[a];
    const double d = dir.vec()[a];
    if (d == 0.0) {
      if (o < box.lo[a] || o > box.hi[a]) return std::nullopt;
      continue;
    }
    double ta = (box.lo[a] - o) / d;
    double tb = (box.hi[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t0 < t1)) return std::nullopt;
  return std::make_pair(t0, t1);
}

}  // namespace cleanfield
