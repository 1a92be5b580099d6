#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace cleanfield {

enum class ErrorKind {
  invalid_input,
  under_determined,
  singular_fit,
  invalid_split,
  degenerate_batch,
  empty_split,
  config,
  io,
  format,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::under_determined: return "under-determined";
    case ErrorKind::singular_fit: return "singular-fit";
    case ErrorKind::invalid_split: return "invalid-split";
    case ErrorKind::degenerate_batch: return "degenerate-batch";
    case ErrorKind::empty_split: return "empty-split";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

  friend Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
  friend Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
  friend Vec3 operator*(Vec3 a, double s) { return a *= s; }
  friend Vec3 operator*(double s, Vec3 a) { return a *= s; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

/// Linear RGB triple. Not clamped; colors may leave [0,1] in intermediate terms.
struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;

  double& operator[](int i) { return i == 0 ? r : (i == 1 ? g : b); }
  double operator[](int i) const { return i == 0 ? r : (i == 1 ? g : b); }

  Rgb& operator+=(const Rgb& o) { r += o.r; g += o.g; b += o.b; return *this; }
  Rgb& operator-=(const Rgb& o) { r -= o.r; g -= o.g; b -= o.b; return *this; }
  Rgb& operator*=(double s) { r *= s; g *= s; b *= s; return *this; }

  friend Rgb operator+(Rgb a, const Rgb& o) { return a += o; }
  friend Rgb operator-(Rgb a, const Rgb& o) { return a -= o; }
  friend Rgb operator*(Rgb a, double s) { return a *= s; }
  friend Rgb operator*(double s, Rgb a) { return a *= s; }
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline double dot(const Rgb& a, const Rgb& b) { return a.r * b.r + a.g * b.g + a.b * b.b; }
inline double squared_norm(const Rgb& a) { return dot(a, a); }

/// Unit vector on S². Construction either validates (`from`) or normalizes.
class Direction {
 public:
  Direction() = default;

  static Direction from(const Vec3& v, double tolerance = 1e-6) {
    const double n = norm(v);
    if (!std::isfinite(n) || std::abs(n - 1.0) > tolerance) {
      fail(ErrorKind::invalid_input,
           "direction is not unit length (norm " + std::to_string(n) + ")");
    }
    return Direction(scaled(v, n));
  }

  static Direction normalize(const Vec3& v) {
    const double n = norm(v);
    if (!(n > 0.0) || !std::isfinite(n)) {
      fail(ErrorKind::invalid_input, "cannot normalize a zero or non-finite vector");
    }
    return Direction(scaled(v, n));
  }

  double x() const { return v_.x; }
  double y() const { return v_.y; }
  double z() const { return v_.z; }
  const Vec3& vec() const { return v_; }

  friend bool operator==(const Direction&, const Direction&) = default;

 private:
  explicit Direction(const Vec3& v) : v_(v) {}

  // Already-unit vectors are kept bit-for-bit so normalization is idempotent.
  static Vec3 scaled(const Vec3& v, double n) {
    return std::abs(n - 1.0) <= 4e-16 ? v : v * (1.0 / n);
  }

  Vec3 v_{0.0, 0.0, 1.0};
};

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

inline constexpr double kPi = 3.14159265358979323846;

// splitmix64 finalizer; used to derive per-ray random streams from a seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double unit_from_bits(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace cleanfield
