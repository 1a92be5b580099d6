#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cleanfield/core.hpp"

namespace cleanfield {

inline constexpr int kMaxShDegree = 4;

/// Number of real SH functions with degree <= l_max.
constexpr std::size_t sh_count(int l_max) {
  return static_cast<std::size_t>((l_max + 1) * (l_max + 1));
}

namespace detail {

inline void check_degree(int l_max) {
  if (l_max < 0 || l_max > kMaxShDegree) {
    fail(ErrorKind::invalid_input,
         "SH degree must lie in [0, " + std::to_string(kMaxShDegree) + "], got " +
             std::to_string(l_max));
  }
}

}  // namespace detail

/// Orthonormal real SH up to degree l_max (<= 4), written into out[0, (l_max+1)^2).
/// Ordering is (l, m) with m running from -l to l. No Condon-Shortley phase.
inline void eval_sh_unchecked(double x, double y, double z, int l_max, double* out) {
  static const double k00 = 0.5 * std::sqrt(1.0 / kPi);
  static const double k1 = std::sqrt(3.0 / (4.0 * kPi));
  static const double k2a = 0.5 * std::sqrt(15.0 / kPi);
  static const double k20 = 0.25 * std::sqrt(5.0 / kPi);
  static const double k22 = 0.25 * std::sqrt(15.0 / kPi);
  static const double k33 = 0.25 * std::sqrt(35.0 / (2.0 * kPi));
  static const double k32a = 0.5 * std::sqrt(105.0 / kPi);
  static const double k32b = 0.25 * std::sqrt(105.0 / kPi);
  static const double k31 = 0.25 * std::sqrt(21.0 / (2.0 * kPi));
  static const double k30 = 0.25 * std::sqrt(7.0 / kPi);
  static const double k44a = 0.75 * std::sqrt(35.0 / kPi);
  static const double k44b = 3.0 / 16.0 * std::sqrt(35.0 / kPi);
  static const double k43 = 0.75 * std::sqrt(35.0 / (2.0 * kPi));
  static const double k42a = 0.75 * std::sqrt(5.0 / kPi);
  static const double k42b = 3.0 / 8.0 * std::sqrt(5.0 / kPi);
  static const double k41 = 0.75 * std::sqrt(5.0 / (2.0 * kPi));
  static const double k40 = 3.0 / 16.0 * std::sqrt(1.0 / kPi);

  out[0] = k00;
  if (l_max < 1) return;
  out[1] = k1 * y;
  out[2] = k1 * z;
  out[3] = k1 * x;
  if (l_max < 2) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  out[4] = k2a * x * y;
  out[5] = k2a * y * z;
  out[6] = k20 * (3.0 * zz - 1.0);
  out[7] = k2a * x * z;
  out[8] = k22 * (xx - yy);
  if (l_max < 3) return;
  out[9] = k33 * y * (3.0 * xx - yy);
  out[10] = k32a * x * y * z;
  out[11] = k31 * y * (5.0 * zz - 1.0);
  out[12] = k30 * z * (5.0 * zz - 3.0);
  out[13] = k31 * x * (5.0 * zz - 1.0);
  out[14] = k32b * z * (xx - yy);
  out[15] = k33 * x * (xx - 3.0 * yy);
  if (l_max < 4) return;
  out[16] = k44a * x * y * (xx - yy);
  out[17] = k43 * y * z * (3.0 * xx - yy);
  out[18] = k42a * x * y * (7.0 * zz - 1.0);
  out[19] = k41 * y * z * (7.0 * zz - 3.0);
  out[20] = k40 * (35.0 * zz * zz - 30.0 * zz + 3.0);
  out[21] = k41 * x * z * (7.0 * zz - 3.0);
  out[22] = k42b * (xx - yy) * (7.0 * zz - 1.0);
  out[23] = k43 * x * z * (xx - 3.0 * yy);
  out[24] = k44b * (xx * (xx - 3.0 * yy) - yy * (3.0 * xx - yy));
}

struct ShBasisVector {
  int l_max = 0;
  std::vector<double> values;
};

inline ShBasisVector eval_sh_basis(const Direction& d, int l_max) {
  detail::check_degree(l_max);
  ShBasisVector basis{l_max, std::vector<double>(sh_count(l_max))};
  eval_sh_unchecked(d.x(), d.y(), d.z(), l_max, basis.values.data());
  return basis;
}

/// Validating overload for raw vectors: |‖v‖ - 1| > 1e-6 is rejected.
inline ShBasisVector eval_sh_basis(const Vec3& v, int l_max) {
  return eval_sh_basis(Direction::from(v), l_max);
}

using DirectionSet = std::vector<Direction>;

/// Deterministic Fibonacci-sphere point set.
inline DirectionSet sample_directions(std::size_t n) {
  if (n == 0) fail(ErrorKind::invalid_input, "direction count must be >= 1");
  static const double golden_angle = kPi * (3.0 - std::sqrt(5.0));
  DirectionSet dirs;
  dirs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * static_cast<double>(i);
    dirs.push_back(Direction::normalize({r * std::cos(phi), r * std::sin(phi), z}));
  }
  return dirs;
}

/// Least-squares SH coefficients for one color channel.
struct ShFit {
  std::vector<double> coefficients;
  int l_max = 0;
  int split_degree = 0;
  double residual = 0.0;
};

/// Normal-equation solver for a fixed direction set. The Gram matrix YᵀY is
/// factored once (Cholesky, pivot tolerance 1e-12) and reused for every fit.
class ShLeastSquares {
 public:
  static constexpr double kPivotTolerance = 1e-12;

  ShLeastSquares(const DirectionSet& dirs, int l_max) : l_max_(l_max), n_(dirs.size()) {
    detail::check_degree(l_max);
    count_ = sh_count(l_max);
    if (n_ < count_) {
      fail(ErrorKind::under_determined,
           "SH fit needs at least " + std::to_string(count_) + " directions, got " +
               std::to_string(n_));
    }
    design_.resize(n_ * count_);
    for (std::size_t i = 0; i < n_; ++i) {
      eval_sh_unchecked(dirs[i].x(), dirs[i].y(), dirs[i].z(), l_max, &design_[i * count_]);
    }
    factor_.assign(count_ * count_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      const double* y = &design_[i * count_];
      for (std::size_t r = 0; r < count_; ++r) {
        for (std::size_t c = 0; c <= r; ++c) factor_[r * count_ + c] += y[r] * y[c];
      }
    }
    // In-place lower Cholesky.
    for (std::size_t j = 0; j < count_; ++j) {
      double d = factor_[j * count_ + j];
      for (std::size_t k = 0; k < j; ++k) d -= factor_[j * count_ + k] * factor_[j * count_ + k];
      if (!(d > kPivotTolerance)) {
        fail(ErrorKind::singular_fit, "normal matrix is rank deficient (pivot " +
                                          std::to_string(d) + " at column " +
                                          std::to_string(j) + ")");
      }
      const double ljj = std::sqrt(d);
      factor_[j * count_ + j] = ljj;
      for (std::size_t i = j + 1; i < count_; ++i) {
        double s = factor_[i * count_ + j];
        for (std::size_t k = 0; k < j; ++k) s -= factor_[i * count_ + k] * factor_[j * count_ + k];
        factor_[i * count_ + j] = s / ljj;
      }
    }
  }

  int l_max() const { return l_max_; }
  std::size_t direction_count() const { return n_; }
  std::size_t basis_count() const { return count_; }

  /// Row i holds y(d_i).
  std::span<const double> design_row(std::size_t i) const {
    return {&design_[i * count_], count_};
  }

  /// Solves (YᵀY) k = b for a right-hand side b = Yᵀs.
  void solve_in_place(std::span<double> rhs) const {
    for (std::size_t i = 0; i < count_; ++i) {
      double s = rhs[i];
      for (std::size_t k = 0; k < i; ++k) s -= factor_[i * count_ + k] * rhs[k];
      rhs[i] = s / factor_[i * count_ + i];
    }
    for (std::size_t i = count_; i-- > 0;) {
      double s = rhs[i];
      for (std::size_t k = i + 1; k < count_; ++k) s -= factor_[k * count_ + i] * rhs[k];
      rhs[i] = s / factor_[i * count_ + i];
    }
  }

  ShFit fit(std::span<const double> samples) const {
    if (samples.size() != n_) {
      fail(ErrorKind::invalid_input, "sample count " + std::to_string(samples.size()) +
                                         " does not match direction count " +
                                         std::to_string(n_));
    }
    ShFit result;
    result.l_max = l_max_;
    result.split_degree = std::min(1, l_max_);
    result.coefficients.assign(count_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      const double* y = &design_[i * count_];
      for (std::size_t j = 0; j < count_; ++j) result.coefficients[j] += y[j] * samples[i];
    }
    solve_in_place(result.coefficients);
    double residual = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double* y = &design_[i * count_];
      double v = 0.0;
      for (std::size_t j = 0; j < count_; ++j) v += y[j] * result.coefficients[j];
      residual += (samples[i] - v) * (samples[i] - v);
    }
    result.residual = residual;
    return result;
  }

 private:
  int l_max_;
  std::size_t n_;
  std::size_t count_ = 0;
  std::vector<double> design_;
  std::vector<double> factor_;
};

/// Minimizes ‖s − Yᵀk‖² over k via the normal equations.
inline ShFit fit_sh(std::span<const double> samples, const DirectionSet& dirs, int l_max) {
  return ShLeastSquares(dirs, l_max).fit(samples);
}

struct DecompositionTargets {
  Rgb c_vi_target;
  std::vector<Rgb> c_vd_target;
};

namespace detail {

inline void check_split(int l_max, int split_degree) {
  if (split_degree < 0) fail(ErrorKind::invalid_split, "split degree must be >= 0");
  if (split_degree >= l_max) {
    fail(ErrorKind::invalid_split, "split degree " + std::to_string(split_degree) +
                                       " leaves no high-degree terms for l_max " +
                                       std::to_string(l_max));
  }
}

}  // namespace detail

/// View-independent target: mean over the sampled directions of the
/// low-degree (<= split_degree) reconstruction. View-dependent target: the
/// high-degree (> split_degree) reconstruction at each direction.
inline DecompositionTargets split_targets(const std::array<ShFit, 3>& fits,
                                          const DirectionSet& dirs, int split_degree) {
  const int l_max = fits[0].l_max;
  for (const auto& f : fits) {
    if (f.l_max != l_max || f.coefficients.size() != sh_count(l_max)) {
      fail(ErrorKind::invalid_input, "per-channel fits disagree on degree");
    }
  }
  detail::check_split(l_max, split_degree);
  if (dirs.empty()) fail(ErrorKind::invalid_input, "direction set is empty");

  const std::size_t count = sh_count(l_max);
  const std::size_t low = sh_count(split_degree);
  std::vector<double> y(count);
  DecompositionTargets targets;
  targets.c_vd_target.resize(dirs.size());
  Rgb low_sum;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    eval_sh_unchecked(dirs[i].x(), dirs[i].y(), dirs[i].z(), l_max, y.data());
    for (int ch = 0; ch < 3; ++ch) {
      const auto& k = fits[ch].coefficients;
      double lo = 0.0;
      for (std::size_t j = 0; j < low; ++j) lo += k[j] * y[j];
      double hi = 0.0;
      for (std::size_t j = low; j < count; ++j) hi += k[j] * y[j];
      low_sum[ch] += lo;
      targets.c_vd_target[i][ch] = hi;
    }
  }
  targets.c_vi_target = low_sum * (1.0 / static_cast<double>(dirs.size()));
  return targets;
}

}  // namespace cleanfield
