#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "cleanfield/core.hpp"
#include "cleanfield/field.hpp"
#include "cleanfield/image.hpp"
#include "cleanfield/scenes.hpp"

namespace cleanfield {

namespace detail {

inline void check_same_size(const Image& a, const Image& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    fail(ErrorKind::invalid_input, "image dimensions differ");
  }
}

}  // namespace detail

inline double mse(const Image& a, const Image& b) {
  detail::check_same_size(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += squared_norm(a.pixels()[i] - b.pixels()[i]);
  return sum / (3.0 * static_cast<double>(a.size()));
}

/// Peak 1. Identical images give +infinity.
inline double psnr(const Image& a, const Image& b) {
  const double e = mse(a, b);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(e);
}

inline double mae(const Image& a, const Image& b) {
  detail::check_same_size(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Rgb d = a.pixels()[i] - b.pixels()[i];
    sum += std::abs(d.r) + std::abs(d.g) + std::abs(d.b);
  }
  return sum / (3.0 * static_cast<double>(a.size()));
}

/// Single-scale SSIM: 11×11 Gaussian window (σ = 1.5), C1 = 0.01², C2 = 0.03²,
/// averaged over valid window positions and then over channels.
inline double ssim(const Image& a, const Image& b) {
  detail::check_same_size(a, b);
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  if (a.width() < kWin || a.height() < kWin) {
    fail(ErrorKind::invalid_input, "SSIM needs images of at least 11x11 pixels");
  }
  std::array<double, kWin * kWin> window{};
  double total = 0.0;
  for (int y = 0; y < kWin; ++y) {
    for (int x = 0; x < kWin; ++x) {
      const double dx = x - kWin / 2, dy = y - kWin / 2;
      window[y * kWin + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
      total += window[y * kWin + x];
    }
  }
  for (auto& w : window) w /= total;

  const std::uint32_t out_w = a.width() - kWin + 1;
  const std::uint32_t out_h = a.height() - kWin + 1;
  double channel_sum = 0.0;
  for (int ch = 0; ch < 3; ++ch) {
    double map_sum = 0.0;
    for (std::uint32_t oy = 0; oy < out_h; ++oy) {
      for (std::uint32_t ox = 0; ox < out_w; ++ox) {
        double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
        for (int y = 0; y < kWin; ++y) {
          for (int x = 0; x < kWin; ++x) {
            const double w = window[y * kWin + x];
            const double va = a.at(ox + x, oy + y)[ch];
            const double vb = b.at(ox + x, oy + y)[ch];
            mu_a += w * va;
            mu_b += w * vb;
            aa += w * va * va;
            bb += w * vb * vb;
            ab += w * va * vb;
          }
        }
        const double var_a = aa - mu_a * mu_a;
        const double var_b = bb - mu_b * mu_b;
        const double cov = ab - mu_a * mu_b;
        map_sum += ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
                   ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
      }
    }
    channel_sum += map_sum / (static_cast<double>(out_w) * out_h);
  }
  return channel_sum / 3.0;
}

/// Fraction of all voxels whose activated density exceeds density_thres
/// while their center lies outside every sphere dilated by one voxel diagonal.
template <class Real>
double floater_volume(const VoxelField<Real>& field, const SceneOracle& scene, double density_thres) {
  const double diagonal = std::sqrt(field.cell_size(0) * field.cell_size(0) +
                                    field.cell_size(1) * field.cell_size(1) +
                                    field.cell_size(2) * field.cell_size(2));
  std::size_t floaters = 0;
  for (std::size_t v = 0; v < field.voxel_count(); ++v) {
    const double sigma = std::max(0.0, double(field.density_raw(v)));
    if (sigma > density_thres && !scene.inside_any(field.voxel_center(v), diagonal)) ++floaters;
  }
  return static_cast<double>(floaters) / static_cast<double>(field.voxel_count());
}

}  // namespace cleanfield
