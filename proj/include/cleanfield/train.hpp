#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "cleanfield/core.hpp"
#include "cleanfield/field.hpp"
#include "cleanfield/parallel.hpp"
#include "cleanfield/render.hpp"
#include "cleanfield/scenes.hpp"
#include "cleanfield/sh.hpp"

namespace cleanfield {

struct ShConfig {
  int l_max = 3;
  int split_degree = 1;
  std::size_t directions = 64;

  ShLayout layout() const { return {l_max, split_degree}; }
  friend bool operator==(const ShConfig&, const ShConfig&) = default;
};

struct TrainConfig {
  int iterations = 2000;
  std::size_t batch_rays = 1024;
  int samples = 64;
  double learning_rate = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double lambda_vi = 0.01;
  double lambda_vd = 0.01;
  double reg_position_fraction = 0.125;
  std::uint64_t seed = 0;
  bool stratified = true;
  bool correction = true;
  CorrectionParams correction_params{};
  ShConfig sh{};

  bool decomposition() const { return lambda_vi > 0.0 || lambda_vd > 0.0; }
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void validate_train_config(const TrainConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorKind::invalid_input, what);
  };
  require(c.iterations >= 0, "iterations must be >= 0");
  require(c.batch_rays >= 1, "batch_rays must be >= 1");
  require(c.samples >= 2, "samples per ray must be >= 2");
  require(c.learning_rate > 0.0, "learning rate must be positive");
  require(c.adam_beta1 > 0.0 && c.adam_beta1 < 1.0, "adam_beta1 must lie in (0,1)");
  require(c.adam_beta2 > 0.0 && c.adam_beta2 < 1.0, "adam_beta2 must lie in (0,1)");
  require(c.adam_epsilon > 0.0, "adam_epsilon must be positive");
  require(c.lambda_vi >= 0.0 && c.lambda_vd >= 0.0, "regularizer weights must be >= 0");
  require(c.reg_position_fraction > 0.0 && c.reg_position_fraction <= 1.0,
          "reg_position_fraction must lie in (0,1]");
  require(c.sh.directions >= sh_count(c.sh.l_max), "SH direction count is below the basis size");
  detail::check_degree(c.sh.l_max);
  detail::check_split(c.sh.l_max, c.sh.split_degree);
  validate_correction(c.correction_params);
}

struct LossBreakdown {
  double l_pho_initial = 0.0;
  double l_pho_final = 0.0;
  double l_vi = 0.0;
  double l_vd = 0.0;
  double total = 0.0;

  static LossBreakdown combine(double pho_initial, double pho_final, double vi, double vd, double lambda_vi,
                               double lambda_vd) {
    return {pho_initial, pho_final, vi, vd, pho_initial + pho_final + lambda_vi * vi + lambda_vd * vd};
  }
};

/// Sum over rays of ‖Ĉ₀ − C‖² and ‖Ĉ − C‖².
inline std::pair<double, double> photometric_loss(std::span<const PixelEstimate> estimates,
                                                  std::span<const Rgb> gt) {
  if (estimates.size() != gt.size()) fail(ErrorKind::invalid_input, "estimate and ground-truth counts differ");
  double initial = 0.0, final_ = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    initial += squared_norm(estimates[i].c_initial - gt[i]);
    final_ += squared_norm(estimates[i].c_final - gt[i]);
  }
  return {initial, final_};
}

struct DecompositionLosses {
  double l_vi = 0.0;
  double l_vd = 0.0;
  std::size_t skipped = 0;
};

/// Per position: sample c0 over the direction set, fit SH per channel, split
/// into low/high targets, and compare against c_vi and c_vd. Both terms are
/// averaged over the positions that fitted.
template <class Real>
DecompositionLosses decomposition_losses(const VoxelField<Real>& field, std::span<const Vec3> positions,
                                         const DirectionSet& dirs, const ShConfig& sh) {
  if (positions.empty()) fail(ErrorKind::invalid_input, "decomposition needs at least one position");
  if (field.sh_layout() != sh.layout()) {
    fail(ErrorKind::invalid_input, "SH configuration does not match the field layout");
  }
  std::optional<ShLeastSquares> solver;
  try {
    solver.emplace(dirs, sh.l_max);
  } catch (const Error&) {
    fail(ErrorKind::degenerate_batch, "SH fit failed at every position");
  }
  DecompositionLosses out;
  std::size_t used = 0;
  std::vector<std::array<double, 3>> c0(dirs.size());
  std::vector<Rgb> c_vd(dirs.size());
  std::vector<double> channel(dirs.size());
  for (const Vec3& x : positions) {
    Rgb c_vi;
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      const RadianceSample r = eval_radiance(field, x, dirs[i]);
      c0[i] = {r.c0.r, r.c0.g, r.c0.b};
      c_vd[i] = r.c_vd;
      c_vi = r.c_vi;
    }
    std::array<ShFit, 3> fits;
    try {
      for (int ch = 0; ch < 3; ++ch) {
        for (std::size_t i = 0; i < dirs.size(); ++i) channel[i] = c0[i][ch];
        fits[ch] = solver->fit(channel);
      }
    } catch (const Error&) {
      ++out.skipped;
      continue;
    }
    const DecompositionTargets t = split_targets(fits, dirs, sh.split_degree);
    out.l_vi += squared_norm(c_vi - t.c_vi_target);
    for (std::size_t i = 0; i < dirs.size(); ++i) out.l_vd += squared_norm(c_vd[i] - t.c_vd_target[i]);
    ++used;
  }
  if (used == 0) fail(ErrorKind::degenerate_batch, "SH fit failed at every position");
  out.l_vi /= static_cast<double>(used);
  out.l_vd /= static_cast<double>(used);
  return out;
}

// ---------------------------------------------------------------------------
// Batches and frozen quantities.

struct TrainRay {
  Ray ray;
  Rgb target;
  bool hits = true;  // false when the pixel ray misses the field bounds
};

/// A ray batch with fixed quadrature depths and regularizer positions.
struct Batch {
  std::vector<TrainRay> rays;
  int samples = 0;
  std::vector<double> t;      // rays × samples
  std::vector<double> delta;  // rays × samples
  std::vector<Vec3> positions;
};

/// Quantities held constant during differentiation: the correction window
/// of each ray and the SH targets at each regularizer position.
struct FrozenTargets {
  std::vector<std::optional<KeepWindow>> windows;  // per ray
  std::vector<Rgb> c_vi_target;                    // per position
  std::vector<double> vd_coefficients;             // per position, H×3 (coefficient-major)
};

inline Batch make_batch(std::vector<TrainRay> rays, int samples, bool stratified, std::uint64_t seed,
                        std::span<const Vec3> positions = {}) {
  Batch b;
  b.rays = std::move(rays);
  b.samples = samples;
  b.t.assign(b.rays.size() * samples, 0.0);
  b.delta.assign(b.rays.size() * samples, 0.0);
  for (std::size_t r = 0; r < b.rays.size(); ++r) {
    if (!b.rays[r].hits) continue;
    const DensityProfile p = sample_ray(b.rays[r].ray, samples, stratified, seed, r);
    std::copy(p.t.begin(), p.t.end(), b.t.begin() + r * samples);
    std::copy(p.delta.begin(), p.delta.end(), b.delta.begin() + r * samples);
  }
  b.positions.assign(positions.begin(), positions.end());
  return b;
}

/// Dense gradient of the total loss, in the field's parameter layout.
struct ParameterGradients {
  std::vector<double> values;
  LossBreakdown loss;
  FrozenTargets frozen;
};

namespace detail {

struct GradRecord {
  std::array<std::uint32_t, 8> index;
  std::array<double, 8> weight;
  std::uint32_t offset;
  bool regularizer;
};

struct ChunkOutput {
  std::vector<GradRecord> records;
  std::vector<double> pool;
  double pho_initial = 0.0;
  double pho_final = 0.0;
  double vi = 0.0;
  double vd = 0.0;
};

}  // namespace detail

/// Forward and reverse pass over a batch. Owns the SH machinery for the
/// regularizer direction set; reusable across iterations.
template <class Real>
class GradientEngine {
 public:
  static constexpr std::size_t kRaysPerChunk = 16;
  static constexpr std::size_t kPositionsPerChunk = 64;

  GradientEngine(const VoxelField<Real>& field, const TrainConfig& config)
      : config_(config),
        layout_(field.layout()),
        sh_(field.sh_layout()),
        dirs_(sample_directions(config.sh.directions)),
        solver_(dirs_, config.sh.l_max) {
    if (field.sh_layout() != config.sh.layout()) {
      fail(ErrorKind::invalid_input, "SH configuration does not match the field layout");
    }
    const std::size_t full = sh_.full_count();
    const std::size_t low = sh_.low_count();
    const std::size_t high = sh_.high_count();
    mean_basis_.assign(full, 0.0);
    gram_high_.assign(high * high, 0.0);
    for (std::size_t i = 0; i < dirs_.size(); ++i) {
      const auto y = solver_.design_row(i);
      for (std::size_t j = 0; j < full; ++j) mean_basis_[j] += y[j];
      for (std::size_t a = 0; a < high; ++a) {
        for (std::size_t b = 0; b < high; ++b) gram_high_[a * high + b] += y[low + a] * y[low + b];
      }
    }
    for (auto& m : mean_basis_) m /= static_cast<double>(dirs_.size());
  }

  const DirectionSet& directions() const { return dirs_; }

  /// Runs the batch. When `frozen_in` is given, its windows and targets are
  /// used instead of being recomputed; `frozen_out` receives the ones used.
  LossBreakdown run(const VoxelField<Real>& field, const Batch& batch, bool with_grad,
                    const FrozenTargets* frozen_in = nullptr, FrozenTargets* frozen_out = nullptr) {
    const std::size_t n_rays = batch.rays.size();
    const std::size_t n_pos = batch.positions.size();
    const bool regularize = config_.decomposition() && n_pos > 0;
    const std::size_t ray_chunks = (n_rays + kRaysPerChunk - 1) / kRaysPerChunk;
    const std::size_t pos_chunks = regularize ? (n_pos + kPositionsPerChunk - 1) / kPositionsPerChunk : 0;
    chunks_.resize(ray_chunks + pos_chunks);
    for (auto& c : chunks_) c = detail::ChunkOutput{};

    FrozenTargets local;
    FrozenTargets& frozen = frozen_out ? *frozen_out : local;
    if (frozen_in) {
      if (&frozen != frozen_in) frozen = *frozen_in;
    } else {
      frozen.windows.assign(n_rays, std::nullopt);
      frozen.c_vi_target.assign(regularize ? n_pos : 0, Rgb{});
      frozen.vd_coefficients.assign(regularize ? n_pos * 3 * sh_.high_count() : 0, 0.0);
    }
    const bool recompute = frozen_in == nullptr;

    parallel_for(ray_chunks + pos_chunks, [&](std::size_t begin, std::size_t end) {
      Scratch scratch(batch.samples, layout_.count());
      for (std::size_t c = begin; c < end; ++c) {
        if (c < ray_chunks) {
          const std::size_t r0 = c * kRaysPerChunk;
          const std::size_t r1 = std::min(n_rays, r0 + kRaysPerChunk);
          for (std::size_t r = r0; r < r1; ++r) {
            ray_pass(field, batch, r, with_grad, recompute, frozen.windows[r], scratch, chunks_[c]);
          }
        } else {
          const std::size_t p0 = (c - ray_chunks) * kPositionsPerChunk;
          const std::size_t p1 = std::min(n_pos, p0 + kPositionsPerChunk);
          for (std::size_t i = p0; i < p1; ++i) {
            position_pass(field, batch.positions[i], static_cast<double>(n_pos), with_grad, recompute,
                          frozen.c_vi_target[i], &frozen.vd_coefficients[i * 3 * sh_.high_count()], scratch,
                          chunks_[c]);
          }
        }
      }
    });

    double pho_initial = 0.0, pho_final = 0.0, vi = 0.0, vd = 0.0;
    for (const auto& c : chunks_) {
      pho_initial += c.pho_initial;
      pho_final += c.pho_final;
      vi += c.vi;
      vd += c.vd;
    }
    if (regularize) {
      vi /= static_cast<double>(n_pos);
      vd /= static_cast<double>(n_pos);
    }
    return LossBreakdown::combine(pho_initial, pho_final, vi, vd, config_.lambda_vi, config_.lambda_vd);
  }

  /// Adds the recorded gradients of the last `run` into `grad` (field
  /// layout). Voxels receiving any contribution are flagged in `touched`
  /// and appended to `touched_list` in ascending order. Work is split by
  /// voxel ownership so accumulation order is fixed regardless of the
  /// worker count.
  template <class G>
  void scatter(std::span<G> grad, std::vector<std::uint8_t>& touched, std::vector<std::uint32_t>& touched_list) const {
    const std::size_t channels = layout_.count();
    const std::size_t voxels = grad.size() / channels;
    const unsigned workers = std::max(1u, std::min<unsigned>(thread_count(), 64));
    const std::size_t vd0 = layout_.sh_vd();
    const std::size_t vd_n = 3 * layout_.sh_high;
    parallel_for(
        workers,
        [&](std::size_t wb, std::size_t we) {
          for (std::size_t w = wb; w < we; ++w) {
            const std::size_t lo = voxels * w / workers;
            const std::size_t hi = voxels * (w + 1) / workers;
            for (const auto& chunk : chunks_) {
              for (const auto& rec : chunk.records) {
                const double* g = &chunk.pool[rec.offset];
                for (int c = 0; c < 8; ++c) {
                  const std::size_t v = rec.index[c];
                  const double wt = rec.weight[c];
                  if (v < lo || v >= hi || wt == 0.0) continue;
                  G* dst = &grad[v * channels];
                  if (rec.regularizer) {
                    for (int ch = 0; ch < 3; ++ch) dst[ChannelLayout::color_vi + ch] += G(wt * g[ch]);
                    for (std::size_t i = 0; i < vd_n; ++i) dst[vd0 + i] += G(wt * g[3 + i]);
                  } else {
                    for (std::size_t i = 0; i < channels; ++i) dst[i] += G(wt * g[i]);
                  }
                  touched[v] = 1;
                }
              }
            }
          }
        },
        workers);
    for (std::size_t v = 0; v < voxels; ++v) {
      if (touched[v]) touched_list.push_back(static_cast<std::uint32_t>(v));
    }
  }

 private:
  struct Scratch {
    Scratch(int samples, std::size_t channels)
        : raw(samples * channels), stencil(samples), active(samples), sigma(samples), z(samples), c0(samples),
          c_vi(samples), c_vd(samples), c_final(samples), gamma(samples), w0(samples), w1(samples), t0(samples),
          t1(samples), grad(channels), kstar(25) {}
    std::vector<double> raw;
    std::vector<CellStencil> stencil;
    std::vector<std::uint8_t> active;
    std::vector<double> sigma;
    std::vector<Rgb> z, c0, c_vi, c_vd, c_final;
    std::vector<double> gamma, w0, w1, t0, t1;
    std::vector<double> grad;
    std::vector<double> kstar;
  };

  void ray_pass(const VoxelField<Real>& field, const Batch& batch, std::size_t r, bool with_grad, bool recompute,
                std::optional<KeepWindow>& window, Scratch& sc, detail::ChunkOutput& out) const {
    const TrainRay& tr = batch.rays[r];
    if (!tr.hits) {
      out.pho_initial += squared_norm(tr.target);
      out.pho_final += squared_norm(tr.target);
      if (recompute) window.reset();
      return;
    }
    const std::size_t k_count = static_cast<std::size_t>(batch.samples);
    const std::size_t channels = layout_.count();
    const std::size_t full = sh_.full_count();
    const std::size_t low = sh_.low_count();
    const std::size_t high = sh_.high_count();
    const double* t = &batch.t[r * k_count];
    const double* delta = &batch.delta[r * k_count];
    const Vec3& o = tr.ray.origin;
    const Direction& d = tr.ray.direction;
    std::array<double, sh_count(kMaxShDegree)> y{};
    eval_sh_unchecked(d.x(), d.y(), d.z(), sh_.l_max, y.data());

    for (std::size_t k = 0; k < k_count; ++k) {
      sc.active[k] = 0;
      sc.sigma[k] = 0.0;
      const CellStencil s = make_stencil(field, o + d.vec() * t[k]);
      if (!s.inside) continue;
      const double density = interpolate_channel(field, s, ChannelLayout::density);
      if (!(density > 0.0)) continue;
      sc.stencil[k] = s;
      sc.active[k] = 1;
      double* raw = &sc.raw[k * channels];
      interpolate_all(field, s, raw);
      sc.sigma[k] = raw[ChannelLayout::density];
      const double gamma = logistic(raw[ChannelLayout::gamma]);
      sc.gamma[k] = gamma;
      for (int ch = 0; ch < 3; ++ch) {
        double z = 0.0;
        for (std::size_t j = 0; j < full; ++j) z += raw[ChannelLayout::sh_c0 + 3 * j + ch] * y[j];
        double vd = 0.0;
        for (std::size_t j = 0; j < high; ++j) vd += raw[layout_.sh_vd() + 3 * j + ch] * y[low + j];
        const double vi = logistic(raw[ChannelLayout::color_vi + ch]);
        sc.z[k][ch] = z;
        sc.c0[k][ch] = clamp01(z);
        sc.c_vi[k][ch] = vi;
        sc.c_vd[k][ch] = vd;
        sc.c_final[k][ch] = gamma * vi + (1.0 - gamma) * vd;
      }
    }

    if (recompute) {
      window = config_.correction
                   ? correction_window(std::span<const double>(sc.sigma.data(), k_count), config_.correction_params)
                   : std::optional<KeepWindow>{};
    }
    const bool masked = config_.correction && window.has_value();
    auto kept = [&](std::size_t k) { return !masked || (k >= window->first && k <= window->last); };

    Rgb c_initial, c_final;
    double depth0 = 0.0, depth1 = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      sc.t0[k] = std::exp(-depth0);
      sc.t1[k] = std::exp(-depth1);
      sc.w0[k] = sc.w1[k] = 0.0;
      if (!sc.active[k]) continue;
      const double tau = sc.sigma[k] * delta[k];
      const double alpha = -std::expm1(-tau);
      sc.w0[k] = sc.t0[k] * alpha;
      c_initial += sc.c0[k] * sc.w0[k];
      depth0 += tau;
      if (kept(k)) {
        sc.w1[k] = sc.t1[k] * alpha;
        c_final += sc.c_final[k] * sc.w1[k];
        depth1 += tau;
      }
    }
    const Rgb e0 = c_initial - tr.target;
    const Rgb e1 = c_final - tr.target;
    out.pho_initial += squared_norm(e0);
    out.pho_final += squared_norm(e1);
    if (!with_grad) return;

    const Rgb g0 = e0 * 2.0;
    const Rgb g1 = e1 * 2.0;
    double suffix0 = 0.0, suffix1 = 0.0;
    for (std::size_t k = k_count; k-- > 0;) {
      if (!sc.active[k]) continue;
      const double tau = sc.sigma[k] * delta[k];
      const double decay = std::exp(-tau);
      const double a0 = dot(g0, sc.c0[k]);
      const double a1 = dot(g1, sc.c_final[k]);
      const bool keep = kept(k);
      double d_sigma = delta[k] * (sc.t0[k] * decay * a0 - suffix0);
      if (keep) d_sigma += delta[k] * (sc.t1[k] * decay * a1 - suffix1);
      suffix0 += sc.w0[k] * a0;
      if (keep) suffix1 += sc.w1[k] * a1;

      double* g = sc.grad.data();
      std::fill(g, g + channels, 0.0);
      g[ChannelLayout::density] = d_sigma;
      const double gamma = sc.gamma[k];
      double d_gamma = 0.0;
      for (int ch = 0; ch < 3; ++ch) {
        const double z = sc.z[k][ch];
        const double dz = (z >= 0.0 && z <= 1.0) ? sc.w0[k] * g0[ch] : 0.0;
        for (std::size_t j = 0; j < full; ++j) g[ChannelLayout::sh_c0 + 3 * j + ch] = dz * y[j];
        const double dc = sc.w1[k] * g1[ch];
        const double vi = sc.c_vi[k][ch];
        d_gamma += dc * (vi - sc.c_vd[k][ch]);
        g[ChannelLayout::color_vi + ch] = gamma * dc * vi * (1.0 - vi);
        const double dvd = (1.0 - gamma) * dc;
        for (std::size_t j = 0; j < high; ++j) g[layout_.sh_vd() + 3 * j + ch] = dvd * y[low + j];
      }
      g[ChannelLayout::gamma] = d_gamma * gamma * (1.0 - gamma);
      push_record(out, sc.stencil[k], g, channels, false);
    }
  }

  void position_pass(const VoxelField<Real>& field, const Vec3& x, double n_pos, bool with_grad, bool recompute,
                     Rgb& vi_target, double* vd_target, Scratch& sc, detail::ChunkOutput& out) const {
    const std::size_t full = sh_.full_count();
    const std::size_t low = sh_.low_count();
    const std::size_t high = sh_.high_count();
    const std::size_t n_dirs = dirs_.size();
    const CellStencil s = make_stencil(field, x);
    if (!s.inside) {
      // Vacuum: every color and target is zero.
      if (recompute) {
        vi_target = {};
        std::fill(vd_target, vd_target + 3 * high, 0.0);
      }
      return;
    }
    double* raw = sc.raw.data();
    interpolate_all(field, s, raw);
    const double* kc0 = raw + ChannelLayout::sh_c0;
    const double* kvd = raw + layout_.sh_vd();

    if (recompute) {
      std::array<double, sh_count(kMaxShDegree)> coef{};
      sc.kstar.resize(full);
      for (int ch = 0; ch < 3; ++ch) {
        for (std::size_t j = 0; j < full; ++j) coef[j] = kc0[3 * j + ch];
        std::fill(sc.kstar.begin(), sc.kstar.end(), 0.0);
        for (std::size_t i = 0; i < n_dirs; ++i) {
          const double* y = solver_.design_row(i).data();
          double z = 0.0;
          for (std::size_t j = 0; j < full; ++j) z += coef[j] * y[j];
          const double v = clamp01(z);
          for (std::size_t j = 0; j < full; ++j) sc.kstar[j] += y[j] * v;
        }
        solver_.solve_in_place(sc.kstar);
        double vi = 0.0;
        for (std::size_t j = 0; j < low; ++j) vi += sc.kstar[j] * mean_basis_[j];
        vi_target[ch] = vi;
        for (std::size_t j = 0; j < high; ++j) vd_target[3 * j + ch] = sc.kstar[low + j];
      }
    }

    // l_vd = Σ_ch Δᵀ G Δ with Δ = k_vd − k*_high and G the high-degree Gram
    // matrix over the direction set; equal to Σ_i ‖c_vd(d_i) − c̃_vd(d_i)‖².
    double* g = sc.grad.data();
    Rgb vi_err;
    double vi_loss = 0.0, vd_loss = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
      const double vi = logistic(raw[ChannelLayout::color_vi + ch]);
      vi_err[ch] = vi - vi_target[ch];
      vi_loss += vi_err[ch] * vi_err[ch];
      g[ch] = config_.lambda_vi * 2.0 * vi_err[ch] * vi * (1.0 - vi) / n_pos;
    }
    std::array<double, 25> diff{};
    for (int ch = 0; ch < 3; ++ch) {
      for (std::size_t a = 0; a < high; ++a) diff[a] = kvd[3 * a + ch] - vd_target[3 * a + ch];
      for (std::size_t a = 0; a < high; ++a) {
        double gd = 0.0;
        for (std::size_t b = 0; b < high; ++b) gd += gram_high_[a * high + b] * diff[b];
        vd_loss += diff[a] * gd;
        g[3 + 3 * a + ch] = config_.lambda_vd * 2.0 * gd / n_pos;
      }
    }
    out.vi += vi_loss;
    out.vd += vd_loss;
    if (with_grad) push_record(out, s, g, 3 + 3 * high, true);
  }

  static void push_record(detail::ChunkOutput& out, const CellStencil& s, const double* g, std::size_t n,
                          bool regularizer) {
    detail::GradRecord rec;
    rec.index = s.index;
    rec.weight = s.weight;
    rec.offset = static_cast<std::uint32_t>(out.pool.size());
    rec.regularizer = regularizer;
    out.pool.insert(out.pool.end(), g, g + n);
    out.records.push_back(rec);
  }

  TrainConfig config_;
  ChannelLayout layout_;
  ShLayout sh_;
  DirectionSet dirs_;
  ShLeastSquares solver_;
  std::vector<double> mean_basis_;
  std::vector<double> gram_high_;
  std::vector<detail::ChunkOutput> chunks_;
};

/// Analytic gradient of the total loss with the correction window and the
/// SH targets held constant.
template <class Real>
ParameterGradients gradients(const VoxelField<Real>& field, const Batch& batch, const TrainConfig& config,
                             const FrozenTargets* frozen = nullptr) {
  GradientEngine<Real> engine(field, config);
  ParameterGradients out;
  out.loss = engine.run(field, batch, true, frozen, &out.frozen);
  out.values.assign(field.params().size(), 0.0);
  std::vector<std::uint8_t> touched(field.voxel_count(), 0);
  std::vector<std::uint32_t> list;
  engine.scatter(std::span<double>(out.values), touched, list);
  return out;
}

/// Loss of a batch; with `frozen` the windows and targets are taken as given.
template <class Real>
LossBreakdown batch_loss(const VoxelField<Real>& field, const Batch& batch, const TrainConfig& config,
                         const FrozenTargets* frozen = nullptr) {
  GradientEngine<Real> engine(field, config);
  return engine.run(field, batch, false, frozen, nullptr);
}

/// Adam with per-voxel lazy updates: only voxels that received a gradient
/// in the current step are advanced.
template <class Real>
class AdamState {
 public:
  AdamState(std::size_t size, const TrainConfig& cfg) : m_(size, Real(0)), v_(size, Real(0)), cfg_(cfg) {}

  void step(std::span<Real> params, std::span<Real> grad, std::span<const std::uint32_t> voxels,
            std::size_t channels) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
    const double lr = cfg_.learning_rate;
    const Real b1 = Real(cfg_.adam_beta1), b2 = Real(cfg_.adam_beta2);
    const Real eps = Real(cfg_.adam_epsilon);
    const Real step = Real(lr / bc1);
    const Real inv_bc2 = Real(1.0 / bc2);
    Real* __restrict p = params.data();
    Real* __restrict g = grad.data();
    Real* __restrict m = m_.data();
    Real* __restrict v = v_.data();
    parallel_for(voxels.size(), [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t base = std::size_t{voxels[i]} * channels;
        for (std::size_t c = base; c < base + channels; ++c) {
          const Real gc = g[c];
          m[c] = b1 * m[c] + (Real(1) - b1) * gc;
          v[c] = b2 * v[c] + (Real(1) - b2) * gc * gc;
          p[c] -= step * m[c] / (std::sqrt(v[c] * inv_bc2) + eps);
          g[c] = Real(0);
        }
      }
    });
  }

  std::uint64_t steps() const { return t_; }

 private:
  std::vector<Real> m_, v_;
  TrainConfig cfg_;
  std::uint64_t t_ = 0;
};

struct FieldSetup {
  GridResolution resolution{64, 64, 64};
  Bounds bounds{};
};

/// Training rays for every pixel of every training view.
inline std::vector<TrainRay> training_rays(const Dataset& ds, const Bounds& bounds) {
  std::vector<TrainRay> rays;
  const auto train_ids = ds.split(true);
  if (train_ids.empty()) fail(ErrorKind::invalid_input, "dataset has no training views");
  const CameraPose& ref = ds.views[train_ids.front()].camera;
  for (std::size_t id : train_ids) {
    const View& v = ds.views[id];
    const CameraPose& c = v.camera;
    if (c.width != ref.width || c.height != ref.height || c.focal != ref.focal || c.cx != ref.cx ||
        c.cy != ref.cy) {
      fail(ErrorKind::invalid_input, "training views must share camera intrinsics");
    }
    if (v.image.width() != c.width || v.image.height() != c.height) {
      fail(ErrorKind::invalid_input, "view image size does not match its camera");
    }
    for (std::uint32_t py = 0; py < c.height; ++py) {
      for (std::uint32_t px = 0; px < c.width; ++px) {
        TrainRay tr;
        tr.target = v.image.at(px, py);
        if (auto ray = camera_ray(c, px, py, bounds)) {
          tr.ray = *ray;
        } else {
          tr.hits = false;
        }
        rays.push_back(tr);
      }
    }
  }
  return rays;
}

template <class Real>
struct TrainResult {
  VoxelField<Real> field;
  std::vector<LossBreakdown> log;
};

using TrainProgress = std::function<void(int iteration, const LossBreakdown&)>;

/// Adam on all voxel parameters. Each iteration draws batch_rays pixels
/// uniformly (with replacement) from all training pixels and a fraction of
/// the batch's quadrature points as regularizer positions.
template <class Real = float>
TrainResult<Real> train(const Dataset& ds, const TrainConfig& cfg, const FieldSetup& setup,
                        const TrainProgress& progress = {}) {
  validate_train_config(cfg);
  if (ds.views.empty()) fail(ErrorKind::invalid_input, "dataset is empty");
  TrainResult<Real> result{init_field<Real>(setup.resolution, setup.bounds, cfg.sh.layout(), cfg.seed), {}};
  VoxelField<Real>& field = result.field;
  const std::vector<TrainRay> pool = training_rays(ds, field.bounds());
  if (cfg.iterations == 0) return result;

  GradientEngine<Real> engine(field, cfg);
  AdamState<Real> adam(field.params().size(), cfg);
  std::vector<Real> grad(field.params().size(), Real(0));
  std::vector<std::uint8_t> touched(field.voxel_count(), 0);
  std::vector<std::uint32_t> touched_list;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick_ray(0, pool.size() - 1);
  result.log.reserve(cfg.iterations);

  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<TrainRay> rays(cfg.batch_rays);
    for (auto& r : rays) r = pool[pick_ray(rng)];
    Batch batch = make_batch(std::move(rays), cfg.samples, cfg.stratified, rng());
    if (cfg.decomposition()) {
      std::vector<std::size_t> hit_rays;
      for (std::size_t r = 0; r < batch.rays.size(); ++r) {
        if (batch.rays[r].hits) hit_rays.push_back(r);
      }
      if (!hit_rays.empty()) {
        const std::size_t points = hit_rays.size() * static_cast<std::size_t>(cfg.samples);
        const auto count = static_cast<std::size_t>(
            std::max(1.0, std::round(cfg.reg_position_fraction * static_cast<double>(points))));
        std::uniform_int_distribution<std::size_t> pick_point(0, points - 1);
        batch.positions.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
          const std::size_t q = pick_point(rng);
          const std::size_t r = hit_rays[q / cfg.samples];
          const std::size_t k = q % cfg.samples;
          const Ray& ray = batch.rays[r].ray;
          batch.positions.push_back(ray.origin + ray.direction.vec() * batch.t[r * cfg.samples + k]);
        }
      }
    }
    const LossBreakdown loss = engine.run(field, batch, true);
    touched_list.clear();
    engine.scatter(std::span<Real>(grad), touched, touched_list);
    adam.step(field.params(), grad, touched_list, field.channels());
    for (std::uint32_t v : touched_list) touched[v] = 0;
    result.log.push_back(loss);
    if (progress) progress(it, loss);
  }
  return result;
}

inline void write_training_log(std::ostream& out, std::span<const LossBreakdown> log) {
  out << "iteration,l_pho_initial,l_pho_final,l_vi,l_vd,total\n";
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(17);
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& l = log[i];
    out << i << ',' << l.l_pho_initial << ',' << l.l_pho_final << ',' << l.l_vi << ',' << l.l_vd << ','
        << l.total << '\n';
  }
  out.flags(flags);
  out.precision(prec);
}

}  // namespace cleanfield
