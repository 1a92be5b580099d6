#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "cleanfield/core.hpp"
#include "cleanfield/sh.hpp"

namespace cleanfield {

struct GridResolution {
  std::uint32_t nx = 64;
  std::uint32_t ny = 64;
  std::uint32_t nz = 64;

  std::size_t voxel_count() const { return std::size_t{nx} * ny * nz; }
  friend bool operator==(const GridResolution&, const GridResolution&) = default;
};

/// Axis-aligned box. Corners are kept float-representable so checkpoints
/// reproduce them exactly.
struct Bounds {
  Vec3 lo{-1.2, -1.2, -1.2};
  Vec3 hi{1.2, 1.2, 1.2};

  Vec3 extent() const { return hi - lo; }
  bool contains(const Vec3& p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z &&
           p.z <= hi.z;
  }
  friend bool operator==(const Bounds&, const Bounds&) = default;
};

/// SH degree layout shared by the c0 (full degree) and c_vd (high degrees only) blocks.
struct ShLayout {
  int l_max = 3;
  int split_degree = 1;

  std::size_t full_count() const { return sh_count(l_max); }
  std::size_t low_count() const { return sh_count(split_degree); }
  std::size_t high_count() const { return full_count() - low_count(); }
  friend bool operator==(const ShLayout&, const ShLayout&) = default;
};

/// Per-voxel parameter block, stored contiguously (array of structures):
///   [density_raw | c_vi_raw rgb | gamma_raw | sh_c0 L×3 | sh_vd H×3]
/// SH blocks are coefficient-major, channel-minor.
struct ChannelLayout {
  std::size_t sh_full = 16;
  std::size_t sh_high = 12;

  static constexpr std::size_t density = 0;
  static constexpr std::size_t color_vi = 1;
  static constexpr std::size_t gamma = 4;
  static constexpr std::size_t sh_c0 = 5;
  std::size_t sh_vd() const { return sh_c0 + 3 * sh_full; }
  std::size_t count() const { return sh_vd() + 3 * sh_high; }
};

template <class Real>
class VoxelField {
 public:
  using value_type = Real;

  VoxelField() = default;

  VoxelField(GridResolution res, Bounds bounds, ShLayout sh)
      : res_(res), bounds_(bounds), sh_(sh) {
    if (res.nx < 2 || res.ny < 2 || res.nz < 2) {
      fail(ErrorKind::invalid_input, "grid resolution must be >= 2 along every axis");
    }
    const Vec3 e = bounds.extent();
    if (!(e.x > 0.0 && e.y > 0.0 && e.z > 0.0)) {
      fail(ErrorKind::invalid_input, "field bounds must have positive extent on every axis");
    }
    detail::check_degree(sh.l_max);
    detail::check_split(sh.l_max, sh.split_degree);
    layout_ = ChannelLayout{sh.full_count(), sh.high_count()};
    for (int a = 0; a < 3; ++a) cell_[a] = e[a] / static_cast<double>(axis(a));
    params_.assign(res.voxel_count() * layout_.count(), Real(0));
  }

  const GridResolution& resolution() const { return res_; }
  const Bounds& bounds() const { return bounds_; }
  const ShLayout& sh_layout() const { return sh_; }
  const ChannelLayout& layout() const { return layout_; }
  std::size_t voxel_count() const { return res_.voxel_count(); }
  std::size_t channels() const { return layout_.count(); }
  std::uint32_t axis(int a) const { return a == 0 ? res_.nx : (a == 1 ? res_.ny : res_.nz); }
  double cell_size(int a) const { return cell_[a]; }

  std::size_t index(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
    return x + std::size_t{res_.nx} * (y + std::size_t{res_.ny} * z);
  }

  Vec3 voxel_center(std::size_t idx) const {
    const std::size_t x = idx % res_.nx;
    const std::size_t y = (idx / res_.nx) % res_.ny;
    const std::size_t z = idx / (std::size_t{res_.nx} * res_.ny);
    return {bounds_.lo.x + (static_cast<double>(x) + 0.5) * cell_[0],
            bounds_.lo.y + (static_cast<double>(y) + 0.5) * cell_[1],
            bounds_.lo.z + (static_cast<double>(z) + 0.5) * cell_[2]};
  }

  std::span<Real> voxel(std::size_t idx) { return {&params_[idx * channels()], channels()}; }
  std::span<const Real> voxel(std::size_t idx) const {
    return {&params_[idx * channels()], channels()};
  }

  Real& density_raw(std::size_t idx) { return voxel(idx)[ChannelLayout::density]; }
  Real density_raw(std::size_t idx) const { return voxel(idx)[ChannelLayout::density]; }
  Real& c_vi_raw(std::size_t idx, int ch) { return voxel(idx)[ChannelLayout::color_vi + ch]; }
  Real& gamma_raw(std::size_t idx) { return voxel(idx)[ChannelLayout::gamma]; }
  Real& sh_c0(std::size_t idx, std::size_t coef, int ch) {
    return voxel(idx)[ChannelLayout::sh_c0 + 3 * coef + ch];
  }
  Real& sh_vd(std::size_t idx, std::size_t coef, int ch) {
    return voxel(idx)[layout_.sh_vd() + 3 * coef + ch];
  }

  std::span<Real> params() { return params_; }
  std::span<const Real> params() const { return params_; }

  friend bool operator==(const VoxelField& a, const VoxelField& b) {
    return a.res_ == b.res_ && a.bounds_ == b.bounds_ && a.sh_ == b.sh_ &&
           a.params_ == b.params_;
  }

 private:
  GridResolution res_{};
  Bounds bounds_{};
  ShLayout sh_{};
  ChannelLayout layout_{};
  std::array<double, 3> cell_{};
  std::vector<Real> params_;
};

inline Bounds float_representable(Bounds b) {
  for (int a = 0; a < 3; ++a) {
    b.lo[a] = static_cast<double>(static_cast<float>(b.lo[a]));
    b.hi[a] = static_cast<double>(static_cast<float>(b.hi[a]));
  }
  return b;
}

inline constexpr double kInitDensityRaw = 0.1;
inline constexpr double kInitColorRaw = 0.0;
inline constexpr double kInitGammaRaw = 2.0;

/// Fresh field: density_raw 0.1, c_vi_raw 0, gamma_raw 2, SH blocks zero.
/// Initialization is constant, so the seed does not change the result.
template <class Real = float>
VoxelField<Real> init_field(GridResolution res, Bounds bounds, ShLayout sh = {},
                            std::uint64_t seed = 0) {
  (void)seed;
  VoxelField<Real> field(res, float_representable(bounds), sh);
  for (std::size_t v = 0; v < field.voxel_count(); ++v) {
    auto p = field.voxel(v);
    p[ChannelLayout::density] = Real(kInitDensityRaw);
    for (int ch = 0; ch < 3; ++ch) p[ChannelLayout::color_vi + ch] = Real(kInitColorRaw);
    p[ChannelLayout::gamma] = Real(kInitGammaRaw);
  }
  return field;
}

/// Eight voxels and trilinear weights around a point. Between the outermost
/// voxel centers and the bounds, coordinates clamp to the edge voxel.
struct CellStencil {
  std::array<std::uint32_t, 8> index{};
  std::array<double, 8> weight{};
  bool inside = false;
};

template <class Real>
CellStencil make_stencil(const VoxelField<Real>& field, const Vec3& p) {
  CellStencil s;
  if (!field.bounds().contains(p)) return s;
  s.inside = true;
  std::array<std::uint32_t, 3> base{};
  std::array<double, 3> frac{};
  for (int a = 0; a < 3; ++a) {
    const double u = (p[a] - field.bounds().lo[a]) / field.cell_size(a) - 0.5;
    const double max_base = static_cast<double>(field.axis(a) - 2);
    double b = std::floor(u);
    b = std::clamp(b, 0.0, max_base);
    base[a] = static_cast<std::uint32_t>(b);
    frac[a] = std::clamp(u - b, 0.0, 1.0);
  }
  for (int c = 0; c < 8; ++c) {
    const std::uint32_t dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    s.index[c] = static_cast<std::uint32_t>(
        field.index(base[0] + dx, base[1] + dy, base[2] + dz));
    s.weight[c] = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) *
                  (dz ? frac[2] : 1.0 - frac[2]);
  }
  return s;
}

template <class Real>
double interpolate_channel(const VoxelField<Real>& field, const CellStencil& s,
                           std::size_t channel) {
  double v = 0.0;
  for (int c = 0; c < 8; ++c) v += s.weight[c] * double(field.voxel(s.index[c])[channel]);
  return v;
}

/// Interpolates every channel into out (length field.channels()).
template <class Real>
void interpolate_all(const VoxelField<Real>& field, const CellStencil& s, double* out) {
  const std::size_t n = field.channels();
  std::fill(out, out + n, 0.0);
  for (int c = 0; c < 8; ++c) {
    const double w = s.weight[c];
    if (w == 0.0) continue;
    const Real* src = field.voxel(s.index[c]).data();
    for (std::size_t i = 0; i < n; ++i) out[i] += w * double(src[i]);
  }
}

/// Raw (pre-activation) parameters at a continuous point.
struct RawSample {
  bool inside = false;
  double density_raw = 0.0;
  Rgb c_vi_raw;
  double gamma_raw = 0.0;
  std::vector<double> sh_c0;  // L×3, coefficient-major
  std::vector<double> sh_vd;  // H×3
};

template <class Real>
RawSample sample_field(const VoxelField<Real>& field, const Vec3& p) {
  RawSample out;
  const auto& lay = field.layout();
  out.sh_c0.assign(3 * lay.sh_full, 0.0);
  out.sh_vd.assign(3 * lay.sh_high, 0.0);
  const CellStencil s = make_stencil(field, p);
  if (!s.inside) return out;
  std::vector<double> all(field.channels());
  interpolate_all(field, s, all.data());
  out.inside = true;
  out.density_raw = all[ChannelLayout::density];
  for (int ch = 0; ch < 3; ++ch) out.c_vi_raw[ch] = all[ChannelLayout::color_vi + ch];
  out.gamma_raw = all[ChannelLayout::gamma];
  std::copy_n(all.begin() + ChannelLayout::sh_c0, out.sh_c0.size(), out.sh_c0.begin());
  std::copy_n(all.begin() + lay.sh_vd(), out.sh_vd.size(), out.sh_vd.begin());
  return out;
}

struct RadianceSample {
  double sigma0 = 0.0;
  Rgb c0;
  Rgb c_vi;
  Rgb c_vd;
  double gamma = 0.0;
  Rgb c_final;
};

/// Activates interpolated raw channels. `raw` holds field.channels() values,
/// `basis` the full-degree SH basis of the viewing direction.
inline RadianceSample activate(const double* raw, const ChannelLayout& lay, const double* basis,
                               std::size_t low_count) {
  RadianceSample r;
  r.sigma0 = std::max(0.0, raw[ChannelLayout::density]);
  r.gamma = logistic(raw[ChannelLayout::gamma]);
  for (int ch = 0; ch < 3; ++ch) {
    r.c_vi[ch] = logistic(raw[ChannelLayout::color_vi + ch]);
    double z = 0.0;
    for (std::size_t j = 0; j < lay.sh_full; ++j) z += raw[ChannelLayout::sh_c0 + 3 * j + ch] * basis[j];
    r.c0[ch] = clamp01(z);
    double vd = 0.0;
    for (std::size_t j = 0; j < lay.sh_high; ++j) vd += raw[lay.sh_vd() + 3 * j + ch] * basis[low_count + j];
    r.c_vd[ch] = vd;
    r.c_final[ch] = r.gamma * r.c_vi[ch] + (1.0 - r.gamma) * r.c_vd[ch];
  }
  return r;
}

/// Density, colors, and blend factor at p seen along d. Outside the bounds
/// everything is zero (vacuum, black).
template <class Real>
RadianceSample eval_radiance(const VoxelField<Real>& field, const Vec3& p, const Direction& d) {
  const CellStencil s = make_stencil(field, p);
  if (!s.inside) return {};
  std::vector<double> raw(field.channels());
  interpolate_all(field, s, raw.data());
  std::array<double, sh_count(kMaxShDegree)> basis{};
  eval_sh_unchecked(d.x(), d.y(), d.z(), field.sh_layout().l_max, basis.data());
  return activate(raw.data(), field.layout(), basis.data(), field.sh_layout().low_count());
}

template <class Real>
RadianceSample eval_radiance(const VoxelField<Real>& field, const Vec3& p, const Vec3& d) {
  return eval_radiance(field, p, Direction::from(d));
}

// ---------------------------------------------------------------------------
// Checkpoint format (little endian):
//   "CFLD" | u32 version | u32 nx ny nz | f32 lo.xyz hi.xyz | u32 l_max split
//   then density_raw, c_vi_raw, gamma_raw, sh_c0, sh_vd as f32 arrays,
//   each looping voxels x-fastest with per-voxel components contiguous.

inline constexpr std::array<char, 4> kCheckpointMagic{'C', 'F', 'L', 'D'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<std::uint8_t>& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::span<const std::uint8_t> raw(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(ErrorKind::format, "checkpoint is truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct ArraySlice {
  std::size_t offset;
  std::size_t width;
};

inline std::array<ArraySlice, 5> checkpoint_arrays(const ChannelLayout& lay) {
  return {{{ChannelLayout::density, 1},
           {ChannelLayout::color_vi, 3},
           {ChannelLayout::gamma, 1},
           {ChannelLayout::sh_c0, 3 * lay.sh_full},
           {lay.sh_vd(), 3 * lay.sh_high}}};
}

}  // namespace detail

template <class Real>
std::vector<std::uint8_t> encode_checkpoint(const VoxelField<Real>& field) {
  std::vector<std::uint8_t> out;
  out.reserve(64 + field.params().size() * 4);
  out.insert(out.end(), kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, field.resolution().nx);
  detail::put_u32(out, field.resolution().ny);
  detail::put_u32(out, field.resolution().nz);
  for (int a = 0; a < 3; ++a) detail::put_f32(out, static_cast<float>(field.bounds().lo[a]));
  for (int a = 0; a < 3; ++a) detail::put_f32(out, static_cast<float>(field.bounds().hi[a]));
  detail::put_u32(out, static_cast<std::uint32_t>(field.sh_layout().l_max));
  detail::put_u32(out, static_cast<std::uint32_t>(field.sh_layout().split_degree));
  for (const auto& arr : detail::checkpoint_arrays(field.layout())) {
    for (std::size_t v = 0; v < field.voxel_count(); ++v) {
      const auto p = field.voxel(v);
      for (std::size_t i = 0; i < arr.width; ++i) {
        detail::put_f32(out, static_cast<float>(p[arr.offset + i]));
      }
    }
  }
  return out;
}

template <class Real = float>
VoxelField<Real> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in(bytes);
  const auto magic = in.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic.begin())) {
    fail(ErrorKind::format, "not a checkpoint (bad magic bytes)");
  }
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorKind::format, "unsupported checkpoint version " + std::to_string(version));
  }
  GridResolution res{in.u32(), in.u32(), in.u32()};
  Bounds b;
  for (int a = 0; a < 3; ++a) b.lo[a] = in.f32();
  for (int a = 0; a < 3; ++a) b.hi[a] = in.f32();
  ShLayout sh;
  sh.l_max = static_cast<int>(in.u32());
  sh.split_degree = static_cast<int>(in.u32());
  if (res.voxel_count() > (std::size_t{1} << 28)) fail(ErrorKind::format, "implausible grid size");
  VoxelField<Real> field(res, b, sh);
  for (const auto& arr : detail::checkpoint_arrays(field.layout())) {
    for (std::size_t v = 0; v < field.voxel_count(); ++v) {
      auto p = field.voxel(v);
      for (std::size_t i = 0; i < arr.width; ++i) p[arr.offset + i] = static_cast<Real>(in.f32());
    }
  }
  if (!in.done()) fail(ErrorKind::format, "trailing bytes after checkpoint payload");
  return field;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::io, "write failed for " + path);
}

template <class Real>
void save_checkpoint(const VoxelField<Real>& field, const std::string& path) {
  write_file_bytes(path, encode_checkpoint(field));
}

template <class Real = float>
VoxelField<Real> load_checkpoint(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_checkpoint<Real>(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

}  // namespace cleanfield
