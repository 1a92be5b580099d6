#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cleanfield/render.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace cleanfield;

namespace {

CorrectionParams absolute(double thres, int m) { return {thres, 1e-3, m, false}; }

DensityProfile profile_of(std::vector<double> sigma) {
  DensityProfile p;
  p.sigma = std::move(sigma);
  for (std::size_t k = 0; k < p.sigma.size(); ++k) {
    p.t.push_back(0.5 + static_cast<double>(k));
    p.delta.push_back(1.0);
  }
  return p;
}

using cftest::literal_correction;

VoxelField<double> empty_field(GridResolution res = {8, 8, 8}) {
  auto f = init_field<double>(res, Bounds{{-1, -1, -1}, {1, 1, 1}});
  for (std::size_t v = 0; v < f.voxel_count(); ++v) f.density_raw(v) = 0.0;
  return f;
}

// Opaque slab x in [lo, hi]; gray c_vi and gamma -> 1 everywhere.
void add_slab(VoxelField<double>& f, double lo, double hi, double sigma, double color_raw) {
  for (std::size_t v = 0; v < f.voxel_count(); ++v) {
    const Vec3 c = f.voxel_center(v);
    f.gamma_raw(v) = 60.0;
    for (int ch = 0; ch < 3; ++ch) f.c_vi_raw(v, ch) = color_raw;
    if (c.x >= lo && c.x <= hi) f.density_raw(v) = sigma;
  }
}

}  // namespace

TEST(SampleRay, BinCenters) {
  const Ray ray{{0, 0, 0}, Direction::normalize({0, 0, 1}), 0.0, 1.0};
  const DensityProfile p = sample_ray(ray, 4, false, 0);
  ASSERT_EQ(p.size(), 4u);
  const std::vector<double> t{0.125, 0.375, 0.625, 0.875};
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(p.t[k], t[k], 1e-15);
    EXPECT_NEAR(p.delta[k], 0.25, 1e-15);
    EXPECT_EQ(p.sigma[k], 0.0);
  }
}

TEST(SampleRay, StratifiedStaysInBins) {
  const Ray ray{{1, 2, 3}, Direction::normalize({1, 1, 0}), 0.3, 2.7};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const DensityProfile p = sample_ray(ray, 16, true, seed, seed * 7);
    const double w = (ray.far - ray.near) / 16.0;
    for (int k = 0; k < 16; ++k) {
      EXPECT_GE(p.t[k], ray.near + k * w);
      EXPECT_LE(p.t[k], ray.near + (k + 1) * w);
      EXPECT_GE(p.delta[k], 0.0);
    }
    EXPECT_EQ(p, sample_ray(ray, 16, true, seed, seed * 7));
  }
  EXPECT_NE(sample_ray(ray, 16, true, 1).t, sample_ray(ray, 16, true, 2).t);
}

TEST(SampleRay, RejectsBadInput) {
  const Ray ray{{0, 0, 0}, Direction::normalize({0, 0, 1}), 0.0, 1.0};
  try {
    sample_ray(ray, 1, false, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
  }
  EXPECT_THROW(sample_ray(Ray{{0, 0, 0}, Direction::normalize({0, 0, 1}), 1.0, 1.0}, 4, false, 0), Error);
  EXPECT_THROW(sample_ray(Ray{{0, 0, 0}, Direction::normalize({0, 0, 1}), -1.0, 1.0}, 4, false, 0), Error);
}

TEST(CorrectDensity, NoPeakIsUnchanged) {
  const auto p = profile_of({0, 0, 0, 0, 0});
  EXPECT_EQ(correct_density(p, absolute(1.0, 0)), p);
  const auto faint = profile_of({0.2, 0.5, 0.9, 0.1});
  EXPECT_EQ(correct_density(faint, absolute(1.0, 0)), faint);
}

TEST(CorrectDensity, HandTracedExamples) {
  const auto a = correct_density(profile_of({0.5, 0, 0, 4, 1, 3, 0, 0, 0.5}), absolute(2.0, 1));
  EXPECT_EQ(a.sigma, (std::vector<double>{0, 0, 0, 4, 1, 3, 0, 0, 0}));

  const auto b = correct_density(profile_of({0, 0, 9, 9, 9, 0, 0}), absolute(1.0, 0));
  EXPECT_EQ(b.sigma, (std::vector<double>{0, 0, 9, 9, 9, 0, 0}));

  // Floater in front becomes the front of the window and is kept.
  const auto c = correct_density(profile_of({0, 6, 0, 0, 0, 8, 8, 0, 2, 0}), absolute(1.0, 0));
  EXPECT_EQ(c.sigma, (std::vector<double>{0, 6, 0, 0, 0, 8, 8, 0, 2, 0}));
  const auto d = correct_density(profile_of({0.5, 6, 0, 0, 0, 8, 8, 0, 0.7, 0}), absolute(1.0, 0));
  EXPECT_EQ(d.sigma, (std::vector<double>{0, 6, 0, 0, 0, 8, 8, 0, 0, 0}));
}

TEST(CorrectDensity, MarginClampsAtEnds) {
  const auto p = profile_of({1, 1, 5, 1, 1});
  EXPECT_EQ(correct_density(p, absolute(2.0, 10)), p);
  EXPECT_EQ(correct_density(p, absolute(2.0, 0)).sigma, (std::vector<double>{0, 0, 5, 0, 0}));
}

TEST(CorrectDensity, RelativeThreshold) {
  // max 10, relative 0.1 -> threshold 1; strict comparison excludes the 1.
  const auto p = profile_of({0.5, 1.0, 10, 0, 2, 0, 0.9});
  const auto out = correct_density(p, CorrectionParams{0.1, 1e-3, 0, true});
  EXPECT_EQ(out.sigma, (std::vector<double>{0, 0, 10, 0, 2, 0, 0}));
  // Floor applies to very faint profiles.
  const auto faint = profile_of({0, 0.0005, 0.002, 0.0005, 0});
  EXPECT_EQ(correct_density(faint, CorrectionParams{0.1, 1e-3, 0, true}).sigma,
            (std::vector<double>{0, 0, 0.002, 0, 0}));
}

TEST(CorrectDensity, MatchesLiteralTranscription) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> sig(0.0, 10.0), thr(0.5, 8.0);
  std::uniform_int_distribution<int> len(1, 40), margin(0, 6), zero(0, 3);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> s(len(rng));
    for (auto& v : s) v = zero(rng) == 0 ? 0.0 : sig(rng);
    const double t = thr(rng);
    const int m = margin(rng);
    EXPECT_EQ(correct_density(profile_of(s), absolute(t, m)).sigma, literal_correction(s, t, m));
  }
}

TEST(CorrectDensity, IdempotentAndNonIncreasing) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> sig(0.0, 10.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> s(32);
    for (auto& v : s) v = sig(rng) * (sig(rng) > 6.0);
    for (const CorrectionParams& p : {absolute(3.0, 1), CorrectionParams{}, CorrectionParams{0.5, 1e-3, 0, true}}) {
      const DensityProfile in = profile_of(s);
      const DensityProfile once = correct_density(in, p);
      EXPECT_EQ(correct_density(once, p), once);
      EXPECT_EQ(once.t, in.t);
      EXPECT_EQ(once.delta, in.delta);
      for (std::size_t k = 0; k < s.size(); ++k) EXPECT_LE(once.sigma[k], in.sigma[k]);
    }
  }
}

TEST(CorrectDensity, ValidatesParams) {
  EXPECT_THROW(validate_correction(CorrectionParams{0.0, 1e-3, 2, true}), Error);
  EXPECT_THROW(validate_correction(CorrectionParams{1.5, 1e-3, 2, true}), Error);
  EXPECT_THROW(validate_correction(CorrectionParams{-1.0, 1e-3, 2, false}), Error);
  EXPECT_THROW(validate_correction(CorrectionParams{1.0, 1e-3, -1, false}), Error);
  EXPECT_NO_THROW(validate_correction(CorrectionParams{}));
}

TEST(Composite, Vacuum) {
  const std::vector<double> sigma(5, 0.0), delta(5, 0.3);
  const std::vector<Rgb> colors(5, Rgb{1, 1, 1});
  const auto r = composite(sigma, colors, delta);
  EXPECT_EQ(r.color, (Rgb{}));
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(r.weights[k], 0.0);
    EXPECT_EQ(r.transmittance[k], 1.0);
  }
}

TEST(Composite, SaturatedFirstSample) {
  const std::vector<double> sigma{50.0, 3.0, 7.0}, delta{1.0, 0.5, 0.5};
  const std::vector<Rgb> colors{{0.3, 0.6, 0.9}, {1, 0, 0}, {0, 1, 0}};
  const auto r = composite(sigma, colors, delta);
  EXPECT_NEAR(r.color.r, 0.3, 1e-9);
  EXPECT_NEAR(r.color.g, 0.6, 1e-9);
  EXPECT_NEAR(r.color.b, 0.9, 1e-9);
}

TEST(Composite, TwoSampleHandEvaluation) {
  const std::vector<double> sigma{std::log(2.0), std::log(2.0)}, delta{1.0, 1.0};
  const std::vector<Rgb> colors{{1, 0, 0}, {0, 1, 0}};
  const auto r = composite(sigma, colors, delta);
  EXPECT_NEAR(r.weights[0], 0.5, 1e-15);
  EXPECT_NEAR(r.weights[1], 0.25, 1e-15);
  EXPECT_NEAR(r.transmittance[1], 0.5, 1e-15);
  EXPECT_NEAR(r.color.r, 0.5, 1e-15);
  EXPECT_NEAR(r.color.g, 0.25, 1e-15);
  EXPECT_EQ(r.color.b, 0.0);
}

TEST(Composite, RejectsBadInput) {
  const std::vector<Rgb> c(2);
  EXPECT_THROW(composite(std::vector<double>{-1.0, 0.0}, c, std::vector<double>{1, 1}), Error);
  EXPECT_THROW(composite(std::vector<double>{1.0, 0.0}, c, std::vector<double>{1, -1}), Error);
  EXPECT_THROW(composite(std::vector<double>{1.0}, c, std::vector<double>{1, 1}), Error);
}

TEST(Composite, Invariants) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> sig(0.0, 20.0), del(0.0, 0.3), col(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + trial % 64;
    std::vector<double> sigma(n), delta(n);
    std::vector<Rgb> colors(n), swapped(n);
    for (std::size_t k = 0; k < n; ++k) {
      sigma[k] = sig(rng) * (col(rng) < 0.5);
      delta[k] = del(rng);
      colors[k] = {col(rng), col(rng), col(rng)};
      swapped[k] = {colors[k].b, colors[k].r, colors[k].g};
    }
    const auto r = composite(sigma, colors, delta);
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_GE(r.weights[k], 0.0);
      EXPECT_LE(r.weights[k], 1.0);
      sum += r.weights[k];
      if (k > 0) {
        EXPECT_LE(r.transmittance[k], r.transmittance[k - 1]);
      }
    }
    EXPECT_LE(sum, 1.0 + 1e-6);
    const auto s = composite(sigma, swapped, delta);
    EXPECT_EQ(s.color.r, r.color.b);
    EXPECT_EQ(s.color.g, r.color.r);
    EXPECT_EQ(s.color.b, r.color.g);
  }
}

TEST(Composite, QuadratureSplitConsistency) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 8;
    std::vector<double> sigma(n), delta(n);
    std::vector<Rgb> colors(n);
    for (std::size_t k = 0; k < n; ++k) {
      delta[k] = 0.01 + 0.09 * u(rng);
      sigma[k] = 0.1 * u(rng) / delta[k];
      colors[k] = {u(rng), u(rng), u(rng)};
    }
    const std::size_t split = trial % n;
    std::vector<double> s2, d2;
    std::vector<Rgb> c2;
    for (std::size_t k = 0; k < n; ++k) {
      const int parts = k == split ? 2 : 1;
      for (int i = 0; i < parts; ++i) {
        s2.push_back(sigma[k]);
        d2.push_back(delta[k] / parts);
        c2.push_back(colors[k]);
      }
    }
    const Rgb a = composite(sigma, colors, delta).color, b = composite(s2, c2, d2).color;
    for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(a[ch], b[ch], 1e-6);
  }
}

TEST(RenderRay, VacuumIsBlack) {
  const auto f = empty_field();
  const Ray ray{{-1, 0.1, 0.05}, Direction::normalize({1, 0, 0}), 0.0, 2.0};
  const PixelEstimate est = render_ray(f, ray, RenderOptions{});
  EXPECT_EQ(est.c_initial, (Rgb{}));
  EXPECT_EQ(est.c_final, (Rgb{}));
}

TEST(RenderRay, SingleSlabInvariantUnderCorrection) {
  auto f = empty_field({16, 4, 4});
  add_slab(f, 0.1, 0.4, 30.0, 0.8);
  const Ray ray{{-1, 0.1, 0.05}, Direction::normalize({1, 0, 0}), 0.0, 2.0};
  RenderOptions on, off;
  off.correction = false;
  const PixelEstimate a = render_ray(f, ray, on), b = render_ray(f, ray, off);
  EXPECT_EQ(a.c_final, b.c_final);
  EXPECT_NEAR(a.c_final.r, logistic(0.8), 2e-3);
}

TEST(RenderRay, FrontFloaterIsKept) {
  auto f = empty_field({32, 4, 4});
  add_slab(f, 0.4, 0.7, 30.0, 0.8);
  // A dense blob near the ray start with a different color.
  for (std::size_t v = 0; v < f.voxel_count(); ++v) {
    const Vec3 c = f.voxel_center(v);
    if (c.x > -0.72 && c.x < -0.62) {
      f.density_raw(v) = 8.0;
      for (int ch = 0; ch < 3; ++ch) f.c_vi_raw(v, ch) = -2.0;
    } else if (c.x < -0.5) {
      for (int ch = 0; ch < 3; ++ch) f.c_vi_raw(v, ch) = -2.0;
    }
  }
  const Ray ray{{-1, 0.1, 0.05}, Direction::normalize({1, 0, 0}), 0.0, 2.0};
  RenderOptions on, off;
  off.correction = false;
  const PixelEstimate a = render_ray(f, ray, on), b = render_ray(f, ray, off);
  EXPECT_EQ(a.c_final, b.c_final);
  // The blob is visible: the result is darker than the slab color alone.
  EXPECT_LT(a.c_final.r, logistic(0.8) - 0.05);
}

TEST(RenderRay, InvariantsOnRandomFields) {
  VoxelField<double> f(GridResolution{6, 6, 6}, Bounds{{-1, -1, -1}, {1, 1, 1}}, ShLayout{});
  std::mt19937_64 rng(33);
  cftest::randomize(f, rng, -2.0, 4.0);
  for (int i = 0; i < 50; ++i) {
    const Direction d = cftest::random_direction(rng);
    const Ray ray{d.vec() * -1.5, d, 0.0, 3.0};
    RenderOptions opts;
    opts.samples = 32;
    const PixelEstimate est = render_ray(f, ray, opts, i);
    double sum = 0.0;
    for (std::size_t k = 0; k < est.weights.size(); ++k) {
      EXPECT_GE(est.weights[k], 0.0);
      EXPECT_LE(est.weights[k], 1.0);
      sum += est.weights[k];
      if (k > 0) {
        EXPECT_LE(est.transmittance[k], est.transmittance[k - 1]);
      }
    }
    EXPECT_LE(sum, 1.0 + 1e-6);
  }
}

TEST(RenderImage, OnePixelUsesCenterRay) {
  CameraPose cam;
  cam.width = cam.height = 1;
  cam.focal = 10.0;
  cam.cx = cam.cy = 0.5;
  const auto [o, d] = cam.pixel_ray(0, 0);
  EXPECT_EQ(o, cam.position);
  EXPECT_EQ(d.vec(), (Vec3{0, 0, 1}));

  auto f = empty_field();
  add_slab(f, -1.0, 1.0, 20.0, 1.0);
  cam.position = {0.0, 0.0, -3.0};
  const Image img = render_image(f, cam, RenderOptions{});
  ASSERT_EQ(img.size(), 1u);
  EXPECT_EQ(img.at(0, 0), render_ray(f, *camera_ray(cam, 0, 0, f.bounds()), RenderOptions{}, 0).c_final);
}

TEST(RenderImage, VacuumIsBlackAndDeterministic) {
  const auto f = empty_field();
  const CameraPose cam = look_at({0, 0.5, -3}, {0, 0, 0}, {0, 1, 0}, 12, 9, 10.0);
  const Image img = render_image(f, cam, RenderOptions{});
  for (const Rgb& p : img.pixels()) EXPECT_EQ(p, (Rgb{}));

  VoxelField<double> g(GridResolution{6, 6, 6}, Bounds{{-1, -1, -1}, {1, 1, 1}}, ShLayout{});
  std::mt19937_64 rng(34);
  cftest::randomize(g, rng, -1.0, 3.0);
  RenderOptions opts;
  opts.stratified = true;
  opts.seed = 99;
  EXPECT_EQ(render_image(g, cam, opts), render_image(g, cam, opts));
  set_thread_count(1);
  const Image single = render_image(g, cam, opts);
  set_thread_count(0);
  EXPECT_EQ(single, render_image(g, cam, opts));
}

TEST(RenderImage, ZeroResolutionRejected) {
  const auto f = empty_field();
  CameraPose cam;
  cam.width = 0;
  try {
    render_image(f, cam, RenderOptions{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
  }
}

TEST(RenderImage, ViOnlyComposesViColor) {
  auto f = empty_field();
  add_slab(f, -0.2, 0.3, 25.0, 0.4);
  for (std::size_t v = 0; v < f.voxel_count(); ++v) f.gamma_raw(v) = 0.0;
  for (std::size_t v = 0; v < f.voxel_count(); ++v) f.sh_vd(v, 0, 0) = 0.9;
  const CameraPose cam = look_at({-3, 0.2, 0.1}, {0, 0, 0}, {0, 1, 0}, 6, 6, 8.0);
  RenderOptions vi;
  vi.mode = RenderMode::vi_only;
  const Image a = render_image(f, cam, vi), b = render_image(f, cam, RenderOptions{});
  EXPECT_NEAR(a.at(3, 3).g, logistic(0.4), 1e-3);
  EXPECT_NE(a, b);
}

TEST(Camera, LookAtAndClip) {
  const CameraPose cam = look_at({3, 1, -2}, {0.1, 0.2, 0.3}, {0, 1, 0}, 32, 24, 30.0);
  EXPECT_NO_THROW(validate_camera(cam));
  const Vec3 f = cam.forward();
  const Vec3 to = Vec3{0.1, 0.2, 0.3} - cam.position;
  EXPECT_NEAR(norm(cross(f, to)), 0.0, 1e-12);
  EXPECT_GT(dot(f, to), 0.0);
  // Image y points down: the up vector projects negatively on the y axis.
  EXPECT_LT(dot(cam.axis(1), Vec3{0, 1, 0}), 0.0);

  const Bounds box{{-1, -1, -1}, {1, 1, 1}};
  const auto span = clip_to_bounds({-3, 0, 0}, Direction::normalize({1, 0, 0}), box);
  ASSERT_TRUE(span);
  EXPECT_NEAR(span->first, 2.0, 1e-15);
  EXPECT_NEAR(span->second, 4.0, 1e-15);
  EXPECT_FALSE(clip_to_bounds({-3, 2, 0}, Direction::normalize({1, 0, 0}), box));
  EXPECT_FALSE(clip_to_bounds({-3, 0, 0}, Direction::normalize({-1, 0, 0}), box));
  const auto inside = clip_to_bounds({0, 0, 0}, Direction::normalize({0, 1, 0}), box);
  ASSERT_TRUE(inside);
  EXPECT_EQ(inside->first, 0.0);
}

TEST(Ppm, RoundTripAndBytes) {
  std::vector<Rgb> px{{0, 0.5, 1}, {1.2, -0.1, 0.25}, {0.002, 0.998, 0.5}, {0.3, 0.3, 0.3}};
  const Image img(2, 2, px);
  EXPECT_EQ(img.at(1, 0).r, 1.0);
  EXPECT_EQ(img.at(1, 0).g, 0.0);
  const auto bytes = encode_ppm(img);
  const std::string header = "P6\n2 2\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 12);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + header.size()), header);
  EXPECT_EQ(bytes[header.size() + 1], 128);  // lround(127.5)
  EXPECT_EQ(bytes[header.size() + 2], 255);
  EXPECT_EQ(bytes[header.size() + 6], 1);

  const Image back = decode_ppm(bytes);
  EXPECT_EQ(encode_ppm(back), bytes);
  cftest::TempDir dir("ppm");
  write_ppm(img, dir.file("a.ppm"));
  EXPECT_EQ(read_file_bytes(dir.file("a.ppm")), bytes);
  EXPECT_EQ(read_ppm(dir.file("a.ppm")), back);

  std::vector<std::uint8_t> bad(bytes);
  bad[1] = '3';
  EXPECT_THROW(decode_ppm(bad), Error);
  EXPECT_THROW(decode_ppm(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 1)), Error);
}
