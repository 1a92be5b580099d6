#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "cleanfield/sh.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace cleanfield;

namespace {

using cftest::oracle_sh;
using cftest::pinv_residual;

std::vector<double> reconstruct(std::span<const double> k, const DirectionSet& dirs, int l_max) {
  return cftest::oracle_reconstruct(k, dirs, l_max);
}

std::array<ShFit, 3> fits_from(const std::vector<double>& k, int l_max) {
  std::array<ShFit, 3> fits;
  for (auto& f : fits) {
    f.coefficients = k;
    f.l_max = l_max;
  }
  return fits;
}

}  // namespace

TEST(ShBasis, PoleValues) {
  const auto b1 = eval_sh_basis(Vec3{0, 0, 1}, 1).values;
  ASSERT_EQ(b1.size(), 4u);
  EXPECT_NEAR(b1[0], 0.2820948, 1e-7);
  EXPECT_NEAR(b1[1], 0.0, 1e-12);
  EXPECT_NEAR(b1[2], 0.4886025, 1e-7);
  EXPECT_NEAR(b1[3], 0.0, 1e-12);

  const auto b0 = eval_sh_basis(Vec3{0, 0, 1}, 0).values;
  ASSERT_EQ(b0.size(), 1u);
  EXPECT_NEAR(b0[0], 0.5 / std::sqrt(kPi), 1e-15);
}

TEST(ShBasis, LengthMatchesDegree) {
  std::mt19937_64 rng(3);
  for (int l = 0; l <= kMaxShDegree; ++l) {
    EXPECT_EQ(eval_sh_basis(cftest::random_direction(rng), l).values.size(), std::size_t((l + 1) * (l + 1)));
  }
  EXPECT_EQ(eval_sh_basis(cftest::random_direction(rng), 2).values.size(), 9u);
}

TEST(ShBasis, RejectsNonUnitDirectionAndBadDegree) {
  try {
    eval_sh_basis(Vec3{0, 0, 1.01}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
  }
  EXPECT_NO_THROW(eval_sh_basis(Vec3{0, 0, 1.0 + 5e-7}, 2));
  EXPECT_THROW(eval_sh_basis(Vec3{0, 0, 1}, 5), Error);
  EXPECT_THROW(eval_sh_basis(Vec3{0, 0, 1}, -1), Error);
}

TEST(ShBasis, MatchesLegendreOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Direction d = cftest::random_direction(rng);
    const auto y = eval_sh_basis(d, kMaxShDegree).values;
    for (std::size_t j = 0; j < y.size(); ++j) EXPECT_NEAR(y[j], oracle_sh(j, d), 1e-12) << "index " << j;
  }
}

TEST(ShBasis, AdditionTheorem) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const Direction d = cftest::random_direction(rng);
    for (int l_max = 0; l_max <= kMaxShDegree; ++l_max) {
      const auto y = eval_sh_basis(d, l_max).values;
      double sum = 0.0, expected = 0.0;
      for (double v : y) sum += v * v;
      for (int l = 0; l <= l_max; ++l) expected += (2.0 * l + 1.0) / (4.0 * kPi);
      EXPECT_NEAR(sum, expected, 1e-9);
    }
  }
}

TEST(Directions, SingleAndNorms) {
  const auto one = sample_directions(1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_NEAR(norm(one[0].vec()), 1.0, 1e-12);

  const auto dirs = sample_directions(128);
  ASSERT_EQ(dirs.size(), 128u);
  for (const auto& d : dirs) EXPECT_NEAR(norm(d.vec()), 1.0, 1e-9);
  EXPECT_EQ(dirs, sample_directions(128));
  EXPECT_THROW(sample_directions(0), Error);
}

TEST(Directions, DiscreteGramNearIdentity) {
  const auto dirs = sample_directions(256);
  const std::size_t l = sh_count(3);
  std::vector<double> gram(l * l, 0.0);
  for (const auto& d : dirs) {
    const auto y = eval_sh_basis(d, 3).values;
    for (std::size_t a = 0; a < l; ++a) {
      for (std::size_t b = 0; b < l; ++b) gram[a * l + b] += y[a] * y[b];
    }
  }
  double worst = 0.0;
  for (std::size_t a = 0; a < l; ++a) {
    for (std::size_t b = 0; b < l; ++b) {
      const double g = 4.0 * kPi / 256.0 * gram[a * l + b];
      if (a != b) worst = std::max(worst, std::abs(g));
    }
  }
  EXPECT_LE(worst, 0.05);
}

TEST(FitSh, ConstantSignal) {
  const auto dirs = sample_directions(64);
  const std::vector<double> s(dirs.size(), 0.7);
  const ShFit fit = fit_sh(s, dirs, 2);
  ASSERT_EQ(fit.coefficients.size(), 9u);
  EXPECT_NEAR(fit.coefficients[0], 0.7 / 0.28209479177387814, 1e-9);
  for (std::size_t j = 1; j < 9; ++j) EXPECT_NEAR(fit.coefficients[j], 0.0, 1e-9);
  EXPECT_LE(fit.residual, 1e-10);
  EXPECT_GE(fit.residual, 0.0);
}

TEST(FitSh, ExactRecoveryInColumnSpace) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto dirs = sample_directions(128);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> k(sh_count(3));
    for (auto& v : k) v = u(rng);
    const ShFit fit = fit_sh(reconstruct(k, dirs, 3), dirs, 3);
    for (std::size_t j = 0; j < k.size(); ++j) EXPECT_NEAR(fit.coefficients[j], k[j], 1e-8);
  }
}

TEST(FitSh, UnderDeterminedAndSingular) {
  const auto dirs = sample_directions(8);
  try {
    fit_sh(std::vector<double>(8, 0.0), dirs, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::under_determined);
  }

  // Sixteen copies of one direction cannot separate sixteen harmonics.
  const DirectionSet same(16, Direction::normalize({1, 2, 3}));
  try {
    fit_sh(std::vector<double>(16, 0.5), same, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::singular_fit);
  }

  // Directions on one great circle miss every harmonic that vanishes there.
  DirectionSet equator;
  for (int i = 0; i < 40; ++i) equator.push_back(Direction::normalize({std::cos(0.3 * i), std::sin(0.3 * i), 0.0}));
  EXPECT_THROW(fit_sh(std::vector<double>(40, 0.5), equator, 2), Error);

  EXPECT_THROW(fit_sh(std::vector<double>(10, 0.0), sample_directions(64), 2), Error);
}

TEST(FitSh, ResidualNoWorseThanPseudoinverse) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  for (int l_max = 0; l_max <= 3; ++l_max) {
    for (std::size_t n : {std::size_t{20}, std::size_t{64}, std::size_t{128}}) {
      const auto dirs = sample_directions(n);
      std::vector<double> s(n);
      for (auto& v : s) v = u(rng);
      const ShFit fit = fit_sh(s, dirs, l_max);
      EXPECT_LE(fit.residual, pinv_residual(s, dirs, l_max) + 1e-9) << "l_max " << l_max << " n " << n;
    }
  }
}

TEST(SplitTargets, DcOnly) {
  const auto dirs = sample_directions(64);
  std::vector<double> k(sh_count(3), 0.0);
  k[0] = 0.7 / 0.28209479177387814;
  const auto t = split_targets(fits_from(k, 3), dirs, 1);
  ASSERT_EQ(t.c_vd_target.size(), dirs.size());
  for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(t.c_vi_target[ch], 0.7, 1e-12);
  for (const auto& c : t.c_vd_target) {
    for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(c[ch], 0.0, 1e-15);
  }
}

TEST(SplitTargets, ZeroFunction) {
  const auto dirs = sample_directions(32);
  const auto t = split_targets(fits_from(std::vector<double>(sh_count(2), 0.0), 2), dirs, 1);
  EXPECT_EQ(t.c_vi_target, (Rgb{0, 0, 0}));
  for (const auto& c : t.c_vd_target) EXPECT_EQ(c, (Rgb{0, 0, 0}));
}

TEST(SplitTargets, DegreeTwoOnly) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto dirs = sample_directions(256);
  std::vector<double> k(sh_count(3), 0.0);
  double kmax = 0.0;
  for (std::size_t j = 4; j < 9; ++j) {
    k[j] = u(rng);
    kmax = std::max(kmax, std::abs(k[j]));
  }
  const auto t = split_targets(fits_from(k, 3), dirs, 1);
  const auto full = reconstruct(k, dirs, 3);
  for (int ch = 0; ch < 3; ++ch) EXPECT_LE(std::abs(t.c_vi_target[ch]), 0.02 * kmax);
  for (std::size_t i = 0; i < dirs.size(); ++i) EXPECT_NEAR(t.c_vd_target[i].r, full[i], 1e-12);
}

TEST(SplitTargets, InvalidSplit) {
  const auto dirs = sample_directions(32);
  const auto fits = fits_from(std::vector<double>(sh_count(2), 0.1), 2);
  for (int split : {2, 3, -1}) {
    try {
      split_targets(fits, dirs, split);
      FAIL() << split;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::invalid_split);
    }
  }
}

TEST(SplitTargets, Linearity) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto dirs = sample_directions(64);
  for (int trial = 0; trial < 20; ++trial) {
    std::array<ShFit, 3> a = fits_from(std::vector<double>(16), 3), b = a, sum = a;
    for (int ch = 0; ch < 3; ++ch) {
      for (std::size_t j = 0; j < 16; ++j) {
        a[ch].coefficients[j] = u(rng);
        b[ch].coefficients[j] = u(rng);
        sum[ch].coefficients[j] = a[ch].coefficients[j] + b[ch].coefficients[j];
      }
    }
    for (int split : {0, 1, 2}) {
      const auto ta = split_targets(a, dirs, split);
      const auto tb = split_targets(b, dirs, split);
      const auto ts = split_targets(sum, dirs, split);
      for (int ch = 0; ch < 3; ++ch) {
        EXPECT_NEAR(ts.c_vi_target[ch], ta.c_vi_target[ch] + tb.c_vi_target[ch], 1e-10);
        for (std::size_t i = 0; i < dirs.size(); ++i) {
          EXPECT_NEAR(ts.c_vd_target[i][ch], ta.c_vd_target[i][ch] + tb.c_vd_target[i][ch], 1e-10);
        }
      }
    }
  }
}

TEST(SplitTargets, ViTargetApproachesDcTerm) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto dirs = sample_directions(256);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> k(16);
    double kmax = 0.0;
    for (auto& v : k) {
      v = u(rng);
      kmax = std::max(kmax, std::abs(v));
    }
    for (int split : {1, 2}) {
      const auto t = split_targets(fits_from(k, 3), dirs, split);
      EXPECT_LE(std::abs(t.c_vi_target.r - k[0] * 0.28209479177387814), 0.02 * kmax);
    }
  }
}
