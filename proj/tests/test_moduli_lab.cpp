#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <vector>

#include "embedlab/finite_geometry.hpp"
#include "embedlab/glue.hpp"
#include "embedlab/moduli_lab.hpp"

using namespace embedlab;

namespace {

PairSamplerSpec spec(double lo, double hi, std::size_t n, int dim = 16, std::uint64_t seed = 7) {
  PairSamplerSpec s;
  s.t_min = lo;
  s.t_max = hi;
  s.pairs = n;
  s.dim = dim;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(SamplePairs, RealisedDistanceMatchesTarget) {
  for (const auto& p : sample_pairs(spec(1e-3, 1e3, 500))) {
    EXPECT_GE(p.d, 1e-3 * (1.0 - 1e-12));
    EXPECT_LE(p.d, 1e3 * (1.0 + 1e-12));
    EXPECT_NEAR(GaussianFamily::point_distance(p.x, p.y), p.d, 0.0);
  }
  EXPECT_THROW(sample_pairs(spec(1.0, 1.0, 10)), std::invalid_argument);
}

TEST(EstimateModuli, IdentityEnvelopes) {
  ModuliEstimate m = estimate_moduli(spec(1e-2, 1e2, 5000), 20, [](const DomainPair& p) { return p.d; });
  EXPECT_EQ(envelope_invariant_failures(m), 0u);
  // Binning slack: one bin width in log space either side.
  const double slack = std::pow(1e4, 1.0 / 20.0);
  for (std::size_t j = 0; j < m.bin_edges.size(); ++j) {
    const double t = m.bin_edges[j];
    if (!std::isnan(m.rho_hat[j])) {
      EXPECT_GE(m.rho_hat[j], t);
      EXPECT_LE(m.rho_hat[j], t * slack);
    }
    if (!std::isnan(m.omega_hat[j])) {
      EXPECT_LE(m.omega_hat[j], t);
      EXPECT_GE(m.omega_hat[j], t / slack);
    }
  }
}

TEST(EstimateModuli, SnowflakeSlopes) {
  ModuliEstimate m =
      estimate_moduli(spec(1e-1, 1e2, 20000), 30, [](const DomainPair& p) { return std::sqrt(p.d); });
  EXPECT_NEAR(fit_exponent(m, Envelope::Rho, 1e-1, 1e2).slope, 0.5, 0.02);
  EXPECT_NEAR(fit_exponent(m, Envelope::Omega, 1e-1, 1e2).slope, 0.5, 0.02);
}

TEST(EstimateModuli, WarmupSmallDistanceSlopes) {
  ParamSchedule S = preset_schedule("warmup_l2", 2.0, 2.0);
  auto e = glue(gaussian_family(S, 200, GaussianBackend::kernel(16)), S, std::vector<double>(16, 0.0), 200);
  ModuliEstimate m = estimate_moduli(spec(1e-3, 1e-1, 4000), 20,
                                     [&](const DomainPair& p) { return e.distance(p.x, p.y).delta; });
  EXPECT_NEAR(fit_exponent(m, Envelope::Rho, 1e-3, 1e-1).slope, 1.0, 0.1);
  EXPECT_NEAR(fit_exponent(m, Envelope::Omega, 1e-3, 1e-1).slope, 1.0, 0.1);
}

TEST(EstimateModuli, GapsAreNotInterpolated) {
  std::vector<double> d{1.0, 1.5, 900.0}, img{1.0, 1.5, 900.0};
  ModuliEstimate m = envelopes_from_samples(d, img, 1.0, 1000.0, 3);
  EXPECT_EQ(m.counts[1], 0u);
  EXPECT_TRUE(std::isnan(m.omega_hat[0]) == false);
  EXPECT_EQ(envelope_invariant_failures(m), 0u);
}

TEST(EstimateModuli, TooManyEmptyBinsIsAnError) {
  std::vector<double> d{1.0, 1.1}, img{1.0, 1.1};
  EXPECT_THROW(envelopes_from_samples(d, img, 1.0, 1000.0, 30, 0, 0.5), std::runtime_error);
}

TEST(EstimateModuli, DeterministicAcrossThreadCounts) {
  ParamSchedule S = preset_schedule("strong_qge2", 4.0, 2.0);
  auto e = glue(gaussian_family(S, 40, GaussianBackend::rff(256, 7, 16)), S, std::vector<double>(16, 0.0), 40);
  auto run = [&](unsigned threads) {
    set_threads(threads);
    return estimate_moduli(spec(1.0, 1e3, 2000), 30,
                           [&](const DomainPair& p) { return e.distance(p.x, p.y).delta; });
  };
  ModuliEstimate a = run(1), b = run(4);
  set_threads(1);
  ASSERT_EQ(a.rho_hat.size(), b.rho_hat.size());
  for (std::size_t j = 0; j < a.rho_hat.size(); ++j) {
    if (std::isnan(a.rho_hat[j])) {
      EXPECT_TRUE(std::isnan(b.rho_hat[j]));
    } else {
      EXPECT_EQ(a.rho_hat[j], b.rho_hat[j]);
    }
    if (std::isnan(a.omega_hat[j])) {
      EXPECT_TRUE(std::isnan(b.omega_hat[j]));
    } else {
      EXPECT_EQ(a.omega_hat[j], b.omega_hat[j]);
    }
  }
  EXPECT_EQ(a.counts, b.counts);
}

TEST(FitExponent, PurePowerData) {
  std::vector<double> t, v;
  for (int i = 0; i <= 20; ++i) {
    t.push_back(std::pow(10.0, i / 10.0));
    v.push_back(std::pow(t.back(), 0.5));
  }
  ExponentFit f = fit_loglog(t, v, 1.0, 100.0);
  EXPECT_NEAR(f.slope, 0.5, 1e-6);
  EXPECT_LT(f.residual_rms, 1e-12);
  EXPECT_EQ(f.points, 21u);
}

TEST(FitExponent, ConstantEnvelope) {
  std::vector<double> t, v;
  for (int i = 0; i <= 10; ++i) {
    t.push_back(std::pow(10.0, i / 5.0));
    v.push_back(3.0);
  }
  EXPECT_NEAR(fit_loglog(t, v, 1.0, 100.0).slope, 0.0, 1e-12);
}

TEST(FitExponent, RequiresFiveBinsAndOrderedRange) {
  std::vector<double> t{1, 2, 3, 4}, v{1, 2, 3, 4};
  EXPECT_THROW(fit_loglog(t, v, 1.0, 4.0), std::invalid_argument);
  ModuliEstimate m = envelopes_from_samples({1.0, 2.0}, {1.0, 2.0}, 1.0, 2.0, 1);
  EXPECT_THROW(fit_exponent(m, Envelope::Rho, 2.0, 1.0), std::invalid_argument);
}

TEST(Distortion, IsometryAndScaling) {
  std::vector<double> pts{0.0, 1.0, 3.0, 7.5};
  auto dom = [&](std::size_t i, std::size_t j) { return std::fabs(pts[i] - pts[j]); };
  EXPECT_DOUBLE_EQ(distortion(4, dom, dom).distortion, 1.0);
  EXPECT_NEAR(distortion(4, dom, [&](std::size_t i, std::size_t j) { return 7.0 * dom(i, j); }).distortion, 1.0,
              1e-15);
}

TEST(Distortion, HammingThreeCubeIntoEuclidean) {
  DistortionResult r = distortion(
      8, [](std::size_t i, std::size_t j) { return static_cast<double>(std::popcount(i ^ j)); },
      [](std::size_t i, std::size_t j) { return std::sqrt(static_cast<double>(std::popcount(i ^ j))); });
  EXPECT_NEAR(r.distortion, std::sqrt(3.0), 1e-15);
  EXPECT_DOUBLE_EQ(r.expansion, 1.0);
}

TEST(Distortion, RejectsNonInjectiveMaps) {
  auto dom = [](std::size_t i, std::size_t j) { return std::fabs(double(i) - double(j)); };
  EXPECT_THROW(distortion(3, dom, [](std::size_t, std::size_t) { return 0.0; }), std::invalid_argument);
  EXPECT_THROW(distortion(1, dom, dom), std::invalid_argument);
}

TEST(AustinBound, Examples) {
  EXPECT_EQ(austin_bound(1.0), 0.0);
  EXPECT_EQ(austin_bound(0.5), 0.5);
  EXPECT_THROW(austin_bound(0.0), std::invalid_argument);
  EXPECT_THROW(austin_bound(1.5), std::invalid_argument);
  // Hamming cubes with d_1 into a type-2 target: exponent 1 - 1/2.
  const double eta = std::log(enflo_lower_bound(4, ExponentRegime::of(1.0), 2.0)) / std::log(4.0);
  EXPECT_NEAR(austin_bound(eta), 0.5, 1e-15);
}
