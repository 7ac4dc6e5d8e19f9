#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "embedlab/mazur.hpp"

using namespace embedlab;

namespace {
const std::vector<double> kGrid{0.5, 1.0, 1.5, 2.0, 3.0, 4.0};
}

TEST(MazurMap, BasisVectorsAreFixed) {
  for (double p : kGrid)
    for (double q : kGrid) {
      TruncatedVector e({1.0, 0.0, 0.0});
      TruncatedVector m = mazur_map(e, p, q);
      EXPECT_EQ(m.coords, e.coords);
      TruncatedVector neg({0.0, -1.0});
      EXPECT_EQ(mazur_map(neg, p, q).coords, neg.coords);
    }
}

TEST(MazurMap, EuclideanToL1) {
  const double h = 1.0 / std::sqrt(2.0);
  TruncatedVector m = mazur_map(TruncatedVector({h, h}), 2.0, 1.0);
  EXPECT_NEAR(m.coords[0], 0.5, 1e-15);
  EXPECT_NEAR(m.coords[1], 0.5, 1e-15);
  EXPECT_NEAR(std::fabs(m.coords[0]) + std::fabs(m.coords[1]), 1.0, 1e-15);
}

TEST(MazurMap, InvolutionOnRandomVectors) {
  for (double p : kGrid)
    for (double q : kGrid) {
      for (std::uint64_t i = 0; i < 200; ++i) {
        CounterRng rng(5, i, 0);
        std::vector<double> x(16);
        sample_sphere(rng, p, x);
        TruncatedVector v(x);
        TruncatedVector back = mazur_map(mazur_map(v, p, q), q, p);
        for (std::size_t k = 0; k < x.size(); ++k) ASSERT_NEAR(back.coords[k], x[k], 1e-12);
      }
    }
}

TEST(MazurMap, RejectsNonPositiveExponent) {
  EXPECT_THROW(mazur_map(TruncatedVector({1.0}), 0.0, 1.0), std::invalid_argument);
}

TEST(SignedPowerConstant, AlphaOneIsExact) { EXPECT_EQ(signed_power_constant(1.0), 1.0); }

TEST(SignedPowerConstant, AlphaTwoRawMinimumIsOneHalf) {
  const auto c = signed_power_certificate(2.0);
  EXPECT_NEAR(c.raw_minimum, 0.5, 1e-3);
  EXPECT_NEAR(c.constant, c.raw_minimum * kSignedPowerSafety, 1e-15);
}

TEST(SignedPowerConstant, CertifiedBelowMonteCarloRatio) {
  for (double alpha : {1.5, 2.0, 3.0}) {
    SignedPowerCheck r = signed_power_check(alpha, 1000000, 17);
    EXPECT_EQ(r.lower_violations, 0u) << alpha;
    EXPECT_GE(r.min_ratio, signed_power_constant(alpha)) << alpha;
  }
}

TEST(SignedPowerConstant, PointwiseUpperEstimate) {
  for (double alpha : {1.0, 1.5, 2.0, 3.0}) {
    SignedPowerCheck r = signed_power_check(alpha, 1000000, 23);
    EXPECT_EQ(r.upper_violations, 0u) << alpha;
  }
}

TEST(SignedPowerConstant, RejectsAlphaBelowOne) {
  EXPECT_THROW(signed_power_constant(0.5), std::invalid_argument);
}

TEST(MazurConstants, ZeroDistanceGivesZeroBounds) {
  for (double p : kGrid)
    for (double q : kGrid) {
      MazurConstants c = mazur_constants(p, q);
      EXPECT_EQ(c.lower(0.0), 0.0);
      EXPECT_EQ(c.upper(0.0), 0.0);
    }
}

TEST(MazurConstants, ProvenanceAndInvolutionFlag) {
  MazurConstants down = mazur_constants(4.0, 2.0);
  EXPECT_FALSE(down.via_involution);
  EXPECT_EQ(down.upper_provenance, ConstantProvenance::ClosedForm);
  EXPECT_EQ(down.lower_provenance, ConstantProvenance::NumericallyCertified);
  MazurConstants up = mazur_constants(2.0, 4.0);
  EXPECT_TRUE(up.via_involution);
  EXPECT_EQ(up.e_lower, 2.0);
  EXPECT_EQ(up.e_upper, 1.0);
}

TEST(MazurBounds, EuclideanToL1HasNoViolations) {
  MazurCheckReport r = mazur_bounds_check(2.0, 1.0, 10000, 7, 16);
  EXPECT_EQ(r.violations, 0u);
  EXPECT_GE(r.worst_margin, 0.0);
}

TEST(MazurBounds, QuasiNormCaseHasNoViolations) {
  MazurCheckReport r = mazur_bounds_check(1.0, 0.5, 10000, 7, 16);
  EXPECT_EQ(r.violations, 0u);
}

TEST(MazurBounds, SphereAndInvolutionAcrossGrid) {
  for (double p : kGrid)
    for (double q : kGrid) {
      if (p == q) continue;
      MazurCheckReport r = mazur_bounds_check(p, q, 4000, 9, 16);
      EXPECT_EQ(r.sphere_violations, 0u) << p << " " << q;
      EXPECT_EQ(r.involution_violations, 0u) << p << " " << q;
      EXPECT_EQ(r.violations, 0u) << p << " " << q;
      EXPECT_LE(r.max_sphere_error, 1e-12);
    }
}

TEST(MazurBounds, HalvedUpperConstantIsCaught) {
  for (double p : kGrid)
    for (double q : kGrid) {
      if (p == q) continue;
      MazurConstants c = mazur_constants(p, q);
      c.c_upper *= 0.5;
      MazurCheckReport r = mazur_bounds_check(p, q, 4000, 9, 16, &c);
      EXPECT_GT(r.upper_violations, 0u) << p << " " << q;
    }
}

TEST(MazurBounds, EqualExponentsRejected) {
  EXPECT_THROW(mazur_bounds_check(2.0, 2.0, 10, 1, 4), std::invalid_argument);
}
