#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "embedlab/finite_geometry.hpp"
#include "embedlab/rng.hpp"

using namespace embedlab;

TEST(CubeDistance, Examples) {
  HammingCube c3(3, ExponentRegime::of(1.0));
  EXPECT_EQ(cube_distance(5, 5, c3), 0.0);
  EXPECT_EQ(cube_distance(0b000, 0b111, c3), 3.0);
  HammingCube c4(4, ExponentRegime::of(2.0));
  EXPECT_DOUBLE_EQ(cube_distance(0b0000, 0b1111, c4), 2.0);
  HammingCube q(4, ExponentRegime::of(0.5));
  EXPECT_EQ(cube_distance(0b0000, 0b1111, q), 4.0);
}

TEST(CubeDistance, Errors) {
  HammingCube c3(3, ExponentRegime::of(1.0));
  EXPECT_THROW(cube_distance(8, 0, c3), std::out_of_range);
  EXPECT_THROW(HammingCube(0, ExponentRegime::of(1.0)), std::invalid_argument);
  EXPECT_THROW(HammingCube(25, ExponentRegime::of(1.0)), std::length_error);
}

TEST(GkDistance, Examples) {
  EXPECT_EQ(gk_distance({1, 2, 3}, {3, 2, 1}), 0.0);
  EXPECT_EQ(gk_distance({1, 2, 3}, {2, 3, 4}), 1.0);
  EXPECT_EQ(gk_distance({1, 2, 3}, {4, 5, 6}), 3.0);
  EXPECT_THROW(gk_distance({1, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST(GkDistance, TriangleInequality) {
  for (int k = 1; k <= 3; ++k) {
    auto els = GkSpace(k, 8).elements();
    std::size_t bad = 0;
    for (const auto& a : els)
      for (const auto& b : els)
        for (const auto& c : els) bad += gk_distance(a, c) > gk_distance(a, b) + gk_distance(b, c);
    EXPECT_EQ(bad, 0u) << k;
  }
}

TEST(GkSpace, ElementCount) {
  EXPECT_EQ(GkSpace(2, 5).elements().size(), 10u);
  EXPECT_EQ(GkSpace(4, 12).elements().size(), 495u);
  EXPECT_THROW(GkSpace(3, 2), std::invalid_argument);
}

TEST(GkProbe, Examples) {
  auto a = gk_probe({1, 2}, 4), b = gk_probe({3, 4}, 4);
  EXPECT_EQ(lp_distance(a, a, ExponentRegime::of(1.0)), 0.0);
  EXPECT_EQ(gk_distance({1, 2}, {3, 4}), 2.0);
  EXPECT_EQ(lp_distance(a, b, ExponentRegime::of(1.0)), 4.0);
  EXPECT_THROW(gk_probe({0, 1}, 4), std::out_of_range);
}

TEST(GkProbe, AuditAllPairs) {
  for (double p : {0.5, 1.0, 2.0, 3.0})
    for (int k = 1; k <= 4; ++k)
      for (int n = k + 1; n <= 12; ++n) {
        ProbeAudit a = probe_audit(k, n, ExponentRegime::of(p));
        EXPECT_EQ(a.lipschitz_violations, 0u) << k << " " << n << " " << p;
        EXPECT_EQ(a.discreteness_violations, 0u) << k << " " << n << " " << p;
        EXPECT_GE(a.min_image_distance, 1.0);
        EXPECT_LE(a.max_lipschitz, 2.0 * (1.0 + 1e-12));
      }
  // Worst case attains factor 2 at p = 1.
  EXPECT_DOUBLE_EQ(probe_audit(2, 4, ExponentRegime::of(1.0)).max_lipschitz, 2.0);
}

TEST(EnfloLowerBound, Examples) {
  EXPECT_DOUBLE_EQ(enflo_lower_bound(4, ExponentRegime::of(1.0), 2.0), 2.0);
  EXPECT_DOUBLE_EQ(enflo_lower_bound(7, ExponentRegime::of(2.0), 2.0), 1.0);
  EXPECT_DOUBLE_EQ(enflo_lower_bound(9, ExponentRegime::of(2.0), 2.0), 1.0);
  EXPECT_DOUBLE_EQ(enflo_lower_bound(16, ExponentRegime::of(0.5), 2.0), 4.0);
  EXPECT_THROW(enflo_lower_bound(4, ExponentRegime::of(1.0), 0.5), std::invalid_argument);
  EXPECT_THROW(enflo_lower_bound(0, ExponentRegime::of(1.0), 2.0), std::invalid_argument);
}

TEST(Type2Certificate, IdentityIsExactlyOne) {
  for (int m = 1; m <= 10; ++m) {
    Type2Certificate c = enflo_type2_certificate([m](std::uint64_t u) { return cube_coordinates(u, m); }, m);
    const double half = std::ldexp(1.0, m - 1);
    EXPECT_EQ(c.diagonal_sum, m * half);
    EXPECT_EQ(c.edge_sum, m * half);
    EXPECT_NEAR(c.ratio, 1.0, 1e-12);
    EXPECT_FALSE(c.degenerate);
  }
}

TEST(Type2Certificate, ConstantMapIsDegenerate) {
  Type2Certificate c = enflo_type2_certificate([](std::uint64_t) { return std::vector<double>{1.0, 2.0}; }, 4);
  EXPECT_TRUE(c.degenerate);
  EXPECT_EQ(c.ratio, 0.0);
}

TEST(Type2Certificate, RaggedMapRejected) {
  EXPECT_THROW(enflo_type2_certificate([](std::uint64_t u) { return std::vector<double>(u == 3 ? 2 : 1); }, 2),
               std::invalid_argument);
}

TEST(Type2Certificate, RandomLinearMaps) {
  for (std::uint64_t t = 0; t < 100; ++t) {
    const int m = 2 + static_cast<int>(t % 7);
    const int D = 5;
    std::vector<double> M(static_cast<std::size_t>(D * m));
    CounterRng rng(19, t, 0);
    for (auto& v : M) v = rng.normal();
    auto f = [&](std::uint64_t u) {
      std::vector<double> out(D, 0.0);
      for (int i = 0; i < D; ++i)
        for (int k = 0; k < m; ++k)
          out[static_cast<std::size_t>(i)] += M[static_cast<std::size_t>(i * m + k)] * static_cast<double>((u >> k) & 1u);
      return out;
    };
    EXPECT_LE(enflo_type2_certificate(f, m).ratio, 1.0 + 1e-12) << t;
  }
}

TEST(Type2Certificate, RandomCoordinatewiseNonlinearMaps) {
  for (std::uint64_t t = 0; t < 100; ++t) {
    const int m = 2 + static_cast<int>(t % 7);
    CounterRng rng(29, t, 0);
    std::vector<double> table(static_cast<std::size_t>(1) << m);
    for (auto& v : table) v = rng.normal();
    auto f = [&](std::uint64_t u) {
      return std::vector<double>{std::tanh(table[u]), table[u] * table[u], std::sin(3.0 * table[u])};
    };
    EXPECT_LE(enflo_type2_certificate(f, m).ratio, 1.0 + 1e-12) << t;
  }
}

TEST(CubeIdentity, DistortionIsRootM) {
  for (int m = 2; m <= 10; ++m) {
    HammingCube c(m, ExponentRegime::of(1.0));
    EXPECT_NEAR(cube_identity_distortion(c).distortion, std::sqrt(static_cast<double>(m)), 1e-9) << m;
    EXPECT_NEAR(type2_distortion_bound(c), std::sqrt(static_cast<double>(m)), 1e-12);
    EXPECT_GE(cube_identity_distortion(c).distortion * (1.0 + 1e-12), enflo_lower_bound(m, c.p, 2.0));
  }
}
