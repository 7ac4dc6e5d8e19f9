#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "embedlab/glue.hpp"
#include "embedlab/moduli_lab.hpp"

using namespace embedlab;

namespace {

std::vector<DomainPair> pairs_in(double lo, double hi, std::size_t n, int dim, std::uint64_t seed = 7) {
  PairSamplerSpec ps;
  ps.t_min = lo;
  ps.t_max = hi;
  ps.dim = dim;
  ps.pairs = n;
  ps.seed = seed;
  return sample_pairs(ps);
}

}  // namespace

TEST(Schedules, WarmupValues) {
  ParamSchedule S = preset_schedule("warmup_l2", 2.0, 2.0);
  const double l4 = std::log(4.0);
  EXPECT_NEAR(S.r(4), 1.0 / (4.0 * l4 * l4), 1e-15);
  EXPECT_NEAR(S.r(4), 0.13007, 1e-4);
  EXPECT_NEAR(S.s(4), 1.0 / std::sqrt(S.r(4)), 1e-12);
  EXPECT_EQ(S.first, 2);
}

TEST(Schedules, CoarseValues) {
  ParamSchedule S = preset_schedule("coarse_l2", 2.0, 0.75);
  EXPECT_DOUBLE_EQ(S.r(8), 8.0);
  EXPECT_NEAR(S.eps(8), std::pow(8.0, -0.75), 1e-15);
  EXPECT_NEAR(S.s(8), std::pow(8.0, 1.75), 1e-12);
  EXPECT_NEAR(S.s(8), S.r(8) / S.eps(8), 1e-9);
}

TEST(Schedules, QuasiNormPresetAtQEqualsOne) {
  ParamSchedule S = preset_schedule("strong_qle1", 1.0, 2.0);
  for (long n : {2L, 5L, 40L}) {
    const double l = std::log(static_cast<double>(n));
    EXPECT_NEAR(S.r(n), 1.0 / (n * n * std::pow(l, 4.0)), 1e-12 * S.r(n));
  }
}

TEST(Schedules, InvalidParameters) {
  EXPECT_THROW(preset_schedule("warmup_l2", 3.0, 2.0), std::invalid_argument);
  EXPECT_THROW(preset_schedule("warmup_l2", 2.0, 1.0), std::invalid_argument);
  EXPECT_THROW(preset_schedule("coarse_l2", 2.0, 0.5), std::invalid_argument);
  EXPECT_THROW(preset_schedule("strong_qge2", 1.5, 2.0), std::invalid_argument);
  EXPECT_THROW(preset_schedule("nope", 2.0, 2.0), std::invalid_argument);
}

TEST(Glue, BasePointMapsToZero) {
  ParamSchedule S = preset_schedule("strong_qge2", 4.0, 2.0);
  std::vector<double> t0{0.2, -0.1};
  auto e = glue(gaussian_family(S, 5, GaussianBackend::exp(12, 2)), S, t0, 5);
  TruncatedVector v = e.evaluate(t0);
  for (double c : v.coords) EXPECT_EQ(c, 0.0);
  EXPECT_EQ(v.blocks(), 5u);
}

TEST(Glue, BlocksAreDifferencesOfFundamentalMaps) {
  ParamSchedule S = preset_schedule("strong_qge2", 4.0, 2.0);
  std::vector<double> t0{0.2, -0.1}, x{0.5, 0.9};
  auto fam = gaussian_family(S, 4, GaussianBackend::exp(12, 2));
  auto e = glue(fam, S, t0, 4);
  TruncatedVector v = e.evaluate(x);
  for (std::size_t j = 0; j < 4; ++j) {
    auto a = fam.block_coords(j, x), b = fam.block_coords(j, t0);
    auto blk = v.block(j);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(blk[i], a[i] - b[i]);
  }
}

TEST(Glue, SingleBlockEqualsBlockDistance) {
  ParamSchedule S = preset_schedule("warmup_l2", 2.0, 2.0);
  auto e = glue(gaussian_family(S, 1, GaussianBackend::kernel(3)), S, std::vector<double>(3, 0.0), 1);
  std::vector<double> x{1.0, 0.0, 0.0}, y{0.0, 2.0, 0.0};
  const double d = std::sqrt(5.0);
  EXPECT_DOUBLE_EQ(e.distance(x, y).delta, psi_distance_exact(d, S.kernel(S.first)));
}

TEST(Glue, DistanceIndependentOfBasePoint) {
  ParamSchedule S = preset_schedule("strong_qge2", 3.0, 2.0);
  auto fam = gaussian_family(S, 6, GaussianBackend::exp(14, 2));
  auto e1 = glue(fam, S, std::vector<double>{0.0, 0.0}, 6);
  auto e2 = glue(fam, S, std::vector<double>{0.7, -0.3}, 6);
  const ExponentRegime q = ExponentRegime::of(3.0);
  for (std::uint64_t i = 0; i < 50; ++i) {
    CounterRng rng(61, i, 0);
    std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-1, 1)}, y{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const double a = lp_distance(e1.evaluate(x), e1.evaluate(y), q);
    const double b = lp_distance(e2.evaluate(x), e2.evaluate(y), q);
    EXPECT_NEAR(a, b, 1e-10);
    EXPECT_NEAR(a, e1.distance(x, y).delta, 1e-10);
  }
}

TEST(Glue, WarmupUpperBoundAtUnitDistance) {
  ParamSchedule S = preset_schedule("warmup_l2", 2.0, 2.0);
  const long N = 200;
  auto e = glue(gaussian_family(S, N, GaussianBackend::kernel(2)), S, std::vector<double>(2, 0.0), N);
  std::vector<double> x{0.0, 0.0}, y{1.0, 0.0};
  const double bound = std::sqrt(S.eps.prefix_power_sum(2.0, e.last_index())) * (*S.gamma)(1.0);
  EXPECT_NEAR(pair_bounds(e, 1.0).upper, bound, 1e-12 * bound);
  EXPECT_LE(e.distance(x, y).delta, bound);
}

TEST(TruncationTail, ZeroDistance) {
  ParamSchedule S = preset_schedule("warmup_l2", 2.0, 2.0);
  auto e = glue(gaussian_family(S, 10, GaussianBackend::kernel(2)), S, std::vector<double>(2, 0.0), 10);
  EXPECT_EQ(e.truncation_tail_bound(0.0), 0.0);
}

TEST(TruncationTail, GeometricScheduleOracle) {
  ParamSchedule S;
  S.name = "geometric";
  S.kind = GluingKind::Strong;
  S.q = ExponentRegime::of(1.0);
  S.first = 1;
  S.eps = Sequence::geometric(1.0, 0.5, 1);
  S.mu = S.eps;
  S.r = Sequence::geometric(1.0, 0.5, 1);
  S.kernel = S.r;
  S.s = Sequence::power_log(1.0, 1.0, 0.0, 1);
  S.gamma = MonotoneFunction::power(1.0, 1.0);
  S.xi = MonotoneFunction::power(1.0, 1.0);
  auto e = glue(gaussian_family(S, 10, GaussianBackend::exp(6, 1)), S, std::vector<double>(1, 0.0), 10);
  EXPECT_NEAR(e.truncation_tail_bound(1.0), std::pow(2.0, -10), 1e-18);
}

TEST(TruncationTail, NonincreasingInN) {
  ParamSchedule S = preset_schedule("strong_qge2", 4.0, 2.0);
  double prev = kInf;
  for (long N : {1L, 5L, 20L, 100L, 400L}) {
    auto e = glue(gaussian_family(S, N, GaussianBackend::rff(16, 7, 2)), S, std::vector<double>(2, 0.0), N);
    const double t = e.truncation_tail_bound(3.0);
    EXPECT_LE(t, prev);
    prev = t;
  }
}

TEST(TruncationTail, BoundsTheOmittedMass) {
  ParamSchedule S = preset_schedule("warmup_l2", 2.0, 2.0);
  auto eN = glue(gaussian_family(S, 50, GaussianBackend::kernel(4)), S, std::vector<double>(4, 0.0), 50);
  auto eM = glue(gaussian_family(S, 400, GaussianBackend::kernel(4)), S, std::vector<double>(4, 0.0), 400);
  for (const auto& p : pairs_in(1e-2, 1e3, 300, 4)) {
    const double gap = eM.distance(p.x, p.y).power_sum - eN.distance(p.x, p.y).power_sum;
    EXPECT_GE(gap, -1e-12);
    EXPECT_LE(gap, eN.truncation_tail_bound(p.d) * (1.0 + 1e-9));
  }
}

TEST(PairBounds, ZeroDistanceIsTrivial) {
  ParamSchedule S = preset_schedule("warmup_l2", 2.0, 2.0);
  auto e = glue(gaussian_family(S, 20, GaussianBackend::kernel(2)), S, std::vector<double>(2, 0.0), 20);
  PairBounds b = pair_bounds(e, 0.0);
  EXPECT_EQ(b.upper, 0.0);
  EXPECT_EQ(b.lower(), 0.0);
  std::vector<DomainPair> same{DomainPair{{1.0, 1.0}, {1.0, 1.0}, 0.0}};
  EXPECT_EQ(per_pair_bounds_check(e, same).violations(), 0u);
}

TEST(PairBounds, WarmupMidRange) {
  ParamSchedule S = preset_schedule("warmup_l2", 2.0, 2.0);
  auto e = glue(gaussian_family(S, 200, GaussianBackend::kernel(16)), S, std::vector<double>(16, 0.0), 200);
  GluingCheckReport r = per_pair_bounds_check(e, pairs_in(10.0, 100.0, 1000, 16));
  EXPECT_EQ(r.violations(), 0u);
  EXPECT_GT(r.step_active, 0u);
}

TEST(PairBounds, StrongQ4WithRandomFeatures) {
  ParamSchedule S = preset_schedule("strong_qge2", 4.0, 2.0);
  auto e = glue(gaussian_family(S, 60, GaussianBackend::rff(2048, 7, 8)), S, std::vector<double>(8, 0.0), 60);
  GluingCheckReport r = per_pair_bounds_check(e, pairs_in(1.0, 1e3, 300, 8));
  EXPECT_EQ(r.violations(), 0u);
}

TEST(PairBounds, CoarseLemmaConstant) {
  ParamSchedule S = preset_schedule("coarse_l2", 2.0, 0.75);
  const long N = 200;
  auto e = glue(gaussian_family(S, N, GaussianBackend::kernel(16)), S, std::vector<double>(16, 0.0), N);
  GluingCheckReport r = per_pair_bounds_check(e, pairs_in(1.0, 150.0, 1000, 16));
  EXPECT_EQ(r.violations(), 0u);
  EXPECT_EQ(r.coarse_lemma_violations, 0u);
  EXPECT_GT(r.coarse_K, 0.0);
  // K = 2 * sum n^{-3/2} lies between 2 zeta(3/2) - tiny and the certified tail.
  EXPECT_GT(r.coarse_K, 2.0 * 2.612);
  EXPECT_LT(r.coarse_K, 2.0 * 2.62);
}

TEST(PairBounds, HalvedUpperIsCaught) {
  ParamSchedule S = preset_schedule("warmup_l2", 2.0, 2.0);
  auto e = glue(gaussian_family(S, 200, GaussianBackend::kernel(16)), S, std::vector<double>(16, 0.0), 200);
  GluingCheckOptions opt;
  opt.upper_scale = 0.5;
  EXPECT_GT(per_pair_bounds_check(e, pairs_in(1.0, 1e3, 500, 16), opt).upper_violations, 0u);
}

TEST(PredictedGap, CoarseExponents) {
  ParamSchedule S = preset_schedule("coarse_l2", 2.0, 0.75);
  auto lo = predicted_gap(S, GapKind::CoarseLower), up = predicted_gap(S, GapKind::CoarseUpper);
  const double a = 1e6, b = 1e9;
  const double slope_lo = std::log(lo(b) / lo(a)) / std::log(b / a);
  const double slope_up = std::log(up(b) / up(a)) / std::log(b / a);
  EXPECT_NEAR(slope_lo, 1.0 / (2.0 * 1.75), 2e-3);
  EXPECT_NEAR(slope_up, 0.5, 2e-3);
}

TEST(PredictedGap, ExponentialScalesGiveLogarithm) {
  ParamSchedule S = preset_schedule("strong_qge2", 4.0, 2.0);
  std::vector<double> pw;
  for (int n = 1; n <= 60; ++n) pw.push_back(std::ldexp(1.0, n));
  S.first = 1;
  S.s = Sequence::tabulated(pw, 1, [](double) { return 0.0; });
  auto lo = predicted_gap(S, GapKind::StrongLarge);
  for (int k : {3, 10, 40}) EXPECT_NEAR(lo(std::ldexp(1.0, k)), std::pow(static_cast<double>(k), 0.25), 1e-6);
}

TEST(PredictedGap, WarmupLargeScaleFollowsHInverse) {
  ParamSchedule S = preset_schedule("warmup_l2", 2.0, 2.0);
  auto lo = predicted_gap(S, GapKind::StrongLarge);
  for (double t : {50.0, 500.0, 5000.0}) {
    const double h = std::sqrt(h_ab(0.5, 1.0, t));
    EXPECT_NEAR(lo(t), h, 0.02 * h) << t;
  }
}
