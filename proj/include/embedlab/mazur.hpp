#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <span>
#include <stdexcept>
#include <vector>

#include "metric_core.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace embedlab {

// sgn(v) |v|^e with fast paths for the exponents the presets use.
inline double signed_pow(double v, double e) {
  if (e == 1.0 || v == 0.0) return v;
  double a = std::fabs(v);
  double r;
  if (e == 2.0)
    r = a * a;
  else if (e == 0.5)
    r = std::sqrt(a);
  else if (e == 4.0)
    r = (a * a) * (a * a);
  else if (e == 0.25)
    r = std::sqrt(std::sqrt(a));
  else
    r = std::pow(a, e);
  return v < 0.0 ? -r : r;
}

inline void mazur_map_inplace(std::span<double> x, double p, double q) {
  const double e = p / q;
  if (e == 1.0) return;
  if (e == 0.5) {  // the q = 4 hot path
    for (double& v : x) v = std::copysign(std::sqrt(std::fabs(v)), v);
    return;
  }
  for (double& v : x) v = signed_pow(v, e);
}

inline TruncatedVector mazur_map(const TruncatedVector& x, double p, double q) {
  if (!(p > 0.0) || !(q > 0.0)) throw std::invalid_argument("Mazur exponents must be positive");
  TruncatedVector out = x;
  mazur_map_inplace(out.coords, p, q);
  return out;
}

// ---------------------------------------------------------------------------
// Signed-power constant c_alpha on [-1,1]^2

namespace detail {

inline double signed_power_ratio(double a, double b, double alpha) {
  double num = std::fabs(signed_pow(a, alpha) - signed_pow(b, alpha));
  double den = std::pow(std::fabs(a - b), alpha);
  return num / den;
}

inline double certify_signed_power_constant(double alpha) {
  const int G = 2001;
  const double h = 2.0 / (G - 1);
  double best = kInf, ba = 0.0, bb = 0.0;
  std::vector<double> pw(G);
  for (int i = 0; i < G; ++i) pw[i] = signed_pow(-1.0 + i * h, alpha);
  // The ratio is symmetric in (a, b), so only i < j is scanned.
  for (int i = 0; i < G; ++i) {
    double a = -1.0 + i * h;
    for (int j = i + 1; j < G; ++j) {
      double b = -1.0 + j * h;
      double r = std::fabs(pw[i] - pw[j]) / std::pow(b - a, alpha);
      if (r < best) {
        best = r;
        ba = a;
        bb = b;
      }
    }
  }
  // Local zoom around the grid minimiser.
  double span = 2.0 * h;
  for (int round = 0; round < 12; ++round) {
    double ca = ba, cb = bb;
    for (int i = -10; i <= 10; ++i) {
      for (int j = -10; j <= 10; ++j) {
        double a = std::clamp(ca + span * i / 10.0, -1.0, 1.0);
        double b = std::clamp(cb + span * j / 10.0, -1.0, 1.0);
        if (a == b) continue;
        double r = signed_power_ratio(a, b, alpha);
        if (r < best) {
          best = r;
          ba = a;
          bb = b;
        }
      }
    }
    span *= 0.25;
  }
  return best;
}

}  // namespace detail

inline constexpr double kSignedPowerSafety = 0.99;

struct SignedPowerCertificate {
  double alpha;
  double raw_minimum;  // grid-plus-refinement minimum before the safety shrink
  double constant;     // raw_minimum * safety
};

inline SignedPowerCertificate signed_power_certificate(double alpha) {
  if (!(alpha >= 1.0)) throw std::invalid_argument("signed_power_constant requires alpha >= 1");
  if (alpha == 1.0) return {1.0, 1.0, 1.0};
  static std::mutex mu;
  static std::map<double, SignedPowerCertificate> cache;
  {
    std::lock_guard<std::mutex> lk(mu);
    auto it = cache.find(alpha);
    if (it != cache.end()) return it->second;
  }
  double raw = detail::certify_signed_power_constant(alpha);
  SignedPowerCertificate c{alpha, raw, raw * kSignedPowerSafety};
  std::lock_guard<std::mutex> lk(mu);
  cache.emplace(alpha, c);
  return c;
}

inline double signed_power_constant(double alpha) {
  return signed_power_certificate(alpha).constant;
}

// ---------------------------------------------------------------------------
// Two-sided Holder bounds for unit-sphere pairs
//
// With A = sum |x_i - y_i|^p and B = sum |M x_i - M y_i|^q:
//   c_lower * A^{e_lower} <= B <= c_upper * A^{e_upper}.

enum class ConstantProvenance { ClosedForm, NumericallyCertified, Exact };

inline const char* to_string(ConstantProvenance p) {
  switch (p) {
    case ConstantProvenance::ClosedForm: return "closed_form";
    case ConstantProvenance::NumericallyCertified: return "numerically_certified";
    case ConstantProvenance::Exact: return "exact";
  }
  return "?";
}

struct MazurConstants {
  double p = 2.0, q = 2.0;
  double c_lower = 1.0, e_lower = 1.0;
  double c_upper = 1.0, e_upper = 1.0;
  ConstantProvenance lower_provenance = ConstantProvenance::Exact;
  ConstantProvenance upper_provenance = ConstantProvenance::Exact;
  // True when p < q and the bounds were obtained by applying the q > p
  // estimates to the inverse map M_{q,p}.
  bool via_involution = false;

  double lower(double A) const { return A == 0.0 ? 0.0 : c_lower * std::pow(A, e_lower); }
  double upper(double A) const { return A == 0.0 ? 0.0 : c_upper * std::pow(A, e_upper); }
};

inline MazurConstants mazur_constants(double p, double q) {
  if (!(p > 0.0) || !(q > 0.0)) throw std::invalid_argument("Mazur exponents must be positive");
  MazurConstants m;
  m.p = p;
  m.q = q;
  if (p == q) return m;
  if (q < p) {
    const double al = p / q;
    m.c_lower = std::pow(signed_power_constant(al), q);
    m.e_lower = 1.0;
    m.c_upper = std::pow(al, q) * std::pow(2.0, 1.0 - q / p);
    m.e_upper = q / p;
    m.lower_provenance = ConstantProvenance::NumericallyCertified;
    m.upper_provenance = ConstantProvenance::ClosedForm;
  } else {
    // Swap roles: for M_{q,p} (q > p) the estimates read
    // c_{q/p}^p B <= A <= (q/p)^p 2^{1-p/q} B^{p/q}.
    const double al = q / p;
    m.c_upper = 1.0 / std::pow(signed_power_constant(al), p);
    m.e_upper = 1.0;
    m.c_lower = std::pow(std::pow(al, p) * std::pow(2.0, 1.0 - p / q), -q / p);
    m.e_lower = q / p;
    m.upper_provenance = ConstantProvenance::NumericallyCertified;
    m.lower_provenance = ConstantProvenance::ClosedForm;
    m.via_involution = true;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Sampling on the unit sphere of l_p^dim: normalised Gaussian in l_2, then M_{2,p}.

inline void sample_sphere(CounterRng& rng, double p, std::span<double> out) {
  double s = 0.0;
  for (double& v : out) {
    v = rng.normal();
    s += v * v;
  }
  s = std::sqrt(s);
  for (double& v : out) v /= s;
  mazur_map_inplace(out, 2.0, p);
}

// Rescale so that sum |x_i|^p = 1.
inline void normalize_lp(std::span<double> x, double p) {
  double s = 0.0;
  for (double v : x) s += pow_abs(v, p);
  double f = std::pow(s, -1.0 / p);
  for (double& v : x) v *= f;
}

struct MazurCheckReport {
  double p = 0, q = 0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  std::size_t dim = 0;
  std::size_t violations = 0;  // all kinds combined
  std::size_t lower_violations = 0, upper_violations = 0;
  std::size_t sphere_violations = 0, involution_violations = 0;
  // Smallest relative slack min(B/lower - 1, 1 - B/upper) over pairs; negative
  // means a violation.
  double worst_margin = kInf;
  double max_sphere_error = 0.0, max_involution_error = 0.0;
  MazurConstants constants;
};

struct MazurCheckOptions {
  double rel_tol = 1e-12;      // floating slack for the two-sided bounds
  double sphere_tol = 1e-12;
  double involution_tol = 1e-12;
};

// Pair kinds cycle through independent, antipodal and nearby pairs, so both
// the sharp (antipodal) and the local regimes are exercised.
inline MazurCheckReport mazur_bounds_check(double p, double q, std::size_t samples,
                                           std::uint64_t seed, std::size_t dim,
                                           const MazurConstants* override_constants = nullptr,
                                           MazurCheckOptions opt = {}) {
  if (p == q) throw std::invalid_argument("mazur_bounds_check requires p != q");
  if (samples == 0) throw std::invalid_argument("sample count must be positive");
  if (dim == 0) throw std::invalid_argument("dimension must be positive");
  MazurCheckReport rep;
  rep.p = p;
  rep.q = q;
  rep.samples = samples;
  rep.seed = seed;
  rep.dim = dim;
  rep.constants = override_constants ? *override_constants : mazur_constants(p, q);
  const MazurConstants C = rep.constants;

  struct PairResult {
    double margin, sphere_err, inv_err;
    bool lo_bad, up_bad;
  };
  std::vector<PairResult> res(samples);
  parallel_for(samples, [&](std::size_t i) {
    CounterRng rng(seed, i, 0x6d617a7572ULL);
    std::vector<double> x(dim), y(dim), mx, my;
    sample_sphere(rng, p, x);
    switch (i % 4) {
      case 2:
        for (std::size_t k = 0; k < dim; ++k) y[k] = -x[k];
        break;
      case 3: {
        double sigma = std::pow(10.0, rng.uniform(-6.0, 0.0));
        for (std::size_t k = 0; k < dim; ++k) y[k] = x[k] + sigma * rng.normal();
        normalize_lp(y, p);
        break;
      }
      default:
        sample_sphere(rng, p, y);
    }
    mx = x;
    my = y;
    mazur_map_inplace(mx, p, q);
    mazur_map_inplace(my, p, q);
    double A = 0.0, B = 0.0, nq = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      A += pow_abs(x[k] - y[k], p);
      B += pow_abs(mx[k] - my[k], q);
      nq += pow_abs(mx[k], q);
    }
    double inv = 0.0;
    std::vector<double> back = mx;
    mazur_map_inplace(back, q, p);
    for (std::size_t k = 0; k < dim; ++k) inv = std::max(inv, std::fabs(back[k] - x[k]));
    PairResult r{};
    double lo = C.lower(A), up = C.upper(A);
    r.lo_bad = B < lo * (1.0 - opt.rel_tol);
    r.up_bad = B > up * (1.0 + opt.rel_tol);
    double m1 = lo > 0.0 ? B / lo - 1.0 : kInf;
    double m2 = up > 0.0 ? 1.0 - B / up : kInf;
    r.margin = std::min(m1, m2);
    r.sphere_err = std::fabs(nq - 1.0);
    r.inv_err = inv;
    res[i] = r;
  });
  for (const auto& r : res) {
    rep.lower_violations += r.lo_bad;
    rep.upper_violations += r.up_bad;
    rep.sphere_violations += r.sphere_err > opt.sphere_tol;
    rep.involution_violations += r.inv_err > opt.involution_tol;
    rep.worst_margin = std::min(rep.worst_margin, r.margin);
    rep.max_sphere_error = std::max(rep.max_sphere_error, r.sphere_err);
    rep.max_involution_error = std::max(rep.max_involution_error, r.inv_err);
  }
  rep.violations = rep.lower_violations + rep.upper_violations + rep.sphere_violations +
                   rep.involution_violations;
  return rep;
}

// Pointwise upper estimate |a^alpha - b^alpha| <= alpha |a-b| max(|a|,|b|)^{alpha-1}
// and the certified lower constant, on random (a, b) in [-1,1]^2.
struct SignedPowerCheck {
  double alpha = 1.0;
  std::size_t samples = 0;
  std::size_t upper_violations = 0;
  std::size_t lower_violations = 0;
  double min_ratio = kInf;  // smallest observed |a^al - b^al| / |a-b|^al
};

inline SignedPowerCheck signed_power_check(double alpha, std::size_t samples,
                                           std::uint64_t seed) {
  SignedPowerCheck out;
  out.alpha = alpha;
  out.samples = samples;
  const double c = signed_power_constant(alpha);
  struct R {
    bool up_bad, lo_bad;
    double ratio;
  };
  std::vector<R> res(samples);
  parallel_for(samples, [&](std::size_t i) {
    CounterRng rng(seed, i, 0x7370ULL);
    double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
    R r{false, false, kInf};
    if (a != b) {
      double lhs = std::fabs(signed_pow(a, alpha) - signed_pow(b, alpha));
      double mx = std::max(std::fabs(a), std::fabs(b));
      double rhs = alpha * std::fabs(a - b) * std::pow(mx, alpha - 1.0);
      r.up_bad = lhs > rhs * (1.0 + 1e-12);
      r.ratio = lhs / std::pow(std::fabs(a - b), alpha);
      r.lo_bad = r.ratio < c;
    }
    res[i] = r;
  });
  for (const auto& r : res) {
    out.upper_violations += r.up_bad;
    out.lower_violations += r.lo_bad;
    out.min_ratio = std::min(out.min_ratio, r.ratio);
  }
  return out;
}

}  // namespace embedlab
