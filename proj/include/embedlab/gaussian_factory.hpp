#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mazur.hpp"
#include "metric_core.hpp"
#include "rng.hpp"

namespace embedlab {

// sqrt(2 (1 - exp(-r d^2))): distance between Gaussian images on the sphere.
inline double psi_distance_exact(double d, double r) {
  if (d < 0.0 || !(r > 0.0)) throw std::invalid_argument("psi_distance_exact: need d >= 0, r > 0");
  return std::sqrt(-2.0 * std::expm1(-r * d * d));
}

// Squared version, 2 (1 - exp(-r d^2)).
inline double psi_sqdistance_exact(double d, double r) { return -2.0 * std::expm1(-r * d * d); }

struct GaussianBackend {
  enum class Kind { KernelExact, TruncatedExp, RandomFeatures };
  Kind kind = Kind::RandomFeatures;
  int degree = 8;         // TruncatedExp
  int ambient_dim = 16;   // domain truncation
  int rff_dim = 4096;     // RandomFeatures
  std::uint64_t seed = 7;

  static GaussianBackend kernel(int ambient_dim = 16) {
    GaussianBackend b;
    b.kind = Kind::KernelExact;
    b.ambient_dim = ambient_dim;
    return b;
  }
  static GaussianBackend exp(int degree, int ambient_dim) {
    GaussianBackend b;
    b.kind = Kind::TruncatedExp;
    b.degree = degree;
    b.ambient_dim = ambient_dim;
    return b;
  }
  static GaussianBackend rff(int dim, std::uint64_t seed, int ambient_dim = 16) {
    GaussianBackend b;
    b.kind = Kind::RandomFeatures;
    b.rff_dim = dim;
    b.seed = seed;
    b.ambient_dim = ambient_dim;
    return b;
  }

  bool produces_coordinates() const { return kind != Kind::KernelExact; }
};

inline const char* to_string(GaussianBackend::Kind k) {
  switch (k) {
    case GaussianBackend::Kind::KernelExact: return "kernel";
    case GaussianBackend::Kind::TruncatedExp: return "exp";
    case GaussianBackend::Kind::RandomFeatures: return "rff";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Truncated exponential coordinates.
//
// Coordinates are indexed by multi-indices alpha with |alpha| <= N and read
// e^{-r|x|^2} (2r)^{|alpha|/2} x^alpha / sqrt(alpha!). This is the symmetric
// form of the tensor expansion: it has the same inner products, with each
// symmetric orbit of tensor entries merged into one coordinate.

inline constexpr std::size_t kDefaultExpMemoryCap = std::size_t{1} << 24;

class ExpFeatureMap {
 public:
  ExpFeatureMap(int degree, int ambient_dim, std::size_t cap = kDefaultExpMemoryCap)
      : degree_(degree), dim_(ambient_dim) {
    if (degree < 1 || ambient_dim < 1) throw std::invalid_argument("ExpFeatureMap: N, d >= 1");
    // count = C(N + d, d)
    double count = 1.0;
    for (int i = 1; i <= ambient_dim; ++i) count = count * (degree + i) / i;
    if (count > static_cast<double>(cap))
      throw std::length_error("TruncatedExp dimension exceeds memory cap");
    std::vector<int> alpha(static_cast<std::size_t>(dim_), 0);
    enumerate(alpha, 0, degree_);
  }

  int degree() const { return degree_; }
  int ambient_dim() const { return dim_; }
  std::size_t size() const { return order_.size(); }

  // Unit vector approximating psi_r(x), plus the certified residual of the
  // truncation (squared norm mass dropped before renormalising).
  std::pair<std::vector<double>, double> coordinates(std::span<const double> x,
                                                     double r) const {
    if (static_cast<int>(x.size()) != dim_) throw std::invalid_argument("ambient dimension mismatch");
    const double s2r = std::sqrt(2.0 * r);
    double nx2 = 0.0;
    for (double v : x) nx2 += v * v;
    // powers[k][e] = (sqrt(2r) x_k)^e
    std::vector<double> pw(static_cast<std::size_t>(dim_ * (degree_ + 1)));
    for (int k = 0; k < dim_; ++k) {
      double base = s2r * x[static_cast<std::size_t>(k)];
      double v = 1.0;
      for (int e = 0; e <= degree_; ++e) {
        pw[static_cast<std::size_t>(k * (degree_ + 1) + e)] = v;
        v *= base;
      }
    }
    const double pref = std::exp(-r * nx2);
    std::vector<double> out(order_.size());
    double norm2 = 0.0;
    for (std::size_t i = 0; i < order_.size(); ++i) {
      double v = coef_[i];
      const int* a = &exps_[i * static_cast<std::size_t>(dim_)];
      for (int k = 0; k < dim_; ++k) v *= pw[static_cast<std::size_t>(k * (degree_ + 1) + a[k])];
      out[i] = pref * v;
      norm2 += out[i] * out[i];
    }
    double residual = residual_bound(2.0 * r * nx2, degree_);
    double inv = 1.0 / std::sqrt(norm2);
    for (double& v : out) v *= inv;
    return {std::move(out), residual};
  }

  // e^{-u} sum_{j > N} u^j / j!, summed directly to avoid cancellation.
  static double residual_bound(double u, int N) {
    if (u == 0.0) return 0.0;
    double s = 0.0;
    double lu = std::log(u);
    for (int j = N + 1; j < N + 10000; ++j) {
      double t = std::exp(-u + j * lu - std::lgamma(j + 1.0));
      s += t;
      if (j > u && t < 1e-300 + 1e-18 * s) break;
    }
    return s;
  }

 private:
  void enumerate(std::vector<int>& alpha, int k, int remaining) {
    if (k == dim_ - 1) {
      for (int e = 0; e <= remaining; ++e) {
        alpha[static_cast<std::size_t>(k)] = e;
        push(alpha);
      }
      return;
    }
    for (int e = 0; e <= remaining; ++e) {
      alpha[static_cast<std::size_t>(k)] = e;
      enumerate(alpha, k + 1, remaining - e);
    }
    alpha[static_cast<std::size_t>(k)] = 0;
  }

  void push(const std::vector<int>& alpha) {
    double lf = 0.0;
    int tot = 0;
    for (int e : alpha) {
      lf += std::lgamma(e + 1.0);
      tot += e;
    }
    order_.push_back(tot);
    coef_.push_back(std::exp(-0.5 * lf));
    exps_.insert(exps_.end(), alpha.begin(), alpha.end());
  }

  int degree_, dim_;
  std::vector<int> order_;
  std::vector<double> coef_;
  std::vector<int> exps_;
};

// ---------------------------------------------------------------------------
namespace detail {
// out[i] = cos(w a[i] + b[i]); compiled separately (src/cos_kernel.cpp).
void cos_affine(const double* a, double w, const double* b, double* out, std::size_t n);
}  // namespace detail

// Random Fourier features.
//
// Directions g_i ~ N(0, I) are shared; block n uses w_i = sqrt(2 r_n) g_i and
// its own phases b_{n,i}. Everything is a function of (seed, i, n).

class RffFeatureMap {
 public:
  RffFeatureMap(int D, int ambient_dim, std::uint64_t seed)
      : D_(D), dim_(ambient_dim), seed_(seed) {
    if (D < 1) throw std::invalid_argument("RFF dimension must be >= 1");
    if (ambient_dim < 1) throw std::invalid_argument("ambient dimension must be >= 1");
    g_.resize(static_cast<std::size_t>(D) * static_cast<std::size_t>(dim_));
    for (int i = 0; i < D; ++i) {
      CounterRng rng(seed, static_cast<std::uint64_t>(i), 0x67ULL);
      for (int k = 0; k < dim_; ++k)
        g_[static_cast<std::size_t>(i) * dim_ + k] = rng.normal();
    }
  }

  int dim() const { return D_; }
  int ambient_dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }

  // Phases for block `block` (block 0 is the single-map case).
  std::vector<double> phases(std::uint64_t block) const {
    std::vector<double> b(static_cast<std::size_t>(D_));
    for (int i = 0; i < D_; ++i) {
      CounterRng rng(seed_, static_cast<std::uint64_t>(i), 0x7068000000ULL + block);
      b[static_cast<std::size_t>(i)] = 2.0 * std::numbers::pi * rng.uniform();
    }
    return b;
  }

  // proj_i = g_i . x
  void project(std::span<const double> x, std::span<double> proj) const {
    if (static_cast<int>(x.size()) != dim_) throw std::invalid_argument("ambient dimension mismatch");
    for (int i = 0; i < D_; ++i) {
      const double* g = &g_[static_cast<std::size_t>(i) * dim_];
      double s = 0.0;
      for (int k = 0; k < dim_; ++k) s += g[k] * x[static_cast<std::size_t>(k)];
      proj[static_cast<std::size_t>(i)] = s;
    }
  }

  // Unit vector sqrt(2/D) cos(sqrt(2r) proj + b), renormalised.
  void features_from_projection(std::span<const double> proj, double r,
                                std::span<const double> phase, std::span<double> out) const {
    detail::cos_affine(proj.data(), std::sqrt(2.0 * r), phase.data(), out.data(),
                       static_cast<std::size_t>(D_));
    const double n2 = sum_squares(out.first(static_cast<std::size_t>(D_)));
    // The sqrt(2/D) prefactor cancels under renormalisation.
    double inv = n2 > 0.0 ? 1.0 / std::sqrt(n2) : 0.0;
    for (int i = 0; i < D_; ++i) out[static_cast<std::size_t>(i)] *= inv;
  }

  std::vector<double> coordinates(std::span<const double> x, double r,
                                  std::uint64_t block = 0) const {
    std::vector<double> proj(static_cast<std::size_t>(D_)), out(static_cast<std::size_t>(D_));
    project(x, proj);
    auto b = phases(block);
    features_from_projection(proj, r, b, out);
    return out;
  }

 private:
  int D_, dim_;
  std::uint64_t seed_;
  std::vector<double> g_;
};

// ---------------------------------------------------------------------------
// Moduli constants for phi_n = M_{2,q} o psi_{r_n}

// (gamma_q, xi_q) exponent table by regime of q.
inline std::pair<double, double> moduli_exponents(double q) {
  if (q >= 2.0) return {1.0 / q, 0.5};
  if (q >= 1.0) return {0.5, 1.0 / q};
  return {q / 2.0, 1.0};
}

// Everything needed to turn A = |psi x - psi y|_2^2 into certified bounds on
// delta_q(phi x, phi y); m maps sum-of-q-th-powers to the block metric.
struct PhiConstants {
  double q = 2.0;
  MazurConstants mazur;
  double m = 0.5;  // 1/q when q >= 1, 1 when q < 1

  double metric_from_power_sum(double B) const { return m == 1.0 ? B : std::pow(B, m); }

  // Bounds on the block metric given the realised squared l2 distance A.
  double lower_from_A(double A) const { return metric_from_power_sum(mazur.lower(A)); }
  double upper_from_A(double A) const { return metric_from_power_sum(mazur.upper(A)); }

  // omega_n(t) <= eps(r) * gamma(t), eps(r) = r^{e_up m},
  // gamma(t) = [c_up 2^{e_up}]^m t^{2 e_up m}.
  double eps_exponent() const { return mazur.e_upper * m; }
  double gamma_coef() const { return std::pow(mazur.c_upper * std::pow(2.0, mazur.e_upper), m); }
  // rho_n(t) >= mu(r) * xi(t) on r t^2 <= 1, mu(r) = r^{e_lo m},
  // xi(t) = [c_lo (2/e)^{e_lo}]^m t^{2 e_lo m}.
  double mu_exponent() const { return mazur.e_lower * m; }
  double xi_coef() const {
    return std::pow(mazur.c_lower * std::pow(2.0 / std::numbers::e, mazur.e_lower), m);
  }
  // Threshold constant delta_q: value of the lower bound at A = 2(e-1)/e.
  double delta() const { return lower_from_A(2.0 * (std::numbers::e - 1.0) / std::numbers::e); }
};

inline PhiConstants phi_constants(double q) {
  PhiConstants c;
  c.q = q;
  c.mazur = mazur_constants(2.0, q);
  c.m = q >= 1.0 ? 1.0 / q : 1.0;
  return c;
}

struct FundamentalMapSpec {
  long n = 1;
  double r = 1.0;
  double q = 2.0;
  GaussianBackend backend;
  std::pair<double, double> exponents() const { return moduli_exponents(q); }
};

struct PhiEnvelope {
  double lower = 0.0;        // certified lower bound at distance t (exact kernel)
  double upper = 0.0;        // certified upper bound at distance t (exact kernel)
  double upper_power = 0.0;  // r^{gamma_q} t^{2 gamma_q} form, all t
  double lower_power = 0.0;  // r^{xi_q} t^{2 xi_q} form, valid when r t^2 <= 1
  bool lower_power_valid = false;
  double threshold = 0.0;    // delta_q when r t^2 >= 1
  bool threshold_valid = false;
};

inline PhiEnvelope phi_moduli_envelope(const FundamentalMapSpec& spec, double t) {
  if (t < 0.0) throw std::invalid_argument("t must be nonnegative");
  PhiEnvelope e;
  if (t == 0.0) return e;
  const PhiConstants C = phi_constants(spec.q);
  const double A = psi_sqdistance_exact(t, spec.r);
  e.lower = C.lower_from_A(A);
  e.upper = C.upper_from_A(A);
  e.upper_power = std::pow(spec.r, C.eps_exponent()) * C.gamma_coef() *
                  std::pow(t, 2.0 * C.eps_exponent());
  e.lower_power_valid = spec.r * t * t <= 1.0;
  e.lower_power = std::pow(spec.r, C.mu_exponent()) * C.xi_coef() *
                  std::pow(t, 2.0 * C.mu_exponent());
  e.threshold_valid = spec.r * t * t >= 1.0;
  e.threshold = C.delta();
  return e;
}

// Coordinates of phi_n(x) = M_{2,q}(psi_{r_n}(x)) for coordinate-producing
// backends. The feature maps are passed in so callers can share them.
inline std::vector<double> phi_map(std::span<const double> x, const FundamentalMapSpec& spec,
                                   const ExpFeatureMap* exp_map, const RffFeatureMap* rff_map) {
  std::vector<double> v;
  switch (spec.backend.kind) {
    case GaussianBackend::Kind::KernelExact:
      throw std::invalid_argument("KernelExact backend produces distances only");
    case GaussianBackend::Kind::TruncatedExp:
      if (!exp_map) throw std::invalid_argument("missing TruncatedExp feature map");
      v = exp_map->coordinates(x, spec.r).first;
      break;
    case GaussianBackend::Kind::RandomFeatures:
      if (!rff_map) throw std::invalid_argument("missing RFF feature map");
      v = rff_map->coordinates(x, spec.r, static_cast<std::uint64_t>(spec.n));
      break;
  }
  mazur_map_inplace(v, 2.0, spec.q);
  return v;
}

}  // namespace embedlab
