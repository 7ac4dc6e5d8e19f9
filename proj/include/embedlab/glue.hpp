#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gaussian_factory.hpp"
#include "mazur.hpp"
#include "metric_core.hpp"
#include "parallel.hpp"

namespace embedlab {

// ---------------------------------------------------------------------------
// Parameter schedules

enum class GluingKind { Strong, Coarse };

struct ParamSchedule {
  std::string name;
  GluingKind kind = GluingKind::Strong;
  ExponentRegime q = ExponentRegime::of(2.0);
  std::optional<double> beta, nu;
  long first = 1;  // first block index

  Sequence r, eps, s, mu;
  // Parameter handed to the fundamental maps of block n (Gaussian bandwidth
  // for Hilbert domains): r_n for strong schedules, (eps_n / r_n)^2 for coarse.
  Sequence kernel;
  double eta = 1.0;
  std::string eta_source;
  // Strong: omega_n(t) <= eps_n gamma(t); rho_n(t) >= mu_n xi(t) when every
  // block satisfies kernel_n t^2 <= 1.
  std::optional<MonotoneFunction> gamma, xi;
  // Coarse: delta_n <= eps_factor * eps_n whenever d <= r_n; blocks live on
  // unit spheres so delta_n <= block_diameter always.
  double eps_factor = 1.0;
  double block_diameter = 2.0;

  long index(std::size_t j) const { return first + static_cast<long>(j); }

  // Certified tail sum_{n > last} eps_n^q.
  double eps_tail(long last) const { return eps.tail_power_sum(q.p, last); }
};

inline double lq_power(double metric_value, ExponentRegime q) {
  return pow_abs(metric_value, q.p);
}

// Converts sum delta_n^q into Delta_q.
inline double lq_from_power_sum(double P, ExponentRegime q) {
  if (!q.is_norm() || q.p == 1.0) return P;
  if (q.p == 2.0) return std::sqrt(P);
  return std::pow(P, 1.0 / q.p);
}

inline ParamSchedule make_strong_schedule(std::string name, double q, double beta,
                                          double r_a, double r_b) {
  if (!(beta > 1.0)) throw std::invalid_argument("strong schedules require beta > 1");
  ParamSchedule S;
  S.name = std::move(name);
  S.kind = GluingKind::Strong;
  S.q = ExponentRegime::of(q);
  S.beta = beta;
  S.first = 2;  // log(1) = 0 would make r_1 undefined
  const PhiConstants C = phi_constants(q);
  const double ee = C.eps_exponent(), me = C.mu_exponent();
  S.r = Sequence::power_log(1.0, r_a, r_b, S.first);
  S.kernel = S.r;
  S.eps = Sequence::power_log(1.0, r_a * ee, r_b * ee, S.first);
  S.mu = Sequence::power_log(1.0, r_a * me, r_b * me, S.first);
  S.s = Sequence::power_log(1.0, -0.5 * r_a, -0.5 * r_b, S.first);
  S.eta = C.delta();
  S.eta_source = "derived_delta_q";
  const double gc = C.gamma_coef(), gx = 2.0 * ee;
  const double xc = C.xi_coef(), xx = 2.0 * me;
  S.gamma = MonotoneFunction::power(gc, gx);
  S.xi = MonotoneFunction::power(xc, xx);
  S.block_diameter = 2.0;  // d_q diameter of the unit sphere is 2 in both regimes
  return S;
}

inline ParamSchedule preset_schedule(const std::string& name, double q, double beta_or_nu) {
  if (name == "warmup_l2") {
    if (q != 2.0) throw std::invalid_argument("warmup_l2 is defined for q = 2");
    return make_strong_schedule(name, 2.0, beta_or_nu, -1.0, -beta_or_nu);
  }
  if (name == "strong_qge2") {
    if (!(q >= 2.0)) throw std::invalid_argument("strong_qge2 requires q >= 2");
    return make_strong_schedule(name, q, beta_or_nu, -1.0, -beta_or_nu);
  }
  if (name == "strong_1leqle2") {
    if (!(q >= 1.0 && q <= 2.0)) throw std::invalid_argument("strong_1leqle2 requires 1 <= q <= 2");
    return make_strong_schedule(name, q, beta_or_nu, -2.0 / q, -2.0 * beta_or_nu / q);
  }
  if (name == "strong_qle1") {
    if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("strong_qle1 requires 0 < q <= 1");
    return make_strong_schedule(name, q, beta_or_nu, -2.0 / (q * q),
                                -2.0 * beta_or_nu / (q * q));
  }
  if (name == "coarse_l2") {
    const double nu = beta_or_nu;
    if (!(nu > 0.5)) throw std::invalid_argument("coarse_l2 requires nu > 1/2");
    if (q != 2.0) throw std::invalid_argument("coarse_l2 is defined for q = 2");
    ParamSchedule S;
    S.name = name;
    S.kind = GluingKind::Coarse;
    S.q = ExponentRegime::of(2.0);
    S.nu = nu;
    S.first = 1;
    S.r = Sequence::power_log(1.0, 1.0, 0.0, 1);
    S.eps = Sequence::power_log(1.0, -nu, 0.0, 1);
    S.s = Sequence::power_log(1.0, 1.0 + nu, 0.0, 1);
    S.kernel = Sequence::power_log(1.0, -2.0 - 2.0 * nu, 0.0, 1);
    S.eta = std::sqrt(2.0 * (std::numbers::e - 1.0) / std::numbers::e);
    S.eta_source = "closed_form";
    // delta_n <= sqrt(2 t_n) d <= sqrt(2) eps_n for d <= r_n.
    S.eps_factor = std::numbers::sqrt2;
    S.block_diameter = 2.0;
    return S;
  }
  throw std::invalid_argument("unknown schedule: " + name);
}

// ---------------------------------------------------------------------------
// Families of fundamental maps

// phi_n = M_{2,q} o psi_{kernel_n} on R^dim.
class GaussianFamily {
 public:
  using Point = std::vector<double>;

  GaussianFamily(std::vector<double> bandwidths, double q, GaussianBackend backend,
                 std::vector<long> block_ids = {})
      : bw_(std::move(bandwidths)), q_(q), backend_(backend), ids_(std::move(block_ids)) {
    if (ids_.empty())
      for (std::size_t j = 0; j < bw_.size(); ++j) ids_.push_back(static_cast<long>(j) + 1);
    if (backend_.kind == GaussianBackend::Kind::KernelExact && q != 2.0)
      throw std::invalid_argument("KernelExact backend only realises q = 2 (Mazur step needs coordinates)");
    if (backend_.kind == GaussianBackend::Kind::TruncatedExp)
      exp_ = std::make_shared<ExpFeatureMap>(backend_.degree, backend_.ambient_dim);
    if (backend_.kind == GaussianBackend::Kind::RandomFeatures) {
      rff_ = std::make_shared<RffFeatureMap>(backend_.rff_dim, backend_.ambient_dim, backend_.seed);
      phases_.reserve(bw_.size());
      for (long id : ids_) phases_.push_back(rff_->phases(static_cast<std::uint64_t>(id)));
    }
  }

  std::size_t blocks() const { return bw_.size(); }
  ExponentRegime block_regime() const { return ExponentRegime::of(q_); }
  const GaussianBackend& backend() const { return backend_; }
  bool has_coordinates() const { return backend_.produces_coordinates(); }

  static double point_distance(const Point& x, const Point& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return std::sqrt(s);
  }

  // Coordinates of phi_n(x) for block j (unit vector in l_q).
  std::vector<double> block_coords(std::size_t j, const Point& x) const {
    FundamentalMapSpec spec{ids_[j], bw_[j], q_, backend_};
    if (rff_) {
      std::vector<double> proj(static_cast<std::size_t>(rff_->dim())), out(proj.size());
      rff_->project(x, proj);
      rff_->features_from_projection(proj, bw_[j], phases_[j], out);
      mazur_map_inplace(out, 2.0, q_);
      return out;
    }
    return phi_map(x, spec, exp_.get(), rff_.get());
  }

  // delta_n(phi_n x, phi_n y) for every block; also the realised squared
  // l2 distance of the psi images when `psi_sq` is given.
  void block_distances(const Point& x, const Point& y, std::span<double> out,
                       std::span<double> psi_sq = {}) const {
    const ExponentRegime qr = block_regime();
    if (backend_.kind == GaussianBackend::Kind::KernelExact) {
      const double d = point_distance(x, y);
      for (std::size_t j = 0; j < bw_.size(); ++j) {
        out[j] = psi_distance_exact(d, bw_[j]);
        if (!psi_sq.empty()) psi_sq[j] = psi_sqdistance_exact(d, bw_[j]);
      }
      return;
    }
    if (rff_) {
      const std::size_t D = static_cast<std::size_t>(rff_->dim());
      std::vector<double> px(D), py(D), fx(D), fy(D);
      rff_->project(x, px);
      rff_->project(y, py);
      for (std::size_t j = 0; j < bw_.size(); ++j) {
        rff_->features_from_projection(px, bw_[j], phases_[j], fx);
        rff_->features_from_projection(py, bw_[j], phases_[j], fy);
        if (!psi_sq.empty()) psi_sq[j] = power_sum(fx, fy, 2.0);
        mazur_map_inplace(fx, 2.0, q_);
        mazur_map_inplace(fy, 2.0, q_);
        out[j] = lp_metric(fx, fy, qr);
      }
      return;
    }
    for (std::size_t j = 0; j < bw_.size(); ++j) {
      auto ex = exp_->coordinates(x, bw_[j]).first;
      auto ey = exp_->coordinates(y, bw_[j]).first;
      if (!psi_sq.empty()) psi_sq[j] = power_sum(ex, ey, 2.0);
      mazur_map_inplace(ex, 2.0, q_);
      mazur_map_inplace(ey, 2.0, q_);
      out[j] = lp_metric(ex, ey, qr);
    }
  }

 private:
  static double lp_metric(std::span<const double> a, std::span<const double> b, ExponentRegime q) {
    return lq_from_power_sum(power_sum(a, b, q.p), q);
  }

  std::vector<double> bw_;
  double q_;
  GaussianBackend backend_;
  std::vector<long> ids_;
  std::shared_ptr<ExpFeatureMap> exp_;
  std::shared_ptr<RffFeatureMap> rff_;
  std::vector<std::vector<double>> phases_;
};

inline GaussianFamily gaussian_family(const ParamSchedule& S, long N, GaussianBackend backend) {
  std::vector<double> bw;
  std::vector<long> ids;
  for (long j = 0; j < N; ++j) {
    bw.push_back(S.kernel(S.index(static_cast<std::size_t>(j))));
    ids.push_back(S.index(static_cast<std::size_t>(j)));
  }
  return GaussianFamily(std::move(bw), S.q.p, backend, std::move(ids));
}

// ---------------------------------------------------------------------------
// Glued embedding phi(x) = (phi_n(x) - phi_n(t0))_{n <= N}

struct GluedDistance {
  double delta = 0.0;      // Delta_q
  double power_sum = 0.0;  // sum_n delta_n^q
};

template <class Family>
class GluedEmbedding {
 public:
  using Point = typename Family::Point;

  GluedEmbedding(Family family, ParamSchedule schedule, Point t0, long N)
      : family_(std::move(family)), S_(std::move(schedule)), t0_(std::move(t0)), N_(N) {
    if (N < 1) throw std::invalid_argument("truncation length N must be >= 1");
    if (family_.blocks() != static_cast<std::size_t>(N))
      throw std::invalid_argument("family block count differs from N");
    tail_ = S_.eps_tail(last_index());  // throws when not q-summable
    prefix_eps_ = S_.eps.prefix_power_sum(S_.q.p, last_index());
    if (S_.kind == GluingKind::Strong) prefix_mu_ = S_.mu.prefix_power_sum(S_.q.p, last_index());
  }

  const Family& family() const { return family_; }
  const ParamSchedule& schedule() const { return S_; }
  const Point& base_point() const { return t0_; }
  long N() const { return N_; }
  long last_index() const { return S_.first + N_ - 1; }
  // sum_{n > N} eps_n^q
  double tail_constant() const { return tail_; }
  double eps_prefix() const { return prefix_eps_; }
  double mu_prefix() const { return prefix_mu_; }

  TruncatedVector evaluate(const Point& x) const {
    if (!family_.has_coordinates())
      throw std::invalid_argument("family produces distances only; evaluate needs coordinates");
    std::vector<double> coords;
    std::vector<std::size_t> offs{0};
    for (std::size_t j = 0; j < family_.blocks(); ++j) {
      auto a = family_.block_coords(j, x);
      auto b = family_.block_coords(j, t0_);
      for (std::size_t i = 0; i < a.size(); ++i) coords.push_back(a[i] - b[i]);
      offs.push_back(coords.size());
    }
    return TruncatedVector(std::move(coords), std::move(offs));
  }

  void block_distances(const Point& x, const Point& y, std::span<double> out) const {
    family_.block_distances(x, y, out);
  }

  GluedDistance distance(const Point& x, const Point& y) const {
    std::vector<double> d(family_.blocks());
    family_.block_distances(x, y, d);
    GluedDistance g;
    for (double v : d) g.power_sum += lq_power(v, S_.q);
    g.delta = lq_from_power_sum(g.power_sum, S_.q);
    return g;
  }

  // Upper bound on the q-th-power mass dropped by truncation at distance d.
  double truncation_tail_bound(double d) const {
    if (d <= 0.0) return 0.0;
    if (S_.kind == GluingKind::Strong) {
      double g = (*S_.gamma)(d);
      return tail_ * lq_power(g, S_.q);
    }
    // Coarse: blocks with r_n < d can only be bounded by the diameter.
    long n = last_index() + 1;
    double s = 0.0;
    while (S_.r(n) < d) {
      s += lq_power(S_.block_diameter, S_.q);
      ++n;
    }
    return s + lq_power(S_.eps_factor, S_.q) * S_.eps_tail(n - 1);
  }

 private:
  Family family_;
  ParamSchedule S_;
  Point t0_;
  long N_;
  double tail_ = 0.0, prefix_eps_ = 0.0, prefix_mu_ = 0.0;
};

template <class Family>
GluedEmbedding<Family> glue(Family family, ParamSchedule schedule,
                            typename Family::Point t0, long N) {
  return GluedEmbedding<Family>(std::move(family), std::move(schedule), std::move(t0), N);
}

// ---------------------------------------------------------------------------
// Certified per-pair bounds

// Number of indices n in [first, last] with seq(n) <= d (seq nondecreasing).
inline long count_le(const Sequence& seq, long first, long last, double d) {
  long lo = first, hi = last + 1;  // first index with seq > d
  while (lo < hi) {
    long mid = lo + (hi - lo) / 2;
    if (seq(mid) <= d)
      lo = mid + 1;
    else
      hi = mid;
  }
  return lo - first;
}

// Number of indices n in [first, last] with seq(n) < d.
inline long count_lt(const Sequence& seq, long first, long last, double d) {
  long lo = first, hi = last + 1;
  while (lo < hi) {
    long mid = lo + (hi - lo) / 2;
    if (seq(mid) < d)
      lo = mid + 1;
    else
      hi = mid;
  }
  return lo - first;
}

struct PairBounds {
  double upper = kInf;        // on Delta_q
  double step_lower = 0.0;    // on Delta_q
  long k_step = 0;
  bool small_valid = false;
  double small_lower = 0.0;   // on Delta_q, when small_valid
  double lower() const { return small_valid ? std::max(step_lower, small_lower) : step_lower; }
};

// Bounds for a pair at exact domain distance d under a truncation at N.
template <class Family>
PairBounds pair_bounds(const GluedEmbedding<Family>& e, double d) {
  const ParamSchedule& S = e.schedule();
  const ExponentRegime q = S.q;
  PairBounds b;
  const long last = e.last_index();
  b.k_step = count_le(S.s, S.first, last, d);
  b.step_lower = lq_from_power_sum(static_cast<double>(b.k_step) * lq_power(S.eta, q), q);
  if (S.kind == GluingKind::Strong) {
    if (d == 0.0) {
      b.upper = 0.0;
    } else {
      b.upper = lq_from_power_sum(e.eps_prefix() * lq_power((*S.gamma)(d), q), q);
    }
    const double rmax = S.kernel(S.first);
    b.small_valid = rmax * d * d <= 1.0;
    if (b.small_valid)
      b.small_lower = lq_from_power_sum(e.mu_prefix() * lq_power((*S.xi)(d), q), q);
  } else {
    // Blocks with r_n < d: diameter bound; the rest: eps_factor * eps_n.
    const long k = count_lt(S.r, S.first, last, d);
    double P = static_cast<double>(k) * lq_power(S.block_diameter, q);
    double rest = 0.0;
    for (long n = S.first + k; n <= last; ++n) rest += lq_power(S.eps_factor * S.eps(n), q);
    b.upper = lq_from_power_sum(P + rest, q);
  }
  return b;
}

// Coarse-lemma form of the upper bound: Delta^q <= diam^q k + K with
// K = sum_{n >= 1} (eps_factor eps_n)^q (certified infinite sum).
inline double coarse_lemma_constant(const ParamSchedule& S) {
  const long M = std::min(S.first + 999, S.eps.last());
  return lq_power(S.eps_factor, S.q) * (S.eps.prefix_power_sum(S.q.p, M) + S.eps_tail(M));
}

struct DomainPair {
  std::vector<double> x, y;
  double d = 0.0;
};

struct GluingCheckReport {
  std::size_t pairs = 0;
  std::size_t upper_violations = 0;
  std::size_t coarse_lemma_violations = 0;
  std::size_t step_violations = 0;
  std::size_t small_violations = 0;
  std::size_t small_checked = 0;
  std::size_t step_active = 0;  // pairs with k >= 1
  double worst_upper_margin = kInf;   // min (upper - Delta)/upper
  double worst_lower_margin = kInf;   // min (Delta - lower)/lower over active lower bounds
  double coarse_K = 0.0;
  std::size_t violations() const {
    return upper_violations + coarse_lemma_violations + step_violations + small_violations;
  }
};

struct GluingCheckOptions {
  double rel_tol = 1e-9;
  // Multiplies the certified constants, for negative controls only.
  double upper_scale = 1.0;
  double lower_scale = 1.0;
};

struct PairCheck {
  bool up_bad = false, lemma_bad = false, step_bad = false, small_bad = false;
  bool small_checked = false, step_active = false;
  double up_margin = kInf, lo_margin = kInf;
};

// Checks one pair at domain distance d whose glued distance is g. K is the
// coarse-lemma constant (ignored for strong schedules).
template <class Family>
PairCheck check_pair(const GluedEmbedding<Family>& e, double d, const GluedDistance& g,
                     const GluingCheckOptions& opt, double K) {
  const ParamSchedule& S = e.schedule();
  PairBounds b = pair_bounds(e, d);
  PairCheck r;
  const double up = b.upper * opt.upper_scale;
  r.up_bad = g.delta > up * (1.0 + opt.rel_tol) + 1e-300;
  if (up > 0.0) r.up_margin = (up - g.delta) / up;
  if (S.kind == GluingKind::Coarse) {
    const long k = count_lt(S.r, S.first, e.last_index(), d);
    double bound = (lq_power(S.block_diameter, S.q) * static_cast<double>(k) + K) * opt.upper_scale;
    r.lemma_bad = g.power_sum > bound * (1.0 + opt.rel_tol);
  }
  const double step = b.step_lower * opt.lower_scale;
  if (b.k_step > 0) {
    r.step_active = true;
    r.step_bad = g.delta < step * (1.0 - opt.rel_tol);
    r.lo_margin = std::min(r.lo_margin, (g.delta - step) / step);
  }
  if (b.small_valid && d > 0.0) {
    r.small_checked = true;
    const double sl = b.small_lower * opt.lower_scale;
    r.small_bad = g.delta < sl * (1.0 - opt.rel_tol);
    if (sl > 0.0) r.lo_margin = std::min(r.lo_margin, (g.delta - sl) / sl);
  }
  return r;
}

inline void accumulate(GluingCheckReport& rep, const PairCheck& r) {
  rep.upper_violations += r.up_bad;
  rep.coarse_lemma_violations += r.lemma_bad;
  rep.step_violations += r.step_bad;
  rep.small_violations += r.small_bad;
  rep.small_checked += r.small_checked;
  rep.step_active += r.step_active;
  rep.worst_upper_margin = std::min(rep.worst_upper_margin, r.up_margin);
  rep.worst_lower_margin = std::min(rep.worst_lower_margin, r.lo_margin);
}

template <class Family, class Pair>
GluingCheckReport per_pair_bounds_check(const GluedEmbedding<Family>& e,
                                        const std::vector<Pair>& pairs,
                                        GluingCheckOptions opt = {}) {
  GluingCheckReport rep;
  rep.pairs = pairs.size();
  if (e.schedule().kind == GluingKind::Coarse) rep.coarse_K = coarse_lemma_constant(e.schedule());
  std::vector<PairCheck> res(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    res[i] = check_pair(e, pairs[i].d, e.distance(pairs[i].x, pairs[i].y), opt, rep.coarse_K);
  });
  for (const auto& r : res) accumulate(rep, r);
  return rep;
}

// Certified envelopes at t: a lower bound on inf_{d >= t} of the per-pair
// lower bound and the per-pair upper bound at t (nondecreasing in d).
struct CertifiedEnvelope {
  double lower = 0.0, upper = kInf;
};

template <class Family>
CertifiedEnvelope certified_envelope(const GluedEmbedding<Family>& e, double t) {
  PairBounds b = pair_bounds(e, t);
  CertifiedEnvelope c;
  c.upper = b.upper;
  // step_lower is nondecreasing; the small-distance bound only holds up to a
  // threshold, past which the step bound alone applies.
  c.lower = b.step_lower;
  if (b.small_valid) {
    const ParamSchedule& S = e.schedule();
    const double dv = 1.0 / std::sqrt(S.kernel(S.first));
    c.lower = std::max(c.lower, std::min(b.small_lower, pair_bounds(e, dv * (1.0 + 1e-12)).step_lower));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Predicted moduli

enum class GapKind { StrongLarge, StrongSmall, CoarseUpper, CoarseLower };

// s^-(t)^{1/q} (or s^-(t) for q <= 1) for StrongLarge / CoarseLower,
// gamma for StrongSmall, r^-(t)^{1/q} for CoarseUpper.
inline MonotoneFunction predicted_gap(const ParamSchedule& S, GapKind kind) {
  const double q = S.q.p;
  const double root = q >= 1.0 ? 1.0 / q : 1.0;
  auto inverse_of = [&](const Sequence& seq, const char* label) {
    auto ext = std::make_shared<MonotoneFunction>(MonotoneFunction::sequence_extension(seq));
    return MonotoneFunction::custom(
        [ext, root](double t) {
          double v = generalized_inverse(*ext, t);
          return std::pow(v, root);
        },
        0.0, kInf, label);
  };
  switch (kind) {
    case GapKind::StrongLarge:
    case GapKind::CoarseLower:
      return inverse_of(S.s, "s_inverse_root");
    case GapKind::CoarseUpper:
      return inverse_of(S.r, "r_inverse_root");
    case GapKind::StrongSmall:
      if (!S.gamma) throw std::invalid_argument("schedule has no gamma");
      return *S.gamma;
  }
  throw std::invalid_argument("unknown gap kind");
}

}  // namespace embedlab
