#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "amenable.hpp"
#include "finite_geometry.hpp"
#include "gaussian_factory.hpp"
#include "glue.hpp"
#include "mazur.hpp"
#include "moduli_lab.hpp"
#include "report.hpp"

namespace embedlab {

// Resolved configuration of one run. Thread count and output paths are not
// part of it: they must not change any result.
struct RunConfig {
  std::string command;
  std::string suite;
  std::uint64_t seed = 7;
  // Gaussian backends
  std::string backend = "auto";  // auto: kernel for q = 2, rff otherwise
  int rff_dim = 4096;
  int exp_degree = 8;
  int ambient_dim = 16;
  // schedules
  std::string schedule = "warmup_l2";
  double beta = 2.0;
  double nu = 0.75;
  double q = 2.0;
  long terms = 200;
  std::size_t pairs = 0;  // 0: per-command default, see resolve_defaults
  int bins = 30;
  double t_min = 1e-3, t_max = 1e3;
  std::optional<double> fit_lo, fit_hi;
  // finite geometry
  int m = 8;
  double p = 1.0;
  double target_type = 2.0;
  int k = 4;
  int ground = 12;
  // groups
  std::string group = "z2";
  long n_max = 20;
  bool negative_control = false;
  // tolerance overrides
  double exp_tol = 1e-10;
  double rff_tol = 0.08;

  Json to_json() const {
    Json j;
    j["command"] = command;
    if (!suite.empty()) j["suite"] = suite;
    j["seed"] = seed;
    j["backend"] = backend;
    j["rff_dim"] = rff_dim;
    j["exp_degree"] = exp_degree;
    j["ambient_dim"] = ambient_dim;
    j["schedule"] = schedule;
    j["beta"] = beta;
    j["nu"] = nu;
    j["q"] = q;
    j["terms"] = terms;
    j["pairs"] = pairs;
    j["bins"] = bins;
    j["t_min"] = t_min;
    j["t_max"] = t_max;
    j["fit_lo"] = fit_lo ? Json(*fit_lo) : Json(nullptr);
    j["fit_hi"] = fit_hi ? Json(*fit_hi) : Json(nullptr);
    j["m"] = m;
    j["p"] = p;
    j["target_type"] = target_type;
    j["k"] = k;
    j["ground"] = ground;
    j["group"] = group;
    j["n_max"] = n_max;
    j["negative_control"] = negative_control;
    j["exp_tol"] = exp_tol;
    j["rff_tol"] = rff_tol;
    return j;
  }
};

inline std::string run_kind(const RunConfig& c) { return c.command == "verify" ? c.suite : c.command; }

// Fills the per-command pair count when none was given.
inline void resolve_defaults(RunConfig& c) {
  if (c.pairs != 0) return;
  const std::string k = run_kind(c);
  if (k == "mazur")
    c.pairs = 100000;
  else if (k == "kernel")
    c.pairs = 1000;
  else
    c.pairs = 2000;
}

struct SuiteResult {
  Json report;
  std::size_t violations = 0;
  std::string csv;  // moduli-style CSV when the run produces one
};

inline Json constants_json(const MazurConstants& c) {
  Json j;
  j["c_lower"] = c.c_lower;
  j["e_lower"] = c.e_lower;
  j["c_upper"] = c.c_upper;
  j["e_upper"] = c.e_upper;
  j["lower_provenance"] = to_string(c.lower_provenance);
  j["upper_provenance"] = to_string(c.upper_provenance);
  j["via_involution"] = c.via_involution;
  return j;
}

// ---------------------------------------------------------------------------
// Mazur

inline const std::vector<double>& mazur_grid() {
  static const std::vector<double> g{0.5, 1.0, 1.5, 2.0, 3.0, 4.0};
  return g;
}

inline SuiteResult run_mazur_suite(const RunConfig& cfg) {
  SuiteResult out;
  Json combos = Json::array();
  for (double p : mazur_grid())
    for (double q : mazur_grid()) {
      if (p == q) continue;
      MazurConstants c = mazur_constants(p, q);
      if (cfg.negative_control) c.c_upper *= 0.5;
      MazurCheckReport r = mazur_bounds_check(p, q, cfg.pairs, cfg.seed,
                                              static_cast<std::size_t>(cfg.ambient_dim), &c);
      Json j;
      j["p"] = p;
      j["q"] = q;
      j["samples"] = r.samples;
      j["seed"] = r.seed;
      j["dim"] = r.dim;
      j["violations"] = r.violations;
      j["lower_violations"] = r.lower_violations;
      j["upper_violations"] = r.upper_violations;
      j["sphere_violations"] = r.sphere_violations;
      j["involution_violations"] = r.involution_violations;
      j["worst_margin"] = json_number(r.worst_margin);
      j["max_sphere_error"] = r.max_sphere_error;
      j["max_involution_error"] = r.max_involution_error;
      j["constants_used"] = constants_json(c);
      combos.push_back(j);
      out.violations += r.violations;
    }
  Json sp = Json::array();
  for (double alpha : {4.0 / 3.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0}) {
    SignedPowerCheck s = signed_power_check(alpha, std::max<std::size_t>(cfg.pairs / 10, 1000), cfg.seed);
    SignedPowerCertificate cert = signed_power_certificate(alpha);
    Json j;
    j["alpha"] = alpha;
    j["samples"] = s.samples;
    j["certified_constant"] = cert.constant;
    j["grid_minimum"] = cert.raw_minimum;
    j["min_observed_ratio"] = json_number(s.min_ratio);
    j["upper_violations"] = s.upper_violations;
    j["lower_violations"] = s.lower_violations;
    sp.push_back(j);
    out.violations += s.upper_violations + s.lower_violations;
  }
  out.report["suite"] = "mazur";
  out.report["config"] = cfg.to_json();
  out.report["combinations"] = combos;
  out.report["signed_power"] = sp;
  out.report["violations"] = out.violations;
  return out;
}

// ---------------------------------------------------------------------------
// Kernel identity

inline int exp_degree_for(double u_max, double tol) {
  for (int N = 1; N < 400; ++N)
    if (ExpFeatureMap::residual_bound(u_max, N) < tol) return N;
  throw std::domain_error("no truncation degree reaches the residual target");
}

struct KernelSuiteOptions {
  int exp_dim = 3;
  double bandwidth = 0.5;
};

inline SuiteResult run_kernel_suite(const RunConfig& cfg, KernelSuiteOptions ko = {}) {
  SuiteResult out;
  const std::size_t n = cfg.pairs;
  const double r = ko.bandwidth;
  // TruncatedExp: points in [-1,1]^dim, degree chosen so every residual < 1e-14.
  const int dim = std::min(ko.exp_dim, 3);
  const double u_max = 2.0 * r * dim;
  const int N = exp_degree_for(u_max, 1e-14);
  ExpFeatureMap em(N, dim);
  std::vector<double> err_exp(n, 0.0), resid(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    CounterRng rng(cfg.seed, i, 0x6b65ULL);
    std::vector<double> x(static_cast<std::size_t>(dim)), y(x.size());
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    for (auto& v : y) v = rng.uniform(-1.0, 1.0);
    auto [fx, rx] = em.coordinates(x, r);
    auto [fy, ry] = em.coordinates(y, r);
    double d2 = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) d2 += (x[k] - y[k]) * (x[k] - y[k]);
    const double got = std::sqrt(power_sum(fx, fy, 2.0));
    err_exp[i] = std::fabs(got - psi_distance_exact(std::sqrt(d2), r));
    resid[i] = std::max(rx, ry);
  });
  double max_exp = 0.0, max_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    max_exp = std::max(max_exp, err_exp[i]);
    max_res = std::max(max_res, resid[i]);
  }
  std::size_t exp_viol = 0;
  for (double e : err_exp) exp_viol += e > cfg.exp_tol;
  // Random features in the ambient dimension, separations log-uniform in [0.01, 10].
  RffFeatureMap rf(cfg.rff_dim, cfg.ambient_dim, cfg.seed);
  PairSamplerSpec ps;
  ps.t_min = 1e-2;
  ps.t_max = 10.0;
  ps.dim = cfg.ambient_dim;
  ps.pairs = n;
  ps.seed = cfg.seed;
  auto pairs = sample_pairs(ps);
  auto phase = rf.phases(1);
  std::vector<double> err_rff(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    const std::size_t D = static_cast<std::size_t>(rf.dim());
    std::vector<double> px(D), py(D), fx(D), fy(D);
    rf.project(pairs[i].x, px);
    rf.project(pairs[i].y, py);
    rf.features_from_projection(px, r, phase, fx);
    rf.features_from_projection(py, r, phase, fy);
    double k = 0.0;
    for (std::size_t j = 0; j < D; ++j) k += fx[j] * fy[j];
    err_rff[i] = std::fabs(k - std::exp(-r * pairs[i].d * pairs[i].d));
  });
  double max_rff = 0.0;
  std::size_t rff_viol = 0;
  for (double e : err_rff) {
    max_rff = std::max(max_rff, e);
    rff_viol += e > cfg.rff_tol;
  }
  out.violations = exp_viol;  // the RFF error is statistical and reported separately
  out.report["suite"] = "kernel";
  out.report["config"] = cfg.to_json();
  out.report["bandwidth"] = r;
  Json je;
  je["ambient_dim"] = dim;
  je["degree"] = N;
  je["features"] = em.size();
  je["max_residual"] = max_res;
  je["max_distance_error"] = max_exp;
  je["tolerance"] = cfg.exp_tol;
  je["violations"] = exp_viol;
  out.report["truncated_exp"] = je;
  Json jr;
  jr["rff_dim"] = cfg.rff_dim;
  jr["ambient_dim"] = cfg.ambient_dim;
  jr["max_kernel_error"] = max_rff;
  jr["tolerance"] = cfg.rff_tol;
  jr["exceedances"] = rff_viol;
  jr["statistical"] = true;
  out.report["random_features"] = jr;
  out.report["violations"] = out.violations;
  out.report["statistical_exceedances"] = rff_viol;
  return out;
}

// ---------------------------------------------------------------------------
// Gluing

inline GaussianBackend backend_from(const RunConfig& cfg, double q) {
  std::string b = cfg.backend;
  if (b == "auto") b = q == 2.0 ? "kernel" : "rff";
  if (b == "kernel") return GaussianBackend::kernel(cfg.ambient_dim);
  if (b == "exp") return GaussianBackend::exp(cfg.exp_degree, cfg.ambient_dim);
  if (b == "rff") return GaussianBackend::rff(cfg.rff_dim, cfg.seed, cfg.ambient_dim);
  throw std::invalid_argument("unknown backend: " + cfg.backend);
}

inline ParamSchedule schedule_from(const RunConfig& cfg) {
  const double param = cfg.schedule == "coarse_l2" ? cfg.nu : cfg.beta;
  return preset_schedule(cfg.schedule, cfg.q, param);
}

inline Json schedule_json(const ParamSchedule& S, long N) {
  Json j;
  j["name"] = S.name;
  j["q"] = S.q.p;
  if (S.beta) j["beta"] = *S.beta;
  if (S.nu) j["nu"] = *S.nu;
  j["N"] = N;
  j["first"] = S.first;
  j["eta"] = S.eta;
  j["eta_source"] = S.eta_source;
  j["kind"] = S.kind == GluingKind::Strong ? "strong" : "coarse";
  return j;
}

inline Json gluing_report_json(const GluingCheckReport& r) {
  Json j;
  j["pairs"] = r.pairs;
  j["violations"] = r.violations();
  j["upper_violations"] = r.upper_violations;
  j["coarse_lemma_violations"] = r.coarse_lemma_violations;
  j["step_violations"] = r.step_violations;
  j["small_violations"] = r.small_violations;
  j["small_checked"] = r.small_checked;
  j["step_active"] = r.step_active;
  j["worst_upper_margin"] = json_number(r.worst_upper_margin);
  j["worst_lower_margin"] = json_number(r.worst_lower_margin);
  j["coarse_K"] = r.coarse_K;
  return j;
}

inline SuiteResult run_gluing_suite(const RunConfig& cfg) {
  SuiteResult out;
  ParamSchedule S = schedule_from(cfg);
  GaussianBackend B = backend_from(cfg, S.q.p);
  auto e = glue(gaussian_family(S, cfg.terms, B), S, std::vector<double>(static_cast<std::size_t>(cfg.ambient_dim), 0.0),
                cfg.terms);
  PairSamplerSpec ps;
  ps.t_min = cfg.t_min;
  ps.t_max = cfg.t_max;
  ps.dim = cfg.ambient_dim;
  ps.pairs = cfg.pairs;
  ps.seed = cfg.seed;
  GluingCheckOptions opt;
  if (cfg.negative_control) opt.upper_scale = 0.5;
  GluingCheckReport r = per_pair_bounds_check(e, sample_pairs(ps), opt);
  out.violations = r.violations();
  out.report["suite"] = "gluing";
  out.report["config"] = cfg.to_json();
  out.report["schedule"] = schedule_json(S, cfg.terms);
  out.report["backend"] = to_string(B.kind);
  out.report["kernel_step_statistical"] = B.kind == GaussianBackend::Kind::RandomFeatures;
  out.report["eps_prefix"] = e.eps_prefix();
  out.report["tail_bound"] = e.tail_constant();
  if (S.gamma) out.report["gamma_coefficient"] = phi_constants(S.q.p).gamma_coef();
  out.report["checks"] = gluing_report_json(r);
  out.report["violations"] = out.violations;
  return out;
}

// ---------------------------------------------------------------------------
// Moduli runs

struct FitWindows {
  double large_lo, large_hi;
  double small_lo, small_hi;
};

// Large-t window: from 2 up to a quarter of the last saturation scale
// (strong) or the sampled range (coarse); small-t window: up to a tenth of
// the first saturation scale.
inline FitWindows default_windows(const ParamSchedule& S, long N, double t_min, double t_max) {
  FitWindows w{};
  const long last = S.first + N - 1;
  w.large_lo = std::max(t_min, 2.0);
  w.large_hi = S.kind == GluingKind::Strong ? std::min(t_max, S.s(last) / 4.0) : t_max;
  w.small_lo = t_min;
  w.small_hi = std::min(t_max, S.s(S.first) / 10.0);
  return w;
}

inline SuiteResult run_moduli(const RunConfig& cfg) {
  SuiteResult out;
  ParamSchedule S = schedule_from(cfg);
  GaussianBackend B = backend_from(cfg, S.q.p);
  auto e = glue(gaussian_family(S, cfg.terms, B), S, std::vector<double>(static_cast<std::size_t>(cfg.ambient_dim), 0.0),
                cfg.terms);
  PairSamplerSpec ps;
  ps.t_min = cfg.t_min;
  ps.t_max = cfg.t_max;
  ps.dim = cfg.ambient_dim;
  ps.pairs = cfg.pairs;
  ps.seed = cfg.seed;
  auto pairs = sample_pairs(ps);
  const double K = S.kind == GluingKind::Coarse ? coarse_lemma_constant(S) : 0.0;
  std::vector<double> d(pairs.size()), img(pairs.size());
  std::vector<PairCheck> checks(pairs.size());
  GluingCheckOptions opt;
  if (cfg.negative_control) opt.upper_scale = 0.5;
  parallel_for(pairs.size(), [&](std::size_t i) {
    GluedDistance g = e.distance(pairs[i].x, pairs[i].y);
    d[i] = pairs[i].d;
    img[i] = g.delta;
    checks[i] = check_pair(e, pairs[i].d, g, opt, K);
  });
  GluingCheckReport rep;
  rep.pairs = pairs.size();
  rep.coarse_K = K;
  for (const auto& c : checks) accumulate(rep, c);
  double lo = cfg.t_min, hi = cfg.t_max;
  for (double v : d) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  ModuliEstimate m = envelopes_from_samples(d, img, lo, hi, cfg.bins, cfg.seed, 0.5);
  std::vector<ModuliRow> cert(m.bin_edges.size());
  std::size_t env_viol = 0;
  for (std::size_t j = 0; j < m.bin_edges.size(); ++j) {
    CertifiedEnvelope c = certified_envelope(e, m.bin_edges[j]);
    cert[j] = {c.lower, c.upper};
    if (!std::isnan(m.rho_hat[j]) && m.rho_hat[j] < c.lower * (1.0 - opt.rel_tol)) env_viol++;
    if (!std::isnan(m.omega_hat[j]) && m.omega_hat[j] > c.upper * opt.upper_scale * (1.0 + opt.rel_tol)) env_viol++;
  }
  const std::size_t inv_fail = envelope_invariant_failures(m);
  FitWindows w = default_windows(S, cfg.terms, lo, hi);
  if (cfg.fit_lo) w.large_lo = *cfg.fit_lo;
  if (cfg.fit_hi) w.large_hi = *cfg.fit_hi;
  Json fits = Json::array();
  auto try_fit = [&](Envelope env, double a, double b, const std::string& label) {
    if (!(a < b)) return;
    try {
      fits.push_back(fit_json(fit_exponent(m, env, a, b), label));
    } catch (const std::invalid_argument&) {
      Json j;
      j["label"] = label;
      j["envelope"] = to_string(env);
      j["range"] = Json::array({a, b});
      j["slope"] = nullptr;
      j["note"] = "insufficient bins";
      fits.push_back(j);
    }
  };
  try_fit(Envelope::Rho, w.large_lo, w.large_hi, "large_t");
  try_fit(Envelope::Omega, w.large_lo, w.large_hi, "large_t");
  try_fit(Envelope::Rho, w.small_lo, w.small_hi, "small_t");
  try_fit(Envelope::Omega, w.small_lo, w.small_hi, "small_t");
  out.violations = rep.violations() + env_viol + inv_fail;
  out.csv = moduli_csv(m, cert);
  Json j;
  j["kind"] = "moduli";
  j["config"] = cfg.to_json();
  j["schedule"] = schedule_json(S, cfg.terms);
  j["q"] = S.q.p;
  j["backend"] = to_string(B.kind);
  j["kernel_step_statistical"] = B.kind == GaussianBackend::Kind::RandomFeatures;
  j["pair_count"] = m.pair_count;
  j["eps_prefix"] = e.eps_prefix();
  j["tail_bound"] = e.tail_constant();
  if (S.gamma) {
    const PhiConstants C = phi_constants(S.q.p);
    Json c;
    c["gamma_coefficient"] = C.gamma_coef();
    c["xi_coefficient"] = C.xi_coef();
    c["delta"] = C.delta();
    c["mazur"] = constants_json(C.mazur);
    j["constants"] = c;
  }
  j["fits"] = fits;
  j["pair_checks"] = gluing_report_json(rep);
  j["envelope_violations"] = env_viol;
  j["envelope_invariant_failures"] = inv_fail;
  j["violations"] = out.violations;
  out.report = j;
  return out;
}

// ---------------------------------------------------------------------------
// Hamming cubes and G_k

inline Json cube_json(int m, ExponentRegime p, double target_type) {
  HammingCube c(m, p);
  Json j;
  j["m"] = m;
  j["p"] = p.p;
  j["target_type"] = target_type;
  j["bound"] = enflo_lower_bound(m, p, target_type);
  if (m <= kCubeMatrixCap)
    j["measured_distortion"] = cube_identity_distortion(c).distortion;
  else
    j["measured_distortion"] = nullptr;
  j["certificate_ratio"] =
      enflo_type2_certificate([m](std::uint64_t u) { return cube_coordinates(u, m); }, m).ratio;
  j["type2_distortion_bound"] = type2_distortion_bound(c);
  return j;
}

inline SuiteResult run_cube_suite(const RunConfig& cfg) {
  SuiteResult out;
  const int mmax = std::min(cfg.m, 10);
  Json rows = Json::array();
  std::size_t dist_viol = 0, cert_viol = 0, id_viol = 0;
  const ExponentRegime p1 = ExponentRegime::of(1.0);
  for (int m = 2; m <= mmax; ++m) {
    HammingCube c(m, p1);
    const double dist = cube_identity_distortion(c).distortion;
    const double err = std::fabs(dist - std::sqrt(static_cast<double>(m)));
    dist_viol += err > 1e-9;
    const double id_ratio =
        enflo_type2_certificate([m](std::uint64_t u) { return cube_coordinates(u, m); }, m).ratio;
    id_viol += std::fabs(id_ratio - 1.0) > 1e-12;
    Json j;
    j["m"] = m;
    j["identity_distortion"] = dist;
    j["sqrt_m_error"] = err;
    j["identity_certificate_ratio"] = id_ratio;
    j["enflo_lower_bound_type2"] = enflo_lower_bound(m, p1, 2.0);
    rows.push_back(j);
  }
  // Random maps of the mmax-cube into R^{mmax}.
  const int mr = mmax;
  const std::size_t maps = 100;
  std::vector<double> ratios(maps);
  parallel_for(maps, [&](std::size_t i) {
    const std::size_t V = std::size_t{1} << mr;
    std::vector<std::vector<double>> img(V, std::vector<double>(static_cast<std::size_t>(mr)));
    for (std::size_t u = 0; u < V; ++u) {
      CounterRng rng(cfg.seed, i, 0x63756265ULL + u);
      for (auto& v : img[u]) v = rng.normal();
    }
    ratios[i] = enflo_type2_certificate([&](std::uint64_t u) { return img[u]; }, mr).ratio;
  });
  double max_ratio = 0.0;
  for (double r : ratios) {
    max_ratio = std::max(max_ratio, r);
    cert_viol += r > 1.0 + 1e-12;
  }
  out.violations = dist_viol + cert_viol + id_viol;
  out.report["suite"] = "cube";
  out.report["config"] = cfg.to_json();
  out.report["cubes"] = rows;
  out.report["random_maps"] = maps;
  out.report["random_map_dim"] = mr;
  out.report["max_random_certificate_ratio"] = max_ratio;
  out.report["austin_bound_hamming_p1_type2"] = austin_bound(1.0 - 0.5);
  out.report["distortion_violations"] = dist_viol;
  out.report["identity_certificate_violations"] = id_viol;
  out.report["random_certificate_violations"] = cert_viol;
  out.report["violations"] = out.violations;
  return out;
}

inline Json gk_json(const ProbeAudit& a) {
  Json j;
  j["k"] = a.k;
  j["ground"] = a.ground;
  j["p"] = a.p;
  j["pairs"] = a.pairs;
  j["max_lipschitz"] = a.max_lipschitz;
  j["min_image_distance"] = json_number(a.min_image_distance);
  j["lipschitz_violations"] = a.lipschitz_violations;
  j["discreteness_violations"] = a.discreteness_violations;
  return j;
}

inline SuiteResult run_gk_suite(const RunConfig& cfg) {
  SuiteResult out;
  Json rows = Json::array();
  for (int k = 1; k <= cfg.k; ++k)
    for (int n = std::max(k + 1, 2); n <= cfg.ground; ++n) {
      ProbeAudit a = probe_audit(k, n, ExponentRegime::of(cfg.p));
      out.violations += a.lipschitz_violations + a.discreteness_violations;
      rows.push_back(gk_json(a));
    }
  out.report["suite"] = "gk";
  out.report["config"] = cfg.to_json();
  out.report["audits"] = rows;
  out.report["violations"] = out.violations;
  return out;
}

// ---------------------------------------------------------------------------
// Folner / property A

inline GroupModel group_from(const RunConfig& cfg) {
  const std::string& g = cfg.group;
  if (g == "heis") return GroupModel::heisenberg();
  if (g == "tree") return GroupModel::tree(2, 10'000'000);
  if (g.size() >= 2 && g[0] == 'z') {
    const int k = std::stoi(g.substr(1));
    return GroupModel::zk(k);
  }
  throw std::invalid_argument("unknown group: " + g);
}

// Witness searches for H3(Z) grow like n^8 in work; larger levels are skipped.
inline constexpr long kHeisLevelCap = 6;

struct FolnerSuiteOptions {
  std::size_t invariance_triples = 10000;
  std::size_t identity_audits = 200;   // sparse-path cross checks
  double spread_t_max = 3e4;
};

inline SuiteResult run_folner_suite(const RunConfig& cfg, FolnerSuiteOptions fo = {}) {
  SuiteResult out;
  const GroupModel G = group_from(cfg);
  const AmenableSchedule AS;
  const ExponentRegime p = ExponentRegime::of(cfg.p);
  if (!p.is_norm()) throw std::invalid_argument("characteristic embeddings need p >= 1");
  const long first = AS.first;
  long last = std::max(cfg.n_max, first);
  Json notes = Json::array();
  notes.push_back("eps_2 = 1/(2 log^2 2) > 1: A-collection bounds start at n = 3");
  if (G.kind == GroupModel::Kind::HeisenbergZ && last > kHeisLevelCap) {
    notes.push_back("Heisenberg levels above " + std::to_string(kHeisLevelCap) + " skipped (work cap)");
    last = kHeisLevelCap;
  }
  std::size_t viol = 0;
  Json levels_json = Json::array();
  std::shared_ptr<ACollection> A;
  std::vector<std::vector<double>> level_rows;  // n, eps_n, rad_n, measured_defect_max

  if (G.is_group()) {
    // n = 2 only gets the plain Folner-defect check (eps_2 >= 1).
    std::vector<FolnerLevel> levels;
    for (long n = 2; n <= last; ++n) {
      FolnerLevel L = radial_folner_upper(G, n, AS, cfg.seed);
      const bool ok = L.measured_defect_max <= L.eps;
      viol += !ok;
      Json j;
      j["n"] = n;
      j["eps"] = L.eps;
      j["r"] = L.r;
      j["recipe_radius"] = L.recipe_radius;
      j["recipe_defect_max"] = json_number(L.recipe_defect_max);
      j["recipe_certified"] = L.recipe_certified;
      j["witness_radius"] = L.witness_radius;
      j["measure"] = L.measure;
      j["measured_defect_max"] = L.measured_defect_max;
      j["certified"] = L.certified;
      j["translations_sampled"] = L.sampled;
      levels_json.push_back(j);
      level_rows.push_back({static_cast<double>(n), L.eps, L.witness_radius, L.measured_defect_max});
      if (n >= first) levels.push_back(std::move(L));
    }
    A = std::make_shared<ACollection>(folner_to_acollection(G, levels, AS));
  } else {
    A = std::make_shared<ACollection>(tree_acollection(G, first, last, AS));
    for (long n = first; n <= last; ++n) {
      Json j;
      j["n"] = n;
      j["eps"] = AS.eps(n);
      j["r"] = AS.r(n);
      j["segment_length"] = tree_segment_length(n, AS);
      j["defect_bound"] = A->bound(n);
      levels_json.push_back(j);
      level_rows.push_back({static_cast<double>(n), AS.eps(n), A->radius(n), kNaN});
    }
  }

  // A-defects and characteristic-embedding bounds on close pairs, per level.
  Json char_json = Json::array();
  std::size_t tree_audit_viol = 0, ray_viol = 0;
  for (long n = first; n <= last; ++n) {
    auto pairs = sample_close_pairs(G, cfg.pairs, AS.r(n), cfg.seed + static_cast<std::uint64_t>(n));
    double bound_override = kNaN;
    if (cfg.negative_control) bound_override = G.is_group() ? AS.eps(n) / 2.0 : AS.eps(n);
    CharBoundReport cr = char_embedding_bound_check(*A, n, pairs, p, bound_override);
    // a-defect audit
    std::vector<double> ad(pairs.size(), -1.0);
    std::vector<char> tree_bad(pairs.size(), 0);
    parallel_for(pairs.size(), [&](std::size_t i) {
      if (pairs[i].d > AS.r(n)) return;
      Overlap o = A->pair_overlap(n, pairs[i].x, pairs[i].y);
      ad[i] = o.inter == 0 ? kInf : static_cast<double>(o.sym()) / static_cast<double>(o.inter);
      if (!G.is_group()) {
        // two segments of length >= r/eps at distance <= r
        const double r = AS.r(n);
        tree_bad[i] = static_cast<double>(o.sym()) > 2.0 * r || static_cast<double>(o.inter) < r / AS.eps(n) - 2.0 * r;
      }
    });
    double ad_max = 0.0;
    std::size_t ad_viol = 0;
    const double ad_bound = A->bound(n) * (cfg.negative_control ? 0.5 : 1.0);
    for (double v : ad)
      if (v >= 0.0) {
        ad_max = std::max(ad_max, v);
        ad_viol += v > ad_bound * (1.0 + 1e-12);
      }
    for (char b : tree_bad) tree_audit_viol += b;
    Json j;
    j["n"] = n;
    j["pairs_checked"] = cr.checked;
    j["char_bound"] = cr.bound;
    j["char_max"] = cr.max_value;
    j["char_violations"] = cr.violations;
    j["support_violations"] = cr.support_violations;
    j["a_defect_bound"] = ad_bound;
    j["a_defect_max"] = json_number(ad_max);
    j["a_defect_violations"] = ad_viol;
    char_json.push_back(j);
    viol += cr.violations + cr.support_violations + ad_viol;
  }
  viol += tree_audit_viol;

  Json extra;
  if (!G.is_group()) {
    // On-ray pairs at distance d <= r_n: symmetric difference exactly 2d.
    for (long n = first; n <= last; ++n) {
      const auto L = tree_segment_length(n, AS);
      for (std::int64_t dd = 0; dd <= static_cast<std::int64_t>(AS.r(n)); ++dd) {
        Elem x{100}, y{100 + dd};
        Overlap o = overlap(tree_segment(G, x, L), tree_segment(G, y, L));
        ray_viol += o.sym() != 2 * dd;
      }
    }
    extra["tree_segment_audit_violations"] = tree_audit_viol;
    extra["on_ray_violations"] = ray_viol;
    viol += ray_viol;
  }

  // Left invariance (groups) or symmetry (tree) on sampled triples.
  std::size_t inv_viol = 0;
  {
    auto tri = sample_close_pairs(G, fo.invariance_triples, 50.0, cfg.seed ^ 0x747269ULL);
    auto gs = sample_close_pairs(G, fo.invariance_triples, 50.0, cfg.seed ^ 0x67656eULL);
    for (std::size_t i = 0; i < tri.size(); ++i) {
      if (G.is_group()) {
        const Elem& g = gs[i].y;
        inv_viol += G.dist(G.mul(g, tri[i].x), G.mul(g, tri[i].y)) != tri[i].d;
      } else {
        inv_viol += G.dist(tri[i].y, tri[i].x) != tri[i].d;
      }
    }
  }
  extra["invariance_triples"] = fo.invariance_triples;
  extra["invariance_violations"] = inv_viol;
  viol += inv_viol;

  // Sparse-vector path against set arithmetic, small levels only.
  std::size_t id_viol = 0, id_checked = 0;
  {
    const long n = first;
    auto pairs = sample_close_pairs(G, fo.identity_audits, AS.r(n), cfg.seed ^ 0x6964ULL);
    for (const auto& pr : pairs) {
      Overlap o = A->pair_overlap(n, pr.x, pr.y);
      if (o.a != o.b || o.a > 200000) continue;
      const double via_sets = static_cast<double>(o.sym()) / static_cast<double>(o.a);
      const double via_vec =
          sparse_lp_power(char_embedding_block(*A, n, pr.x, p), char_embedding_block(*A, n, pr.y, p), p.p);
      id_checked++;
      id_viol += std::fabs(via_sets - via_vec) > 1e-12 * std::max(1.0, via_sets);
    }
  }
  extra["identity_checked"] = id_checked;
  extra["identity_violations"] = id_viol;
  viol += id_viol;

  // Glued embedding: disjoint-support lower bound, coarse upper bound, moduli.
  const bool triangle = G.kind != GroupModel::Kind::HeisenbergZ;
  CharFamily fam(A, p);
  ParamSchedule gs = group_schedule(*A, p, triangle);
  auto e = glue(fam, gs, G.identity(), static_cast<long>(fam.blocks()));
  double t_max = fo.spread_t_max;
  auto spread = sample_spread_pairs(G, cfg.pairs, 1.0, t_max, cfg.seed ^ 0x676cULL);
  GluingCheckOptions gopt;
  const double K = coarse_lemma_constant(gs);
  std::vector<PairCheck> checks(spread.size());
  std::vector<double> dd(spread.size()), img(spread.size());
  parallel_for(spread.size(), [&](std::size_t i) {
    GluedDistance g = e.distance(spread[i].x, spread[i].y);
    dd[i] = spread[i].d;
    img[i] = g.delta;
    checks[i] = check_pair(e, spread[i].d, g, gopt, K);
  });
  GluingCheckReport grep;
  grep.pairs = spread.size();
  grep.coarse_K = K;
  for (const auto& c : checks) accumulate(grep, c);
  DisjointAudit da = disjoint_support_audit(fam, spread, triangle);
  viol += grep.violations() + da.inexact + da.predicted_not_disjoint;
  double lo = 1.0, hi = t_max;
  for (double v : dd) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  ModuliEstimate m = envelopes_from_samples(dd, img, lo, hi, cfg.bins, cfg.seed, 1.0);
  std::vector<ModuliRow> cert(m.bin_edges.size());
  for (std::size_t j = 0; j < m.bin_edges.size(); ++j) {
    CertifiedEnvelope c = certified_envelope(e, m.bin_edges[j]);
    cert[j] = {c.lower, c.upper};
  }
  // rho_hat at the top decade against the bottom decade.
  double rho_bottom = kNaN, rho_top = kNaN;
  for (std::size_t j = 0; j < m.bin_edges.size(); ++j) {
    if (m.bin_edges[j] <= lo * 10.0 && !std::isnan(m.rho_hat[j])) rho_bottom = std::isnan(rho_bottom) ? m.rho_hat[j] : std::min(rho_bottom, m.rho_hat[j]);
    if (m.bin_edges[j] >= hi / 10.0 && !std::isnan(m.rho_hat[j])) rho_top = std::isnan(rho_top) ? m.rho_hat[j] : std::max(rho_top, m.rho_hat[j]);
  }
  const bool unbounded = !std::isnan(rho_top) && !std::isnan(rho_bottom) && rho_top > rho_bottom;

  Json glued;
  glued["schedule"] = schedule_json(gs, static_cast<long>(fam.blocks()));
  glued["disjoint_threshold_certified"] = triangle;
  glued["checks"] = gluing_report_json(grep);
  glued["disjoint_blocks"] = da.disjoint_blocks;
  glued["disjoint_inexact"] = da.inexact;
  glued["predicted_disjoint_but_overlapping"] = da.predicted_not_disjoint;
  glued["rho_bottom_decade"] = json_number(rho_bottom);
  glued["rho_top_decade"] = json_number(rho_top);
  glued["rho_unbounded_over_range"] = unbounded;

  // Gap predictions at a few distances.
  GroupGap gap = predicted_group_gap(G, p);
  Json gapj;
  gapj["a"] = gap.a;
  gapj["b"] = gap.b;
  Json gv = Json::array();
  for (double t : {10.0, 100.0, 1000.0, 10000.0}) gv.push_back(Json::array({t, gap.lower(t), gap.upper(t)}));
  gapj["samples"] = gv;

  if (G.kind == GroupModel::Kind::HeisenbergZ) {
    std::vector<double> R, V;
    for (int r = 1; r <= 20; ++r) {
      R.push_back(r);
      V.push_back(static_cast<double>(heis_ball_size(r)));
    }
    ExponentFit fw = fit_loglog(R, V, 5, 20), fa = fit_loglog(R, V, 1, 20);
    extra["ball_growth_slope"] = fw.slope;
    extra["ball_growth_range"] = Json::array({5, 20});
    extra["ball_growth_slope_full_range"] = fa.slope;
  }

  // CSV: moduli columns plus per-level columns, row-aligned.
  CsvWriter w({"bin_edge_t", "rho_hat", "omega_hat", "count", "certified_lower", "certified_upper", "n",
               "eps_n", "rad_n", "measured_defect_max"});
  const std::size_t rows = std::max(m.bin_edges.size(), level_rows.size());
  for (std::size_t j = 0; j < rows; ++j) {
    std::vector<double> v(10, kNaN);
    if (j < m.bin_edges.size()) {
      v[0] = m.bin_edges[j];
      v[1] = m.rho_hat[j];
      v[2] = m.omega_hat[j];
      v[3] = static_cast<double>(m.counts[j]);
      v[4] = cert[j].certified_lower;
      v[5] = cert[j].certified_upper;
    }
    if (j < level_rows.size())
      for (int c = 0; c < 4; ++c) v[static_cast<std::size_t>(6 + c)] = level_rows[j][static_cast<std::size_t>(c)];
    w.row(v);
  }
  out.csv = w.str();
  out.violations = viol;
  out.report["suite"] = "folner";
  out.report["config"] = cfg.to_json();
  out.report["group"] = G.name();
  out.report["notes"] = notes;
  out.report["levels"] = levels_json;
  out.report["char_embedding"] = char_json;
  out.report["audits"] = extra;
  out.report["glued"] = glued;
  out.report["predicted_gap"] = gapj;
  out.report["violations"] = out.violations;
  return out;
}

}  // namespace embedlab
