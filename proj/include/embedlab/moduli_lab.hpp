#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "glue.hpp"
#include "metric_core.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace embedlab {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// Pair sampling with prescribed, log-uniform separations

struct PairSamplerSpec {
  double t_min = 1e-3, t_max = 1e3;
  int dim = 16;
  double base_scale = 1.0;  // base point coordinates ~ N(0, base_scale^2)
  std::size_t pairs = 1000;
  std::uint64_t seed = 7;
};

inline DomainPair sample_pair(const PairSamplerSpec& s, std::size_t i) {
  CounterRng rng(s.seed, i, 0x70616972ULL);
  DomainPair p;
  const std::size_t dim = static_cast<std::size_t>(s.dim);
  p.x.resize(dim);
  p.y.resize(dim);
  std::vector<double> u(dim);
  double nu = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    p.x[k] = s.base_scale * rng.normal();
    u[k] = rng.normal();
    nu += u[k] * u[k];
  }
  nu = std::sqrt(nu);
  const double t = std::exp(rng.uniform(std::log(s.t_min), std::log(s.t_max)));
  double d2 = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    p.y[k] = p.x[k] + t * u[k] / nu;
    d2 += (p.y[k] - p.x[k]) * (p.y[k] - p.x[k]);
  }
  p.d = std::sqrt(d2);  // distance of the realised points
  return p;
}

inline std::vector<DomainPair> sample_pairs(const PairSamplerSpec& s) {
  if (!(s.t_min > 0.0 && s.t_max > s.t_min)) throw std::invalid_argument("need 0 < t_min < t_max");
  std::vector<DomainPair> out(s.pairs);
  for (std::size_t i = 0; i < s.pairs; ++i) out[i] = sample_pair(s, i);
  return out;
}

// ---------------------------------------------------------------------------
// Empirical moduli

struct ModuliEstimate {
  std::vector<double> bin_edges;  // B + 1 log-spaced edges
  // At edge j: rho_hat = min image distance over pairs with d >= edge,
  // omega_hat = max image distance over pairs with d <= edge (NaN = gap).
  std::vector<double> rho_hat, omega_hat;
  std::vector<std::size_t> counts;  // pairs in [edge_j, edge_{j+1}); last slot 0
  std::uint64_t seed = 0;
  std::size_t pair_count = 0;
};

inline std::vector<double> log_edges(double t_min, double t_max, int bins) {
  std::vector<double> e(static_cast<std::size_t>(bins) + 1);
  const double a = std::log(t_min), b = std::log(t_max);
  for (int j = 0; j <= bins; ++j) e[static_cast<std::size_t>(j)] = std::exp(a + (b - a) * j / bins);
  e.front() = t_min;
  e.back() = t_max;
  return e;
}

// Builds the envelopes from (domain distance, image distance) samples.
inline ModuliEstimate envelopes_from_samples(const std::vector<double>& d,
                                             const std::vector<double>& img, double t_min,
                                             double t_max, int bins, std::uint64_t seed = 0,
                                             double max_empty_fraction = 1.0) {
  if (bins < 1) throw std::invalid_argument("bins must be >= 1");
  ModuliEstimate m;
  m.bin_edges = log_edges(t_min, t_max, bins);
  m.seed = seed;
  m.pair_count = d.size();
  const std::size_t E = m.bin_edges.size();
  m.rho_hat.assign(E, kNaN);
  m.omega_hat.assign(E, kNaN);
  m.counts.assign(E, 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] < t_min || d[i] > t_max) throw std::invalid_argument("sample outside bin range");
    auto it = std::upper_bound(m.bin_edges.begin(), m.bin_edges.end(), d[i]);
    std::size_t j = static_cast<std::size_t>(it - m.bin_edges.begin()) - 1;
    if (j >= E - 1) j = E - 2;  // d == t_max joins the last bin
    m.counts[j]++;
  }
  std::size_t empty = 0;
  for (std::size_t j = 0; j + 1 < E; ++j) empty += m.counts[j] == 0;
  if (static_cast<double>(empty) > max_empty_fraction * static_cast<double>(E - 1))
    throw std::runtime_error("too many empty bins: sampler does not cover the range");
  // Exact suffix-min / prefix-max against the edges, using sorted samples.
  std::vector<std::size_t> order(d.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return d[a] < d[b] || (d[a] == d[b] && a < b);
  });
  std::vector<double> suf(order.size() + 1, kInf), pre(order.size() + 1, -kInf);
  for (std::size_t k = order.size(); k-- > 0;) suf[k] = std::min(suf[k + 1], img[order[k]]);
  for (std::size_t k = 0; k < order.size(); ++k) pre[k + 1] = std::max(pre[k], img[order[k]]);
  for (std::size_t j = 0; j < E; ++j) {
    const double t = m.bin_edges[j];
    // first sorted position with d >= t
    std::size_t lo = static_cast<std::size_t>(
        std::lower_bound(order.begin(), order.end(), t,
                         [&](std::size_t a, double v) { return d[a] < v; }) -
        order.begin());
    if (lo < order.size()) m.rho_hat[j] = suf[lo];
    // number of samples with d <= t
    std::size_t hi = static_cast<std::size_t>(
        std::upper_bound(order.begin(), order.end(), t,
                         [&](double v, std::size_t a) { return v < d[a]; }) -
        order.begin());
    if (hi > 0) m.omega_hat[j] = pre[hi];
  }
  return m;
}

// Evaluates `image_distance(pair)` for every pair (in parallel, results stored
// per index) and returns the envelopes.
template <class ImageDistance>
ModuliEstimate estimate_moduli(const PairSamplerSpec& sampler, int bins,
                               ImageDistance&& image_distance,
                               std::vector<double>* images_out = nullptr) {
  std::vector<DomainPair> pairs = sample_pairs(sampler);
  std::vector<double> d(pairs.size()), img(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    d[i] = pairs[i].d;
    img[i] = image_distance(pairs[i]);
  });
  if (images_out) *images_out = img;
  // Realised distances can exceed the nominal range by rounding.
  double lo = sampler.t_min, hi = sampler.t_max;
  for (double v : d) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return envelopes_from_samples(d, img, lo, hi, bins, sampler.seed, 0.5);
}

// Post-hoc checks of the envelope invariants. Returns the number of failures.
inline std::size_t envelope_invariant_failures(const ModuliEstimate& m) {
  std::size_t bad = 0;
  double pr = -kInf, po = -kInf;
  std::size_t total = 0;
  for (std::size_t j = 0; j < m.bin_edges.size(); ++j) {
    if (!std::isnan(m.rho_hat[j])) {
      bad += m.rho_hat[j] < pr;
      pr = m.rho_hat[j];
    }
    if (!std::isnan(m.omega_hat[j])) {
      bad += m.omega_hat[j] < po;
      po = m.omega_hat[j];
    }
    total += m.counts[j];
    // A pair in bin j lies in both the suffix at edge j and the prefix at j+1.
    if (j + 1 < m.bin_edges.size() && m.counts[j] > 0)
      bad += m.rho_hat[j] > m.omega_hat[j + 1];
  }
  bad += total != m.pair_count;
  return bad;
}

// ---------------------------------------------------------------------------
// Exponent fitting

enum class Envelope { Rho, Omega };

inline const char* to_string(Envelope e) { return e == Envelope::Rho ? "rho" : "omega"; }

struct ExponentFit {
  double slope = kNaN, intercept = kNaN;
  double t_lo = 0.0, t_hi = 0.0;
  double residual_rms = kNaN;
  std::size_t points = 0;
  Envelope envelope = Envelope::Rho;
};

inline ExponentFit fit_loglog(const std::vector<double>& t, const std::vector<double>& v,
                              double t_lo, double t_hi) {
  std::vector<double> X, Y;
  for (std::size_t j = 0; j < t.size(); ++j) {
    if (t[j] < t_lo || t[j] > t_hi) continue;
    if (std::isnan(v[j]) || !(v[j] > 0.0)) continue;
    X.push_back(std::log(t[j]));
    Y.push_back(std::log(v[j]));
  }
  if (X.size() < 5) throw std::invalid_argument("fit needs at least 5 nonempty bins");
  const double n = static_cast<double>(X.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    mx += X[i];
    my += Y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    sxx += (X[i] - mx) * (X[i] - mx);
    sxy += (X[i] - mx) * (Y[i] - my);
  }
  ExponentFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    double e = Y[i] - (f.intercept + f.slope * X[i]);
    rss += e * e;
  }
  f.residual_rms = std::sqrt(rss / n);
  f.t_lo = t_lo;
  f.t_hi = t_hi;
  f.points = X.size();
  return f;
}

inline ExponentFit fit_exponent(const ModuliEstimate& m, Envelope env, double t_lo, double t_hi) {
  if (!(t_lo < t_hi)) throw std::invalid_argument("fit range must satisfy t_lo < t_hi");
  ExponentFit f =
      fit_loglog(m.bin_edges, env == Envelope::Rho ? m.rho_hat : m.omega_hat, t_lo, t_hi);
  f.envelope = env;
  return f;
}

// ---------------------------------------------------------------------------
// Distortion of a map on a finite metric space (brute force over all pairs)

struct DistortionResult {
  double distortion = 1.0;
  double expansion = 0.0;    // max image/domain
  double contraction = 0.0;  // max domain/image
};

// domain(i, j) and image(i, j) give the two distances for points i != j.
template <class DomainDist, class ImageDist>
DistortionResult distortion(std::size_t points, DomainDist&& domain, ImageDist&& image) {
  if (points < 2) throw std::invalid_argument("distortion needs at least 2 points");
  std::vector<double> ex(points, 0.0), co(points, 0.0);
  std::vector<char> bad(points, 0);
  parallel_for(points, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < points; ++j) {
      double a = domain(i, j), b = image(i, j);
      if (a <= 0.0) continue;
      if (b <= 0.0) {
        bad[i] = 1;
        return;
      }
      ex[i] = std::max(ex[i], b / a);
      co[i] = std::max(co[i], a / b);
    }
  });
  for (char b : bad)
    if (b) throw std::invalid_argument("map is not injective on the space");
  DistortionResult r;
  for (std::size_t i = 0; i < points; ++i) {
    r.expansion = std::max(r.expansion, ex[i]);
    r.contraction = std::max(r.contraction, co[i]);
  }
  r.distortion = r.expansion * r.contraction;
  return r;
}

inline double austin_bound(double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must lie in (0, 1]");
  return 1.0 - eta;
}

}  // namespace embedlab
