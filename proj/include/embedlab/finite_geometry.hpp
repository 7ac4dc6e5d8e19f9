#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "metric_core.hpp"
#include "moduli_lab.hpp"
#include "parallel.hpp"

namespace embedlab {

inline constexpr int kCubePairCap = 24;     // m limit for pair iteration
inline constexpr int kCubeMatrixCap = 14;   // m limit for all-pairs matrices
inline constexpr std::uint64_t kAllPairsCap = std::uint64_t{1} << 20;

// ---------------------------------------------------------------------------
// Hamming cubes

struct HammingCube {
  int m = 1;
  ExponentRegime p = ExponentRegime::of(1.0);

  HammingCube(int m_, ExponentRegime p_) : m(m_), p(p_) {
    if (m < 1) throw std::invalid_argument("cube dimension must be >= 1");
    if (m > kCubePairCap) throw std::length_error("cube exceeds enumeration cap");
  }

  std::uint64_t vertices() const { return std::uint64_t{1} << m; }
  std::uint64_t mask() const { return vertices() - 1; }

  // d_p of the 0/1 coordinates: h in the sum-of-powers regime, h^{1/p} in norm.
  double distance_of_weight(int h) const {
    if (!p.is_norm() || p.p == 1.0) return h;
    return std::pow(static_cast<double>(h), 1.0 / p.p);
  }

  double diameter() const { return distance_of_weight(m); }
};

inline double cube_distance(std::uint64_t u, std::uint64_t v, const HammingCube& c) {
  if (u >= c.vertices() || v >= c.vertices()) throw std::out_of_range("vertex outside the cube");
  return c.distance_of_weight(std::popcount(u ^ v));
}

// Lower bound on the distortion of (H_m, d_p) into a target of Enflo type q:
// diam^{1/p - 1/q} for p >= 1, diam^{1 - 1/q} for p <= 1.
inline double enflo_lower_bound(int m, ExponentRegime p, double q_type) {
  if (m < 1) throw std::invalid_argument("m must be >= 1");
  if (!(q_type >= 1.0)) throw std::invalid_argument("Enflo type must be >= 1");
  if (p.is_norm()) {
    const double diam = std::pow(static_cast<double>(m), 1.0 / p.p);
    return std::pow(diam, 1.0 / p.p - 1.0 / q_type);
  }
  return std::pow(static_cast<double>(m), 1.0 - 1.0 / q_type);
}

struct Type2Certificate {
  double diagonal_sum = 0.0;
  double edge_sum = 0.0;
  double ratio = 0.0;
  bool degenerate = false;
};

// f(u) must return the image of vertex u as a Euclidean vector.
inline Type2Certificate enflo_type2_certificate(
    const std::function<std::vector<double>(std::uint64_t)>& f, int m) {
  if (m < 1 || m > kCubeMatrixCap + 6) throw std::invalid_argument("cube dimension out of range");
  const std::uint64_t V = std::uint64_t{1} << m;
  std::vector<std::vector<double>> img(V);
  for (std::uint64_t u = 0; u < V; ++u) img[u] = f(u);
  const std::size_t D = img[0].size();
  for (const auto& v : img)
    if (v.size() != D) throw std::invalid_argument("incomplete or ragged map");
  auto sq = [&](std::uint64_t a, std::uint64_t b) {
    double s = 0.0;
    for (std::size_t i = 0; i < D; ++i) {
      double t = img[a][i] - img[b][i];
      s += t * t;
    }
    return s;
  };
  Type2Certificate c;
  const std::uint64_t full = V - 1;
  for (std::uint64_t u = 0; u < V; ++u) {
    std::uint64_t ub = u ^ full;
    if (u < ub) c.diagonal_sum += sq(u, ub);
    for (int k = 0; k < m; ++k) {
      std::uint64_t v = u ^ (std::uint64_t{1} << k);
      if (u < v) c.edge_sum += sq(u, v);
    }
  }
  if (c.edge_sum == 0.0) {
    c.degenerate = true;
    c.ratio = 0.0;
  } else {
    c.ratio = c.diagonal_sum / c.edge_sum;
  }
  return c;
}

// Identity coordinates of a vertex as a 0/1 vector.
inline std::vector<double> cube_coordinates(std::uint64_t u, int m) {
  std::vector<double> v(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) v[static_cast<std::size_t>(k)] = static_cast<double>((u >> k) & 1u);
  return v;
}

// Distortion of the identity coordinates of (H_m, d_p) inside Euclidean space.
inline DistortionResult cube_identity_distortion(const HammingCube& c) {
  if (c.m > kCubeMatrixCap) throw std::length_error("cube exceeds all-pairs cap");
  const std::size_t V = static_cast<std::size_t>(c.vertices());
  return distortion(
      V,
      [&](std::size_t i, std::size_t j) { return c.distance_of_weight(std::popcount(i ^ j)); },
      [&](std::size_t i, std::size_t j) {
        return std::sqrt(static_cast<double>(std::popcount(i ^ j)));
      });
}

// Certificate-form bound for Euclidean targets: diam / (edge * sqrt(m)).
inline double type2_distortion_bound(const HammingCube& c) {
  return c.diameter() / (c.distance_of_weight(1) * std::sqrt(static_cast<double>(c.m)));
}

// ---------------------------------------------------------------------------
// k-subset spaces G_k over {1..n}

inline double gk_distance(const std::vector<int>& A, const std::vector<int>& B) {
  if (A.size() != B.size()) throw std::invalid_argument("G_k distance needs equal-size sets");
  std::vector<int> a = A, b = B;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0, common = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++common;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return static_cast<double>(a.size() - common);  // |A delta B| / 2
}

struct GkSpace {
  int k = 1, ground = 1;
  GkSpace(int k_, int n_) : k(k_), ground(n_) {
    if (k < 1 || k > ground) throw std::invalid_argument("need 1 <= k <= ground");
    if (binom(ground, k) > 1e7) throw std::length_error("G_k element count exceeds cap");
  }

  static double binom(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
  }

  std::vector<std::vector<int>> elements() const {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) cur[static_cast<std::size_t>(i)] = i + 1;
    while (true) {
      out.push_back(cur);
      int i = k - 1;
      while (i >= 0 && cur[static_cast<std::size_t>(i)] == ground - k + i + 1) --i;
      if (i < 0) break;
      ++cur[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < k; ++j)
        cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
    }
    return out;
  }
};

// phi(u) = e_{u_1} + ... + e_{u_k} in R^n.
inline TruncatedVector gk_probe(const std::vector<int>& u, int ground) {
  std::vector<double> v(static_cast<std::size_t>(ground), 0.0);
  for (int e : u) {
    if (e < 1 || e > ground) throw std::out_of_range("subset element outside the ground set");
    v[static_cast<std::size_t>(e - 1)] += 1.0;
  }
  return TruncatedVector(std::move(v));
}

struct ProbeAudit {
  int k = 0, ground = 0;
  double p = 1.0;
  std::uint64_t pairs = 0;
  bool sampled = false;
  double max_lipschitz = 0.0;     // max d_p(phi u, phi v) / rho(u, v)
  double min_image_distance = kInf;  // over u != v
  std::size_t lipschitz_violations = 0;  // ratio > 2
  std::size_t discreteness_violations = 0;  // image distance < 1
};

inline ProbeAudit probe_audit(int k, int ground, ExponentRegime p) {
  GkSpace G(k, ground);
  auto els = G.elements();
  const std::size_t n = els.size();
  ProbeAudit a;
  a.k = k;
  a.ground = ground;
  a.p = p.p;
  const std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  if (total > kAllPairsCap) throw std::length_error("G_k pair count exceeds all-pairs cap");
  a.pairs = total;
  std::vector<TruncatedVector> img(n);
  for (std::size_t i = 0; i < n; ++i) img[i] = gk_probe(els[i], ground);
  struct R {
    double lip = 0.0, mind = kInf;
    std::size_t lv = 0, dv = 0;
  };
  std::vector<R> res(n);
  parallel_for(n, [&](std::size_t i) {
    R r;
    for (std::size_t j = i + 1; j < n; ++j) {
      double rho = gk_distance(els[i], els[j]);
      double dd = lp_distance(img[i], img[j], p);
      double ratio = dd / rho;
      r.lip = std::max(r.lip, ratio);
      r.mind = std::min(r.mind, dd);
      r.lv += ratio > 2.0 * (1.0 + 1e-12);
      r.dv += dd < 1.0 - 1e-12;
    }
    res[i] = r;
  });
  for (const auto& r : res) {
    a.max_lipschitz = std::max(a.max_lipschitz, r.lip);
    a.min_image_distance = std::min(a.min_image_distance, r.mind);
    a.lipschitz_violations += r.lv;
    a.discreteness_violations += r.dv;
  }
  return a;
}

}  // namespace embedlab
