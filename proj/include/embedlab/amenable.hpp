#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "glue.hpp"
#include "metric_core.hpp"
#include "moduli_lab.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace embedlab {

using Elem = std::vector<std::int64_t>;

// ---------------------------------------------------------------------------
// Group and tree models

struct GroupModel {
  enum class Kind { Zk, HeisenbergZ, RootedTree };
  Kind kind = Kind::Zk;
  int k = 1;           // Zk rank
  int branching = 2;   // tree: children per vertex
  long depth = 0;      // tree truncation depth

  static GroupModel zk(int k) {
    if (k < 1) throw std::invalid_argument("Z^k needs k >= 1");
    GroupModel g;
    g.kind = Kind::Zk;
    g.k = k;
    return g;
  }
  static GroupModel heisenberg() {
    GroupModel g;
    g.kind = Kind::HeisenbergZ;
    g.k = 3;
    return g;
  }
  // Vertices are [s, b_1, ..., b_l]: leave the designated ray at depth s and
  // follow child indices b (b_1 >= 1 so the first step leaves the ray).
  static GroupModel tree(int branching, long depth) {
    if (branching < 2) throw std::invalid_argument("tree branching must be >= 2");
    if (depth < 1) throw std::invalid_argument("tree depth must be >= 1");
    GroupModel g;
    g.kind = Kind::RootedTree;
    g.branching = branching;
    g.depth = depth;
    return g;
  }

  bool is_group() const { return kind != Kind::RootedTree; }
  std::string name() const {
    switch (kind) {
      case Kind::Zk: return "Z" + std::to_string(k);
      case Kind::HeisenbergZ: return "heis";
      case Kind::RootedTree: return "tree";
    }
    return "?";
  }

  Elem identity() const {
    if (kind == Kind::RootedTree) return Elem{0};
    return Elem(static_cast<std::size_t>(k), 0);
  }

  Elem mul(const Elem& g, const Elem& h) const {
    if (kind == Kind::Zk) {
      Elem r(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) r[i] = g[i] + h[i];
      return r;
    }
    if (kind == Kind::HeisenbergZ)  // (a,b,c)(x,y,z) = (a+x, b+y, c+z+a y)
      return Elem{g[0] + h[0], g[1] + h[1], g[2] + h[2] + g[0] * h[1]};
    throw std::logic_error("trees have no group law");
  }

  Elem inv(const Elem& g) const {
    if (kind == Kind::Zk) {
      Elem r(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) r[i] = -g[i];
      return r;
    }
    if (kind == Kind::HeisenbergZ) return Elem{-g[0], -g[1], -g[2] + g[0] * g[1]};
    throw std::logic_error("trees have no group law");
  }

  static std::int64_t ceil_sqrt(std::int64_t v) {
    v = v < 0 ? -v : v;
    auto r = static_cast<std::int64_t>(std::sqrt(static_cast<double>(v)));
    while (r * r < v) ++r;
    while (r > 0 && (r - 1) * (r - 1) >= v) --r;
    return r;
  }

  // d(e, g). For H3(Z) the gauge |x|+|y|+max(ceil sqrt|z|, ceil sqrt|z-xy|)
  // is symmetric under inversion.
  double norm(const Elem& g) const {
    if (kind == Kind::Zk) {
      std::int64_t s = 0;
      for (auto v : g) s += v < 0 ? -v : v;
      return static_cast<double>(s);
    }
    if (kind == Kind::HeisenbergZ) {
      std::int64_t zz = std::max(ceil_sqrt(g[2]), ceil_sqrt(g[2] - g[0] * g[1]));
      return static_cast<double>(std::llabs(g[0]) + std::llabs(g[1]) + zz);
    }
    throw std::logic_error("trees have no group norm");
  }

  double dist(const Elem& x, const Elem& y) const {
    if (kind != Kind::RootedTree) return norm(mul(inv(x), y));
    const std::int64_t s1 = x[0], s2 = y[0];
    const std::size_t l1 = x.size() - 1, l2 = y.size() - 1;
    if (s1 != s2) return static_cast<double>(l1 + l2) + static_cast<double>(std::llabs(s1 - s2));
    std::size_t lcp = 0;
    while (lcp < l1 && lcp < l2 && x[lcp + 1] == y[lcp + 1]) ++lcp;
    return static_cast<double>(l1 + l2 - 2 * lcp);
  }

  long tree_depth(const Elem& v) const { return static_cast<long>(v[0]) + static_cast<long>(v.size()) - 1; }
};

// ---------------------------------------------------------------------------
// Exact finite sets as sorted rows of disjoint integer intervals

struct Interval {
  std::int64_t lo, hi;  // inclusive
  std::int64_t size() const { return hi - lo + 1; }
};

struct Row {
  Elem key;
  std::vector<Interval> iv;
};

struct RowSet {
  std::vector<Row> rows;  // sorted by key, intervals sorted and disjoint

  std::int64_t measure() const {
    std::int64_t m = 0;
    for (const auto& r : rows)
      for (const auto& i : r.iv) m += i.size();
    return m;
  }
  bool empty() const { return rows.empty(); }

  void normalize() {
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.key < b.key; });
    std::vector<Row> out;
    for (auto& r : rows) {
      if (!out.empty() && out.back().key == r.key) {
        out.back().iv.insert(out.back().iv.end(), r.iv.begin(), r.iv.end());
      } else {
        out.push_back(std::move(r));
      }
    }
    for (auto& r : out) {
      std::sort(r.iv.begin(), r.iv.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
      std::vector<Interval> m;
      for (const auto& i : r.iv) {
        if (!m.empty() && i.lo <= m.back().hi + 1)
          m.back().hi = std::max(m.back().hi, i.hi);
        else
          m.push_back(i);
      }
      r.iv = std::move(m);
    }
    rows = std::move(out);
  }

  // Full element list (for small sets and audits).
  std::vector<Elem> elements(const GroupModel& G) const {
    std::vector<Elem> out;
    for (const auto& r : rows)
      for (const auto& i : r.iv)
        for (std::int64_t z = i.lo; z <= i.hi; ++z) {
          if (G.kind == GroupModel::Kind::RootedTree) {
            out.push_back(r.key);
          } else {
            Elem e = r.key;
            e.push_back(z);
            out.push_back(std::move(e));
          }
        }
    return out;
  }
};

struct Overlap {
  std::int64_t a = 0, b = 0, inter = 0;
  std::int64_t sym() const { return a + b - 2 * inter; }
};

inline std::int64_t interval_overlap(const std::vector<Interval>& A, const std::vector<Interval>& B) {
  std::int64_t s = 0;
  std::size_t i = 0, j = 0;
  while (i < A.size() && j < B.size()) {
    std::int64_t lo = std::max(A[i].lo, B[j].lo), hi = std::min(A[i].hi, B[j].hi);
    if (lo <= hi) s += hi - lo + 1;
    if (A[i].hi < B[j].hi)
      ++i;
    else
      ++j;
  }
  return s;
}

inline Overlap overlap(const RowSet& A, const RowSet& B) {
  Overlap o;
  o.a = A.measure();
  o.b = B.measure();
  std::size_t i = 0, j = 0;
  while (i < A.rows.size() && j < B.rows.size()) {
    const auto& ka = A.rows[i].key;
    const auto& kb = B.rows[j].key;
    if (ka < kb) {
      ++i;
    } else if (kb < ka) {
      ++j;
    } else {
      o.inter += interval_overlap(A.rows[i].iv, B.rows[j].iv);
      ++i;
      ++j;
    }
  }
  return o;
}

// Left translate g F. Row order is preserved for both group laws.
inline RowSet translate(const GroupModel& G, const Elem& g, const RowSet& F) {
  if (!G.is_group()) throw std::logic_error("translation needs a group");
  RowSet out;
  out.rows.reserve(F.rows.size());
  for (const auto& r : F.rows) {
    Row t;
    std::int64_t shift;
    if (G.kind == GroupModel::Kind::Zk) {
      t.key = r.key;
      for (std::size_t i = 0; i < t.key.size(); ++i) t.key[i] += g[i];
      shift = g[static_cast<std::size_t>(G.k - 1)];
    } else {  // Heisenberg rows are keyed by (x, y); z -> z + c + a y
      t.key = Elem{r.key[0] + g[0], r.key[1] + g[1]};
      shift = g[2] + g[0] * r.key[1];
    }
    t.iv = r.iv;
    for (auto& i : t.iv) {
      i.lo += shift;
      i.hi += shift;
    }
    out.rows.push_back(std::move(t));
  }
  return out;
}

// overlap(F, translate(G, g, F)) without building the translate: both row
// sequences are walked in key order, the second with its keys offset.
inline Overlap overlap_translated(const GroupModel& G, const RowSet& F, const Elem& g) {
  if (!G.is_group()) throw std::logic_error("translation needs a group");
  Overlap o;
  o.a = o.b = F.measure();
  const bool heis = G.kind == GroupModel::Kind::HeisenbergZ;
  const std::size_t kl = heis ? 2 : static_cast<std::size_t>(G.k - 1);
  // -1, 0, 1 as key a compares to (key b + offset)
  auto cmp = [&](const Elem& a, const Elem& b) {
    for (std::size_t t = 0; t < kl; ++t) {
      const std::int64_t bv = b[t] + g[t];
      if (a[t] != bv) return a[t] < bv ? -1 : 1;
    }
    return 0;
  };
  std::size_t i = 0, j = 0;
  const auto& R = F.rows;
  while (i < R.size() && j < R.size()) {
    const int c = cmp(R[i].key, R[j].key);
    if (c < 0) {
      ++i;
    } else if (c > 0) {
      ++j;
    } else {
      const std::int64_t shift = heis ? g[2] + g[0] * R[j].key[1] : g[kl];
      const auto& A = R[i].iv;
      const auto& B = R[j].iv;
      std::size_t u = 0, v = 0;
      while (u < A.size() && v < B.size()) {
        const std::int64_t blo = B[v].lo + shift, bhi = B[v].hi + shift;
        const std::int64_t lo = std::max(A[u].lo, blo), hi = std::min(A[u].hi, bhi);
        if (lo <= hi) o.inter += hi - lo + 1;
        if (A[u].hi < bhi)
          ++u;
        else
          ++v;
      }
      ++i;
      ++j;
    }
  }
  return o;
}

inline constexpr std::size_t kRowCap = std::size_t{1} << 22;

// Box [-W, W]^k in Z^k.
inline RowSet zk_box(int k, std::int64_t W) {
  if (W < 0) throw std::invalid_argument("box half-width must be >= 0");
  const double rows = std::pow(2.0 * static_cast<double>(W) + 1.0, k - 1);
  if (rows > static_cast<double>(kRowCap)) throw std::length_error("box exceeds row cap");
  RowSet F;
  Elem key(static_cast<std::size_t>(k - 1), -W);
  while (true) {
    F.rows.push_back(Row{key, {Interval{-W, W}}});
    int i = k - 2;
    while (i >= 0 && key[static_cast<std::size_t>(i)] == W) {
      key[static_cast<std::size_t>(i)] = -W;
      --i;
    }
    if (i < 0) break;
    ++key[static_cast<std::size_t>(i)];
  }
  return F;
}

// Gauge ball {g : N(g) <= R} in H3(Z): each (x, y) row is the single
// interval [-m^2, m^2] cap [xy - m^2, xy + m^2], m = R - |x| - |y|.
inline RowSet heis_ball(std::int64_t R) {
  if (R < 0) throw std::invalid_argument("radius must be >= 0");
  if (2.0 * static_cast<double>(R) * static_cast<double>(R) > static_cast<double>(kRowCap))
    throw std::length_error("Heisenberg ball exceeds row cap");
  RowSet F;
  for (std::int64_t x = -R; x <= R; ++x) {
    const std::int64_t rem = R - std::llabs(x);
    for (std::int64_t y = -rem; y <= rem; ++y) {
      const std::int64_t m = rem - std::llabs(y);
      const std::int64_t m2 = m * m;
      const std::int64_t lo = std::max(-m2, x * y - m2), hi = std::min(m2, x * y + m2);
      if (lo <= hi) F.rows.push_back(Row{Elem{x, y}, {Interval{lo, hi}}});
    }
  }
  return F;
}

inline std::int64_t heis_ball_size(std::int64_t R) { return heis_ball(R).measure(); }

// ---------------------------------------------------------------------------
// Defects

inline double folner_defect(const RowSet& F, const Elem& g, const GroupModel& G) {
  if (F.empty()) throw std::invalid_argument("Folner set must be nonempty");
  Overlap o = overlap_translated(G, F, g);
  return static_cast<double>(o.sym()) / static_cast<double>(o.a);
}

inline double a_defect(const RowSet& A, const RowSet& B) {
  if (A.empty() || B.empty()) throw std::invalid_argument("a_defect needs nonempty sets");
  Overlap o = overlap(A, B);
  if (o.inter == 0) return kInf;
  return static_cast<double>(o.sym()) / static_cast<double>(o.inter);
}

// All g with d(e, g) <= r (exact enumeration).
inline std::vector<Elem> group_ball_elements(const GroupModel& G, std::int64_t r) {
  std::vector<Elem> out;
  if (G.kind == GroupModel::Kind::Zk) {
    Elem g(static_cast<std::size_t>(G.k), 0);
    std::function<void(int, std::int64_t)> rec = [&](int i, std::int64_t rem) {
      if (i == G.k) {
        out.push_back(g);
        return;
      }
      for (std::int64_t v = -rem; v <= rem; ++v) {
        g[static_cast<std::size_t>(i)] = v;
        rec(i + 1, rem - std::llabs(v));
      }
      g[static_cast<std::size_t>(i)] = 0;
    };
    rec(0, r);
    return out;
  }
  if (G.kind == GroupModel::Kind::HeisenbergZ) return heis_ball(r).elements(G);
  throw std::logic_error("ball enumeration needs a group");
}

// ---------------------------------------------------------------------------
// Schedules r_n = n, eps_n = 1 / (n log^2 n)

struct AmenableSchedule {
  long first = 3;  // eps_2 = 1 / (2 log^2 2) > 1, so eps' bounds start at 3
  Sequence r = Sequence::power_log(1.0, 1.0, 0.0, 2);
  Sequence eps = Sequence::power_log(1.0, -1.0, -2.0, 2);
  double eps_prime(long n) const {
    double e = eps(n);
    if (!(e < 1.0)) throw std::domain_error("eps_n must be < 1");
    return e / (1.0 - e);
  }
};

// ---------------------------------------------------------------------------
// Folner sequences and the induced A-collections

struct FolnerLevel {
  long n = 0;
  double r = 0.0, eps = 0.0;
  double recipe_radius = 0.0;       // radius named by the closed-form recipe
  double witness_radius = 0.0;     // circumradius of the set actually used
  std::int64_t measure = 0;
  double measured_defect_max = 0.0;  // max over the tested translations
  double recipe_defect_max = kNaN;    // same, for the recipe-radius set (when built)
  bool certified = false;            // measured_defect_max <= eps over all g
  bool sampled = false;              // translations sampled rather than enumerated
  bool recipe_certified = false;
  RowSet F;
};

inline constexpr std::size_t kDefectWorkCap = std::size_t{1} << 31;

// Max defect over translations g with d(e, g) <= r; enumerates when the work
// fits the cap, otherwise uses extremal plus random translations.
// probe_only skips enumeration (used to steer witness searches).
inline std::pair<double, bool> max_translation_defect(const GroupModel& G, const RowSet& F,
                                                      std::int64_t r, std::uint64_t seed,
                                                      bool probe_only = false) {
  std::vector<Elem> gs;
  bool sampled = false;
  double count_est = G.kind == GroupModel::Kind::Zk
                         ? std::pow(2.0 * static_cast<double>(r) + 1.0, G.k)
                         : 2.0 * std::pow(static_cast<double>(r), 4);
  if (!probe_only && count_est * static_cast<double>(F.rows.size()) <= static_cast<double>(kDefectWorkCap)) {
    gs = group_ball_elements(G, r);
  } else {
    sampled = true;
    if (G.kind == GroupModel::Kind::HeisenbergZ) {
      const std::int64_t r2 = r * r;
      gs = {{r, 0, 0}, {-r, 0, 0}, {0, r, 0}, {0, -r, 0}, {0, 0, r2}, {0, 0, -r2},
            {r / 2, r / 2, 0}, {r / 2, -r / 2, 0}, {r / 2, 0, (r / 2) * (r / 2)}};
      CounterRng rng(seed, static_cast<std::uint64_t>(r), 0x68ULL);
      for (int i = 0; i < 64; ++i) {
        std::int64_t x = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(2 * r + 1))) - r;
        std::int64_t rem = r - std::llabs(x);
        std::int64_t y = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(2 * rem + 1))) - rem;
        std::int64_t m = rem - std::llabs(y);
        std::int64_t z = x * y / 2 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(2 * m * m + 1))) - m * m;
        Elem g{x, y, z};
        if (G.norm(g) <= static_cast<double>(r)) gs.push_back(g);
      }
    } else {
      for (int i = 0; i < G.k; ++i) {
        Elem g(static_cast<std::size_t>(G.k), 0);
        g[static_cast<std::size_t>(i)] = r;
        gs.push_back(g);
        g[static_cast<std::size_t>(i)] = -r;
        gs.push_back(g);
      }
    }
  }
  std::vector<double> d(gs.size());
  parallel_for(gs.size(), [&](std::size_t i) { d[i] = folner_defect(F, gs[i], G); });
  double mx = 0.0;
  for (double v : d) mx = std::max(mx, v);
  return {mx, sampled};
}

// Witness set for level n. Z^k: the box of half-width W = ceil(n / eps - 1/2),
// whose defect under any g with |g|_1 <= n is at most 2n / (2W + 1) <= eps.
// H3(Z): the smallest gauge-ball radius (doubling, then bisection) whose
// measured defect is <= eps.
inline FolnerLevel radial_folner_upper(const GroupModel& G, long n, const AmenableSchedule& S = {},
                                       std::uint64_t seed = 7, bool build_recipe_set = true) {
  if (n < 2) throw std::invalid_argument("radial Folner function needs n >= 2");
  FolnerLevel L;
  L.n = n;
  L.r = S.r(n);
  L.eps = S.eps(n);
  const auto rr = static_cast<std::int64_t>(L.r);
  if (G.kind == GroupModel::Kind::Zk) {
    L.recipe_radius = L.r * std::pow(1.0 / L.eps, 1.0 / G.k);
    const auto W = static_cast<std::int64_t>(std::ceil(L.r / L.eps - 0.5));
    L.F = zk_box(G.k, W);
    L.witness_radius = static_cast<double>(G.k) * static_cast<double>(W);
    auto [mx, sampled] = max_translation_defect(G, L.F, rr, seed);
    L.measured_defect_max = mx;
    L.sampled = sampled;
    L.certified = !sampled && mx <= L.eps;
    if (build_recipe_set) {
      const auto Wp = static_cast<std::int64_t>(std::ceil(L.recipe_radius));
      if (Wp == W) {
        L.recipe_defect_max = mx;
        L.recipe_certified = L.certified;
      } else {
        RowSet P = zk_box(G.k, Wp);
        auto [pm, ps] = max_translation_defect(G, P, rr, seed);
        L.recipe_defect_max = pm;
        L.recipe_certified = !ps && pm <= L.eps;
      }
    }
  } else if (G.kind == GroupModel::Kind::HeisenbergZ) {
    L.recipe_radius = 1.0 / L.eps;
    const auto Rp = static_cast<std::int64_t>(std::ceil(L.recipe_radius));
    auto defect_at = [&](std::int64_t R, bool probe) {
      return max_translation_defect(G, heis_ball(R), rr, seed, probe);
    };
    auto [pm, ps] = defect_at(Rp, false);
    L.recipe_defect_max = pm;
    L.recipe_certified = !ps && pm <= L.eps;
    std::int64_t lo = Rp, hi = Rp;
    std::pair<double, bool> at_hi{pm, ps};
    if (pm > L.eps) {
      // Search on extremal and sampled translations, then certify the
      // chosen radius by enumeration; grow it if the enumeration disagrees.
      double probe = pm;
      while (probe > L.eps) {
        lo = hi;
        hi *= 2;
        probe = defect_at(hi, true).first;
      }
      while (hi - lo > 1) {
        std::int64_t mid = lo + (hi - lo) / 2;
        if (defect_at(mid, true).first <= L.eps)
          hi = mid;
        else
          lo = mid;
      }
      at_hi = defect_at(hi, false);
      while (at_hi.first > L.eps) {
        hi += std::max<std::int64_t>(1, hi / 20);
        at_hi = defect_at(hi, false);
      }
    }
    L.F = heis_ball(hi);
    L.witness_radius = static_cast<double>(hi);
    L.measured_defect_max = at_hi.first;
    L.sampled = at_hi.second;
    L.certified = !at_hi.second && at_hi.first <= L.eps;
  } else {
    throw std::invalid_argument("radial Folner witness needs Z^k or H3(Z)");
  }
  L.measure = L.F.measure();
  return L;
}

// ---------------------------------------------------------------------------
// A-collections

struct ACollection {
  GroupModel G;
  AmenableSchedule S;
  long first = 3, last = 3;
  std::vector<double> rad;           // radial bound per level (index n - first)
  std::vector<double> defect_bound;  // certified a-defect bound per level
  std::function<RowSet(long n, const Elem& x)> set;
  // For groups, A_n(x) = x F_n and the A-sets of a pair can be compared via
  // F_n against x^{-1} y F_n.
  std::vector<RowSet> folner;

  double radius(long n) const { return rad[static_cast<std::size_t>(n - first)]; }
  double bound(long n) const { return defect_bound[static_cast<std::size_t>(n - first)]; }

  Overlap pair_overlap(long n, const Elem& x, const Elem& y) const {
    if (G.is_group()) {
      const RowSet& F = folner[static_cast<std::size_t>(n - first)];
      return overlap_translated(G, F, G.mul(G.inv(x), y));
    }
    return overlap(set(n, x), set(n, y));
  }
};

// (F_n) with certified Folner defects eps_n -> (x F_n) with a-defect bound
// eps_n / (1 - eps_n) and radial bound rad_c(F_n).
inline ACollection folner_to_acollection(const GroupModel& G, const std::vector<FolnerLevel>& levels,
                                         const AmenableSchedule& S = {}) {
  if (levels.empty()) throw std::invalid_argument("empty Folner sequence");
  ACollection A;
  A.G = G;
  A.S = S;
  A.first = levels.front().n;
  A.last = levels.back().n;
  for (const auto& L : levels) {
    if (!(L.eps < 1.0)) throw std::domain_error("folner_to_acollection requires eps_n < 1");
    A.rad.push_back(L.witness_radius);
    A.defect_bound.push_back(L.eps / (1.0 - L.eps));
    A.folner.push_back(L.F);
  }
  auto shared = std::make_shared<std::vector<RowSet>>(A.folner);
  const long first = A.first;
  A.set = [G, shared, first](long n, const Elem& x) {
    return translate(G, x, (*shared)[static_cast<std::size_t>(n - first)]);
  };
  return A;
}

// Tree: A_n(t) is the L_n + 1 vertices of the ray omega_t starting at t,
// L_n = ceil(r_n / eps_n); omega_t climbs to the designated ray and follows it.
inline std::int64_t tree_segment_length(long n, const AmenableSchedule& S) {
  return static_cast<std::int64_t>(std::ceil(S.r(n) / S.eps(n)));
}

inline RowSet tree_segment(const GroupModel& T, const Elem& t, std::int64_t L) {
  const std::int64_t s = t[0];
  const std::int64_t l = static_cast<std::int64_t>(t.size()) - 1;
  if (s + std::max<std::int64_t>(0, L - l) > T.depth)
    throw std::length_error("tree truncation depth insufficient for segment");
  RowSet A;
  for (std::int64_t i = 0; i <= std::min(L, l); ++i) {
    Elem v(t.begin(), t.end() - i);
    A.rows.push_back(Row{std::move(v), {Interval{0, 0}}});
  }
  for (std::int64_t i = 1; i <= L - l; ++i) A.rows.push_back(Row{Elem{s + i}, {Interval{0, 0}}});
  A.normalize();
  return A;
}

inline ACollection tree_acollection(const GroupModel& T, long first, long last,
                                    const AmenableSchedule& S = {}) {
  if (T.kind != GroupModel::Kind::RootedTree) throw std::invalid_argument("tree model required");
  ACollection A;
  A.G = T;
  A.S = S;
  A.first = first;
  A.last = last;
  std::vector<std::int64_t> lens;
  for (long n = first; n <= last; ++n) {
    const std::int64_t L = tree_segment_length(n, S);
    lens.push_back(L);
    A.rad.push_back(static_cast<double>(L));
    // |A delta B| <= 2 r_n and |A cap B| >= L + 1 - r_n when d <= r_n.
    A.defect_bound.push_back(2.0 * S.r(n) / (static_cast<double>(L) + 1.0 - S.r(n)));
  }
  A.set = [T, lens, first](long n, const Elem& x) {
    return tree_segment(T, x, lens[static_cast<std::size_t>(n - first)]);
  };
  return A;
}

// ---------------------------------------------------------------------------
// Characteristic-function embeddings

struct SparseVector {
  std::vector<Elem> support;  // sorted
  std::vector<double> values;
};

inline SparseVector char_embedding_block(const ACollection& A, long n, const Elem& x, ExponentRegime p) {
  if (!p.is_norm()) throw std::invalid_argument("characteristic embeddings need p >= 1");
  RowSet S = A.set(n, x);
  if (S.empty()) throw std::invalid_argument("empty A-set");
  SparseVector v;
  v.support = S.elements(A.G);
  std::sort(v.support.begin(), v.support.end());
  const double val = std::pow(static_cast<double>(v.support.size()), -1.0 / p.p);
  v.values.assign(v.support.size(), val);
  return v;
}

// ||u - v||_p^p for sparse vectors (merge over the sorted supports).
inline double sparse_lp_power(const SparseVector& u, const SparseVector& v, double p) {
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < u.support.size() || j < v.support.size()) {
    if (j == v.support.size() || (i < u.support.size() && u.support[i] < v.support[j])) {
      s += std::pow(std::fabs(u.values[i++]), p);
    } else if (i == u.support.size() || v.support[j] < u.support[i]) {
      s += std::pow(std::fabs(v.values[j++]), p);
    } else {
      s += std::pow(std::fabs(u.values[i++] - v.values[j++]), p);
    }
  }
  return s;
}

// ||chi_A/|A|^{1/p} - chi_B/|B|^{1/p}||_p^p from set sizes alone.
inline double char_distance_power(const Overlap& o, double p) {
  const double a = static_cast<double>(o.a), b = static_cast<double>(o.b);
  const double onlyA = static_cast<double>(o.a - o.inter), onlyB = static_cast<double>(o.b - o.inter);
  if (o.a == o.b) return static_cast<double>(o.sym()) / a;
  double diff = std::fabs(std::pow(a, -1.0 / p) - std::pow(b, -1.0 / p));
  return onlyA / a + onlyB / b + static_cast<double>(o.inter) * std::pow(diff, p);
}

struct GroupPair {
  Elem x, y;
  double d = 0.0;
};

// Pairs with d(x, y) <= r: groups use y = x g with g drawn from the r-ball,
// trees use a random walk of at most r steps.
inline std::vector<GroupPair> sample_close_pairs(const GroupModel& G, std::size_t count, double r,
                                                 std::uint64_t seed, std::int64_t spread = 1000) {
  std::vector<GroupPair> out(count);
  const auto R = static_cast<std::int64_t>(std::floor(r));
  for (std::size_t i = 0; i < count; ++i) {
    CounterRng rng(seed, i, 0x636c6f7365ULL);
    auto uni = [&](std::int64_t a, std::int64_t b) {
      return a + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(b - a + 1)));
    };
    GroupPair p;
    if (G.kind == GroupModel::Kind::RootedTree) {
      Elem v{uni(0, spread)};
      std::int64_t l = uni(0, 6);
      for (std::int64_t j = 0; j < l; ++j) v.push_back(j == 0 ? uni(1, G.branching - 1) : uni(0, G.branching - 1));
      p.x = v;
      std::int64_t steps = uni(0, R);
      for (std::int64_t j = 0; j < steps; ++j) {
        // parent or a random child, each with probability 1/2
        if (rng.uniform() < 0.5 && (v.size() > 1 || v[0] > 0)) {
          if (v.size() > 1)
            v.pop_back();
          else
            v[0] -= 1;
        } else {
          if (v.size() == 1) {
            std::int64_t c = uni(0, G.branching - 1);
            if (c == 0)
              v[0] += 1;
            else
              v.push_back(c);
          } else {
            v.push_back(uni(0, G.branching - 1));
          }
        }
      }
      p.y = v;
    } else {
      Elem x(static_cast<std::size_t>(G.k));
      for (auto& c : x) c = uni(-spread, spread);
      Elem g;
      if (G.kind == GroupModel::Kind::Zk) {
        g.assign(static_cast<std::size_t>(G.k), 0);
        std::int64_t rem = uni(0, R);
        for (int j = 0; j < G.k; ++j) {
          std::int64_t v = j == G.k - 1 ? rem : uni(0, rem);
          rem -= v;
          g[static_cast<std::size_t>(j)] = rng.uniform() < 0.5 ? -v : v;
        }
      } else {
        std::int64_t a = uni(-R, R);
        std::int64_t rem = R - std::llabs(a);
        std::int64_t b = uni(-rem, rem);
        std::int64_t m = rem - std::llabs(b);
        std::int64_t lo = std::max(-m * m, a * b - m * m), hi = std::min(m * m, a * b + m * m);
        g = Elem{a, b, lo <= hi ? uni(lo, hi) : 0};
      }
      p.x = x;
      p.y = G.mul(x, g);
    }
    p.d = G.dist(p.x, p.y);
    out[i] = std::move(p);
  }
  return out;
}

struct CharBoundReport {
  long n = 0;
  std::size_t pairs = 0, checked = 0;
  std::size_t violations = 0;          // value > bound
  std::size_t support_violations = 0;  // A_n(x) not inside B(x, rad(n))
  double max_value = 0.0;              // max ||phi x - phi y||_p^p over checked pairs
  double bound = 0.0;                  // 2 eps'_n unless overridden
};

// Checks ||phi_n(x) - phi_n(y)||_p^p <= 2 eps'_n for pairs with d <= r_n, and
// (on the first few pairs) that supp phi_n(x) lies in B(x, rad(n)).
inline CharBoundReport char_embedding_bound_check(const ACollection& A, long n,
                                                  const std::vector<GroupPair>& pairs,
                                                  ExponentRegime p, double bound_override = kNaN,
                                                  std::size_t support_audits = 8) {
  CharBoundReport rep;
  rep.n = n;
  rep.pairs = pairs.size();
  // bound_override replaces 2 eps'_n (negative controls only)
  rep.bound = std::isnan(bound_override) ? 2.0 * A.bound(n) : bound_override;
  const double r = A.S.r(n);
  std::vector<double> val(pairs.size(), -1.0);
  parallel_for(pairs.size(), [&](std::size_t i) {
    if (pairs[i].d > r) return;
    val[i] = char_distance_power(A.pair_overlap(n, pairs[i].x, pairs[i].y), p.p);
  });
  for (double v : val) {
    if (v < 0.0) continue;
    rep.checked++;
    rep.max_value = std::max(rep.max_value, v);
    rep.violations += v > rep.bound * (1.0 + 1e-12);
  }
  for (std::size_t i = 0; i < std::min(support_audits, pairs.size()); ++i) {
    RowSet S = A.set(n, pairs[i].x);
    if (S.measure() > 4'000'000) continue;
    for (const auto& e : S.elements(A.G))
      if (A.G.dist(pairs[i].x, e) > A.radius(n)) {
        rep.support_violations++;
        break;
      }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Glued embedding into l_p(G)-blocks

class CharFamily {
 public:
  using Point = Elem;
  CharFamily(std::shared_ptr<const ACollection> A, ExponentRegime p) : A_(std::move(A)), p_(p) {}
  std::size_t blocks() const { return static_cast<std::size_t>(A_->last - A_->first + 1); }
  ExponentRegime block_regime() const { return p_; }
  bool has_coordinates() const { return false; }
  std::vector<double> block_coords(std::size_t, const Point&) const {
    throw std::logic_error("characteristic blocks are sparse; use char_embedding_block");
  }
  void block_distances(const Point& x, const Point& y, std::span<double> out) const {
    for (std::size_t j = 0; j < blocks(); ++j) {
      double v = char_distance_power(A_->pair_overlap(A_->first + static_cast<long>(j), x, y), p_.p);
      out[j] = std::pow(v, 1.0 / p_.p);
    }
  }
  // Blockwise p-th powers, with a flag for disjoint supports.
  void block_powers(const Point& x, const Point& y, std::vector<double>& pw,
                    std::vector<char>& disjoint) const {
    pw.resize(blocks());
    disjoint.resize(blocks());
    for (std::size_t j = 0; j < blocks(); ++j) {
      Overlap o = A_->pair_overlap(A_->first + static_cast<long>(j), x, y);
      pw[j] = char_distance_power(o, p_.p);
      disjoint[j] = o.inter == 0;
    }
  }
  const ACollection& collection() const { return *A_; }

 private:
  std::shared_ptr<const ACollection> A_;
  ExponentRegime p_;
};

// Schedule for the coarse gluing of A-collection blocks: r_n = n,
// delta_n <= (2 eps'_n)^{1/p} when d <= r_n, disjoint supports once
// d > 2 rad(n) (integer metrics: d >= 2 rad(n) + 1) giving exactly 2 per block.
inline ParamSchedule group_schedule(const ACollection& A, ExponentRegime p, bool metric_triangle) {
  ParamSchedule S;
  S.name = "property_a_" + A.G.name();
  S.kind = GluingKind::Coarse;
  S.q = p;
  S.first = A.first;
  S.r = Sequence::power_log(1.0, 1.0, 0.0, A.first);
  std::vector<double> epsv, sv;
  for (long n = A.first; n <= A.last; ++n) {
    epsv.push_back(std::pow(2.0 * A.bound(n), 1.0 / p.p));
    sv.push_back(metric_triangle ? 2.0 * A.radius(n) + 1.0 : kInf);
  }
  const AmenableSchedule AS = A.S;
  const long last = A.last;
  const bool tree = A.G.kind == GroupModel::Kind::RootedTree;
  // Tail of sum (2 eps'_n) beyond the table, with eps'_n <= eps_n / (1 - eps_{last+1})
  // for Folner systems and the tree bound 2 r_n / (L_n + 1 - r_n) <= 2 eps_n / (1 - eps_n).
  S.eps = Sequence::tabulated(epsv, A.first, [AS, last, tree](double q) {
    const double e1 = AS.eps(last + 1);
    const double c = (tree ? 4.0 : 2.0) / (1.0 - e1);
    (void)q;  // entries are (2 eps')^{1/p}, so their p-th powers sum the bounds
    return c * AS.eps.tail_power_sum(1.0, last);
  });
  S.s = Sequence::tabulated(sv, A.first, nullptr);
  S.kernel = S.r;
  S.eta = std::pow(2.0, 1.0 / p.p);
  S.eta_source = "disjoint_supports";
  S.eps_factor = 1.0;
  S.block_diameter = 2.0;
  return S;
}

struct DisjointAudit {
  std::size_t pairs = 0;
  std::size_t disjoint_blocks = 0;
  std::size_t inexact = 0;     // disjoint blocks whose p-th power differs from 2
  std::size_t predicted_not_disjoint = 0;  // d > 2 rad(n) but supports overlap
};

inline DisjointAudit disjoint_support_audit(const CharFamily& fam, const std::vector<GroupPair>& pairs,
                                            bool metric_triangle) {
  DisjointAudit a;
  a.pairs = pairs.size();
  const ACollection& A = fam.collection();
  struct R {
    std::size_t dis = 0, bad = 0, pnd = 0;
  };
  std::vector<R> res(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    std::vector<double> pw;
    std::vector<char> dj;
    fam.block_powers(pairs[i].x, pairs[i].y, pw, dj);
    R r;
    for (std::size_t j = 0; j < pw.size(); ++j) {
      const long n = A.first + static_cast<long>(j);
      if (dj[j]) {
        r.dis++;
        r.bad += pw[j] != 2.0;
      } else if (metric_triangle && pairs[i].d > 2.0 * A.radius(n)) {
        r.pnd++;
      }
    }
    res[i] = r;
  });
  for (const auto& r : res) {
    a.disjoint_blocks += r.dis;
    a.inexact += r.bad;
    a.predicted_not_disjoint += r.pnd;
  }
  return a;
}

// Pairs at log-uniform distances in [t_min, t_max] (groups: y = x g with g
// along a random axis / gauge direction; trees: walk along the designated ray
// and branches).
inline std::vector<GroupPair> sample_spread_pairs(const GroupModel& G, std::size_t count, double t_min,
                                                  double t_max, std::uint64_t seed) {
  std::vector<GroupPair> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    CounterRng rng(seed, i, 0x737072656164ULL);
    auto uni = [&](std::int64_t a, std::int64_t b) {
      return a + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(b - a + 1)));
    };
    const double t = std::exp(rng.uniform(std::log(t_min), std::log(t_max)));
    const auto T = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(t)));
    GroupPair p;
    if (G.kind == GroupModel::Kind::Zk) {
      Elem x(static_cast<std::size_t>(G.k)), g(static_cast<std::size_t>(G.k), 0);
      for (auto& c : x) c = uni(-1000, 1000);
      std::int64_t rem = T;
      for (int j = 0; j < G.k; ++j) {
        std::int64_t v = j == G.k - 1 ? rem : uni(0, rem);
        rem -= v;
        g[static_cast<std::size_t>(j)] = rng.uniform() < 0.5 ? -v : v;
      }
      p.x = x;
      p.y = G.mul(x, g);
    } else if (G.kind == GroupModel::Kind::HeisenbergZ) {
      Elem x{uni(-50, 50), uni(-50, 50), uni(-2500, 2500)};
      std::int64_t a = uni(-T, T);
      std::int64_t rem = T - std::llabs(a);
      std::int64_t b = rng.uniform() < 0.5 ? -rem : rem;
      Elem g{a, b, a * b / 2};
      p.x = x;
      p.y = G.mul(x, g);
    } else {
      const std::int64_t s = uni(0, 100);
      std::int64_t up = uni(0, std::min<std::int64_t>(T, 6));
      Elem x{s};
      for (std::int64_t j = 0; j < up; ++j) x.push_back(j == 0 ? uni(1, G.branching - 1) : uni(0, G.branching - 1));
      Elem y{s + (T - up)};
      p.x = x;
      p.y = y;
    }
    p.d = G.dist(p.x, p.y);
    out[i] = std::move(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Predicted gaps

struct GroupGap {
  MonotoneFunction lower;  // h_{(a,b)}(t)^{1/p}
  MonotoneFunction upper;  // t^{1/p}
  double a = 0.0, b = 0.0;
};

inline GroupGap predicted_group_gap(const GroupModel& G, ExponentRegime p) {
  double a, b;
  switch (G.kind) {
    case GroupModel::Kind::Zk:
      a = (G.k + 1.0) / G.k;
      b = 2.0 / G.k;
      break;
    case GroupModel::Kind::HeisenbergZ:
      a = 1.0;
      b = 2.0;
      break;
    case GroupModel::Kind::RootedTree:
      a = 2.0;
      b = 2.0;
      break;
    default:
      throw std::invalid_argument("unsupported model");
  }
  const double inv_p = 1.0 / p.p;
  const double tmin = h_forward(a, b, h_domain_start(a, b));
  GroupGap g{MonotoneFunction::custom(
                 [a, b, inv_p, tmin](double t) { return std::pow(h_ab(a, b, std::max(t, tmin)), inv_p); },
                 0.0, kInf, "h_inverse_root"),
             MonotoneFunction::power(1.0, inv_p), a, b};
  return g;
}

}  // namespace embedlab
