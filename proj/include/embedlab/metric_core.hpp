#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace embedlab {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Exponent regimes

enum class Regime { SumOfPowers, Norm };

struct ExponentRegime {
  double p = 2.0;
  Regime regime = Regime::Norm;

  ExponentRegime() = default;
  ExponentRegime(double p_, Regime r) : p(p_), regime(r) {
    if (!(p > 0.0) || !std::isfinite(p))
      throw std::invalid_argument("exponent must be positive and finite");
    if (r == Regime::SumOfPowers && p > 1.0)
      throw std::invalid_argument("sum-of-powers regime requires p <= 1");
    if (r == Regime::Norm && p < 1.0)
      throw std::invalid_argument("norm regime requires p >= 1");
  }

  // Canonical regime for p; p == 1 lands on Norm (both coincide there).
  static ExponentRegime of(double p) {
    return ExponentRegime(p, p < 1.0 ? Regime::SumOfPowers : Regime::Norm);
  }

  bool is_norm() const { return regime == Regime::Norm; }
};

// ---------------------------------------------------------------------------
// Truncated vectors with optional block structure

struct TruncatedVector {
  std::vector<double> coords;
  // Either empty (one block) or [0, b1, ..., size] strictly increasing.
  std::vector<std::size_t> block_offsets;

  TruncatedVector() = default;
  explicit TruncatedVector(std::vector<double> c) : coords(std::move(c)) {}
  TruncatedVector(std::vector<double> c, std::vector<std::size_t> offs)
      : coords(std::move(c)), block_offsets(std::move(offs)) {
    validate();
  }

  std::size_t size() const { return coords.size(); }

  std::size_t blocks() const {
    return block_offsets.empty() ? 1 : block_offsets.size() - 1;
  }

  std::span<const double> block(std::size_t i) const {
    if (block_offsets.empty()) {
      if (i != 0) throw std::out_of_range("block index");
      return {coords.data(), coords.size()};
    }
    if (i + 1 >= block_offsets.size()) throw std::out_of_range("block index");
    return {coords.data() + block_offsets[i],
            block_offsets[i + 1] - block_offsets[i]};
  }

  std::span<const double> view() const { return {coords.data(), coords.size()}; }

  void validate() const {
    for (double c : coords)
      if (!std::isfinite(c))
        throw std::invalid_argument("non-finite coordinate");
    if (block_offsets.empty()) return;
    if (block_offsets.front() != 0 || block_offsets.back() != coords.size())
      throw std::invalid_argument("block offsets must span [0, size]");
    for (std::size_t i = 1; i < block_offsets.size(); ++i)
      if (block_offsets[i] <= block_offsets[i - 1])
        throw std::invalid_argument("block offsets must be strictly increasing");
  }
};

// ---------------------------------------------------------------------------
// Distances

inline double pow_abs(double v, double p) {
  v = std::fabs(v);
  if (p == 1.0) return v;
  if (p == 2.0) return v * v;
  if (p == 4.0) {
    double s = v * v;
    return s * s;
  }
  if (p == 0.5) return std::sqrt(v);
  return std::pow(v, p);
}

// Sum of |x_i - y_i|^p over the two spans, no finiteness checks.
inline double power_sum(std::span<const double> x, std::span<const double> y,
                        double p) {
  double s = 0.0;
  const std::size_t n = x.size();
  if (p == 2.0 || p == 4.0) {
    // four fixed partial sums: vectorisable, same order on every run
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
      for (std::size_t k = 0; k < 4; ++k) {
        double d = (x[i + k] - y[i + k]) * (x[i + k] - y[i + k]);
        if (p == 4.0) d *= d;
        acc[k] += d;
      }
    for (; i < n; ++i) {
      double d = (x[i] - y[i]) * (x[i] - y[i]);
      if (p == 4.0) d *= d;
      acc[0] += d;
    }
    s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  } else {
    for (std::size_t i = 0; i < n; ++i) s += pow_abs(x[i] - y[i], p);
  }
  return s;
}

inline double sum_squares(std::span<const double> x) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= x.size(); i += 4)
    for (std::size_t k = 0; k < 4; ++k) acc[k] += x[i + k] * x[i + k];
  for (; i < x.size(); ++i) acc[0] += x[i] * x[i];
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

inline double lp_distance(std::span<const double> x, std::span<const double> y,
                          ExponentRegime p) {
  if (x.size() != y.size()) throw std::invalid_argument("length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
      throw std::invalid_argument("non-finite coordinate");
  double s = power_sum(x, y, p.p);
  if (!p.is_norm() || p.p == 1.0) return s;
  if (p.p == 2.0) return std::sqrt(s);
  return std::pow(s, 1.0 / p.p);
}

inline double lp_distance(const TruncatedVector& x, const TruncatedVector& y,
                          ExponentRegime p) {
  return lp_distance(x.view(), y.view(), p);
}

// Combine per-block distances into the l_q-sum distance.
inline double lq_combine(std::span<const double> deltas, ExponentRegime q) {
  double s = 0.0;
  for (double d : deltas) s += pow_abs(d, q.p);
  if (!q.is_norm() || q.p == 1.0) return s;
  return std::pow(s, 1.0 / q.p);
}

using BlockMetric = std::function<double(std::span<const double>,
                                         std::span<const double>, std::size_t)>;

inline double lp_sum_distance(const TruncatedVector& x, const TruncatedVector& y,
                              ExponentRegime q, const BlockMetric& block_metric) {
  if (x.block_offsets != y.block_offsets || x.size() != y.size())
    throw std::invalid_argument("mismatched block structure");
  std::vector<double> deltas(x.blocks());
  for (std::size_t b = 0; b < deltas.size(); ++b)
    deltas[b] = block_metric(x.block(b), y.block(b), b);
  return lq_combine(deltas, q);
}

inline double snowflake_distance(double d, double s) {
  if (d < 0.0) throw std::invalid_argument("distance must be nonnegative");
  if (!(s > 0.0 && s <= 1.0)) throw std::invalid_argument("snowflake exponent in (0,1]");
  return d == 0.0 ? 0.0 : std::pow(d, s);
}

// ---------------------------------------------------------------------------
// Root finding

struct RootOptions {
  double rel_tol = 1e-12;
  int max_iter = 200;
};

// ---------------------------------------------------------------------------
// Sequences n -> c * n^a * log(n)^b, geometric c * ratio^n, or tabulated.

struct Sequence {
  enum class Kind { PowerLog, Geometric, Tabulated };
  Kind kind = Kind::PowerLog;
  double c = 1.0, a = 0.0, b = 0.0;  // PowerLog
  double ratio = 0.5;                // Geometric
  long first = 1;                    // first valid index
  std::vector<double> table;         // Tabulated values from `first`
  // Tabulated only: user-supplied certified bound on sum_{n > last} x_n^q.
  std::function<double(double q)> tail_certificate;

  static Sequence power_log(double c, double a, double b, long first = 1) {
    Sequence s;
    s.kind = Kind::PowerLog;
    s.c = c;
    s.a = a;
    s.b = b;
    s.first = first;
    if (b != 0.0 && first < 2)
      throw std::invalid_argument("log factor needs first index >= 2");
    return s;
  }

  static Sequence geometric(double c, double ratio, long first = 1) {
    if (!(ratio > 0.0 && ratio < 1.0))
      throw std::invalid_argument("geometric ratio must lie in (0,1)");
    Sequence s;
    s.kind = Kind::Geometric;
    s.c = c;
    s.ratio = ratio;
    s.first = first;
    return s;
  }

  static Sequence tabulated(std::vector<double> values, long first,
                            std::function<double(double)> tail) {
    Sequence s;
    s.kind = Kind::Tabulated;
    s.table = std::move(values);
    s.first = first;
    s.tail_certificate = std::move(tail);
    return s;
  }

  long last() const {
    return kind == Kind::Tabulated ? first + static_cast<long>(table.size()) - 1
                                   : std::numeric_limits<long>::max();
  }

  // Evaluation at a real argument; integer arguments give the sequence terms.
  double at(double x) const {
    switch (kind) {
      case Kind::PowerLog: {
        double v = c * std::pow(x, a);
        if (b != 0.0) v *= std::pow(std::log(x), b);
        return v;
      }
      case Kind::Geometric:
        return c * std::pow(ratio, x);
      case Kind::Tabulated: {
        long n = static_cast<long>(std::llround(x));
        if (n < first || n > last()) throw std::out_of_range("tabulated index");
        return table[static_cast<std::size_t>(n - first)];
      }
    }
    return 0.0;
  }

  double operator()(long n) const {
    if (n < first) throw std::out_of_range("sequence index below first");
    return at(static_cast<double>(n));
  }

  // Certified upper bound on sum_{n > N} x_n^q (N >= first - 1).
  double tail_power_sum(double q, long N) const;

  // sum_{n = first}^{N} x_n^q, summed in index order.
  double prefix_power_sum(double q, long N) const {
    double s = 0.0;
    for (long n = first; n <= N; ++n) s += std::pow((*this)(n), q);
    return s;
  }
};

inline double Sequence::tail_power_sum(double q, long N) const {
  if (N < first - 1) N = first - 1;
  switch (kind) {
    case Kind::Geometric: {
      double rq = std::pow(ratio, q);
      return std::pow(c, q) * std::pow(rq, static_cast<double>(N + 1)) / (1.0 - rq);
    }
    case Kind::Tabulated: {
      if (!tail_certificate)
        throw std::invalid_argument("tabulated sequence lacks a tail certificate");
      double s = 0.0;
      for (long n = N + 1; n <= last(); ++n) s += std::pow((*this)(n), q);
      return s + tail_certificate(q);
    }
    case Kind::PowerLog:
      break;
  }
  // Terms C n^{-alpha} log^{-gamma} n.
  const double alpha = -a * q;
  const double gamma = -b * q;
  const double C = std::pow(c, q);
  if (alpha < 1.0 || (alpha == 1.0 && gamma <= 1.0))
    throw std::invalid_argument("sequence is not q-summable");
  if (alpha > 1.0 && gamma < 0.0)
    throw std::invalid_argument("tail certificate unavailable for growing log factor");
  // Sum explicitly until the term is decreasing, then bound by the integral.
  long M = std::max<long>(N, 2);
  if (gamma < 0.0 || alpha * std::log(static_cast<double>(M)) + gamma <= 0.0) {
    double turn = std::exp(-gamma / alpha);
    M = std::max<long>(M, static_cast<long>(std::ceil(turn)) + 1);
  }
  double s = 0.0;
  for (long n = N + 1; n <= M; ++n) s += std::pow((*this)(n), q);
  const double L = std::log(static_cast<double>(M));
  double integral;
  if (alpha == 1.0) {
    integral = std::pow(L, 1.0 - gamma) / (gamma - 1.0);
  } else {
    const double lam = alpha - 1.0;
    // int_L^inf e^{-lam u} u^{-gamma} du <= L^{-gamma} e^{-lam L} / lam
    integral = std::pow(L, -gamma) * std::exp(-lam * L) / lam;
  }
  return s + C * integral;
}

// ---------------------------------------------------------------------------
// Nondecreasing functions with a generalized inverse

class MonotoneFunction {
 public:
  enum class Kind { Power, PowerLog, HInverse, Tabulated, SequenceExtension, Composite };

  Kind kind() const { return kind_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const std::string& label() const { return label_; }
  const std::vector<double>& xs() const { return xs_; }
  const std::vector<double>& ys() const { return ys_; }

  double operator()(double t) const {
    if (t < lo_ || t > hi_) throw std::out_of_range("outside function domain");
    return f_(t);
  }

  // c * t^a on [0, inf)
  static MonotoneFunction power(double c, double a) {
    return make(Kind::Power, 0.0, kInf, [c, a](double t) {
      return t == 0.0 ? (a == 0.0 ? c : 0.0) : c * std::pow(t, a);
    }, "power");
  }

  // c * t^a * log(t)^b on [lo, inf)
  static MonotoneFunction power_log(double c, double a, double b, double lo) {
    return make(Kind::PowerLog, lo, kInf, [c, a, b](double t) {
      return c * std::pow(t, a) * std::pow(std::log(t), b);
    }, "power_log");
  }

  // Piecewise-linear through (xs, ys), constant beyond the last breakpoint.
  static MonotoneFunction tabulated(std::vector<double> xs, std::vector<double> ys) {
    if (xs.size() != ys.size() || xs.empty())
      throw std::invalid_argument("tabulated function needs matching breakpoints");
    for (std::size_t i = 1; i < xs.size(); ++i)
      if (!(xs[i] > xs[i - 1])) throw std::invalid_argument("breakpoints must increase");
    auto X = std::make_shared<std::vector<double>>(xs);
    auto Y = std::make_shared<std::vector<double>>(ys);
    MonotoneFunction m = make(Kind::Tabulated, xs.front(), kInf, [X, Y](double t) {
      const auto& x = *X;
      const auto& y = *Y;
      if (t >= x.back()) return y.back();
      auto it = std::upper_bound(x.begin(), x.end(), t);
      std::size_t j = static_cast<std::size_t>(it - x.begin());
      double w = (t - x[j - 1]) / (x[j] - x[j - 1]);
      return y[j - 1] + w * (y[j] - y[j - 1]);
    }, "tabulated", false);
    m.xs_ = std::move(xs);
    m.ys_ = std::move(ys);
    m.check_monotone();
    return m;
  }

  // Linear interpolation of a sequence between consecutive integers.
  static MonotoneFunction sequence_extension(const Sequence& s) {
    return make(Kind::SequenceExtension, static_cast<double>(s.first),
                s.kind == Sequence::Kind::Tabulated ? static_cast<double>(s.last())
                                                    : kInf,
                [s](double x) {
                  double fl = std::floor(x);
                  long n = static_cast<long>(fl);
                  double v0 = s(n);
                  if (x == fl) return v0;
                  double v1 = s(n + 1);
                  return v0 + (x - fl) * (v1 - v0);
                },
                "sequence_extension");
  }

  // Arbitrary nondecreasing callable on [lo, hi].
  static MonotoneFunction custom(std::function<double(double)> f, double lo,
                                 double hi, std::string label) {
    return make(Kind::Composite, lo, hi, std::move(f), std::move(label));
  }

 private:
  static MonotoneFunction make(Kind k, double lo, double hi,
                               std::function<double(double)> f, std::string label,
                               bool check = true) {
    MonotoneFunction m;
    m.kind_ = k;
    m.lo_ = lo;
    m.hi_ = hi;
    m.f_ = std::move(f);
    m.label_ = std::move(label);
    if (check) m.check_monotone();
    return m;
  }

  void check_monotone() const {
    double a = lo_;
    double b = std::isfinite(hi_) ? hi_ : std::max(1.0, lo_) * 1e6;
    const int n = 64;
    double prev = -kInf;
    for (int i = 0; i <= n; ++i) {
      double t;
      if (a > 0.0)
        t = a * std::pow(b / a, static_cast<double>(i) / n);
      else
        t = a + (b - a) * std::pow(static_cast<double>(i) / n, 3.0);
      t = std::clamp(t, a, b);
      double v = f_(t);
      if (v < prev - 1e-12 * std::fabs(prev))
        throw std::invalid_argument("function is not nondecreasing: " + label_);
      prev = v;
    }
  }

  Kind kind_ = Kind::Power;
  double lo_ = 0.0, hi_ = kInf;
  std::function<double(double)> f_;
  std::string label_;
  std::vector<double> xs_, ys_;
};

// inf{x : T(x) >= y}, +inf when no such x exists in the domain.
inline double generalized_inverse(const MonotoneFunction& T, double y,
                                  RootOptions opt = {}) {
  if (T.kind() == MonotoneFunction::Kind::Tabulated) {
    const auto& xs = T.xs();
    const auto& ys = T.ys();
    if (ys.front() >= y) return xs.front();
    for (std::size_t j = 1; j < xs.size(); ++j) {
      if (ys[j] >= y) {
        // ys[j-1] < y <= ys[j] on a linear piece
        double w = (y - ys[j - 1]) / (ys[j] - ys[j - 1]);
        return xs[j - 1] + w * (xs[j] - xs[j - 1]);
      }
    }
    return kInf;
  }
  double lo = T.lo();
  if (T(lo) >= y) return lo;
  // Bracket by doubling the distance from lo.
  double step = std::max(1.0, std::fabs(lo));
  double hi = lo + step;
  while (true) {
    if (hi >= T.hi()) {
      hi = T.hi();
      if (!std::isfinite(hi) || T(hi) < y) return kInf;
      break;
    }
    if (T(hi) >= y) break;
    lo = hi;
    step *= 2.0;
    hi = lo + step;
    if (!std::isfinite(hi) || step > 1e300) return kInf;
  }
  for (int it = 0; it < opt.max_iter; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (T(mid) >= y)
      hi = mid;
    else
      lo = mid;
    if (hi - lo <= opt.rel_tol * std::max(std::fabs(hi), 1e-300)) break;
  }
  return hi;
}

// ---------------------------------------------------------------------------
// h_{(a,b)}: inverse of s -> s^a log(s)^b on its increasing range

// Left end of the increasing range of s^a log^b s.
inline double h_domain_start(double a, double b) {
  if (!(a > 0.0)) throw std::invalid_argument("h_ab requires a > 0");
  if (b == 0.0) return 0.0;
  if (b > 0.0) return 1.0;
  return std::exp(-b / a);
}

inline double h_forward(double a, double b, double s) {
  if (b == 0.0) return std::pow(s, a);
  return std::pow(s, a) * std::pow(std::log(s), b);
}

inline double h_ab(double a, double b, double t, RootOptions opt = {}) {
  const double s0 = h_domain_start(a, b);
  if (b == 0.0) {
    if (t < 0.0) throw std::domain_error("h_ab argument below increasing range");
    return std::pow(t, 1.0 / a);
  }
  const double tmin = b > 0.0 ? 0.0 : h_forward(a, b, s0);
  if (t < tmin) throw std::domain_error("h_ab argument below increasing range");
  if (t == tmin) return s0;
  // Bisection in u = log s on [log s0, U].
  double lo = std::log(s0);
  double hi = lo + 1.0;
  while (h_forward(a, b, std::exp(hi)) < t) {
    lo = hi;
    hi = 2.0 * hi + 1.0;
    if (hi > 700.0) throw std::domain_error("h_ab argument too large");
  }
  for (int it = 0; it < opt.max_iter; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (h_forward(a, b, std::exp(mid)) >= t)
      hi = mid;
    else
      lo = mid;
    if (hi - lo <= 0.25 * opt.rel_tol) break;
  }
  return std::exp(0.5 * (lo + hi));
}

}  // namespace embedlab
