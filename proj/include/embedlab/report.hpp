#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "moduli_lab.hpp"

namespace embedlab {

using Json = nlohmann::ordered_json;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shortest round-trip formatting; NaN (gaps) become empty fields.
inline std::string csv_number(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// JSON has no NaN/inf; store them as null.
inline Json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : cols_(header.size()) { row_strings(header); }
  void row(const std::vector<double>& v) {
    std::vector<std::string> s;
    s.reserve(v.size());
    for (double x : v) s.push_back(csv_number(x));
    row_strings(s);
  }
  void row_strings(const std::vector<std::string>& v) {
    if (v.size() != cols_) throw std::invalid_argument("CSV row width mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) out_ << (i ? "," : "") << v[i];
    out_ << "\n";
  }
  std::string str() const { return out_.str(); }

 private:
  std::size_t cols_;
  std::ostringstream out_;
};

// ---------------------------------------------------------------------------
// Moduli CSV and fit serialization

struct ModuliRow {
  double certified_lower = kNaN, certified_upper = kNaN;
};

inline std::string moduli_csv(const ModuliEstimate& m, const std::vector<ModuliRow>& cert) {
  CsvWriter w({"bin_edge_t", "rho_hat", "omega_hat", "count", "certified_lower", "certified_upper"});
  for (std::size_t j = 0; j < m.bin_edges.size(); ++j) {
    const ModuliRow c = j < cert.size() ? cert[j] : ModuliRow{};
    w.row({m.bin_edges[j], m.rho_hat[j], m.omega_hat[j], static_cast<double>(m.counts[j]),
           c.certified_lower, c.certified_upper});
  }
  return w.str();
}

inline Json fit_json(const ExponentFit& f, const std::string& label) {
  Json j;
  j["label"] = label;
  j["envelope"] = to_string(f.envelope);
  j["range"] = Json::array({f.t_lo, f.t_hi});
  j["slope"] = json_number(f.slope);
  j["intercept"] = json_number(f.intercept);
  j["residual"] = json_number(f.residual_rms);
  j["points"] = f.points;
  return j;
}

// ---------------------------------------------------------------------------
// Comparison table: static compression-exponent claims for l_p domains

enum class Verdict { Consistent, Inconsistent, NotRun };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Consistent: return "consistent";
    case Verdict::Inconsistent: return "inconsistent";
    case Verdict::NotRun: return "not-run";
  }
  return "?";
}

struct Claim {
  std::string key;        // citation key
  std::string domain;     // "l2", "lp", "Lp"
  std::string target;     // "lq" or "Lq"
  std::string regime;     // human-readable parameter range
  std::string statement;  // the claimed exponent or range
  // Lower end of the claimed compression exponent for a measured run
  // (domain l2 into l_q); empty when the row has no run type here.
  double q_lo = kNaN, q_hi = kNaN;   // q range where the row applies (l2 domain)
  bool q_lo_open = false, q_hi_open = false;
  std::string lower_formula;          // "1", "2/q", "q^2"
  double tolerance = 0.1;
};

inline double claim_lower(const Claim& c, double q) {
  if (c.lower_formula == "1") return 1.0;
  if (c.lower_formula == "2/q") return 2.0 / q;
  if (c.lower_formula == "q^2") return q * q;
  return kNaN;
}

inline bool claim_applies(const Claim& c, double q) {
  if (std::isnan(c.q_lo)) return false;
  const bool lo_ok = c.q_lo_open ? q > c.q_lo : q >= c.q_lo;
  const bool hi_ok = c.q_hi_open ? q < c.q_hi : q <= c.q_hi;
  return lo_ok && hi_ok;
}

// Measured rows are l2 into l_q runs; other rows are reference data only.
inline const std::vector<Claim>& compression_claims() {
  static const std::vector<Claim> claims = [] {
    std::vector<Claim> c;
    auto add = [&](Claim x) { c.push_back(std::move(x)); };
    auto ref = [&](const char* key, const char* dom, const char* tgt, const char* regime, const char* stmt) {
      Claim x;
      x.key = key;
      x.domain = dom;
      x.target = tgt;
      x.regime = regime;
      x.statement = stmt;
      c.push_back(std::move(x));
    };
    add({"hilbert_into_lq_q_le_2", "l2", "lq", "1 <= q <= 2", "alpha = 1", 1.0, 2.0, false, false, "1", 0.5});
    add({"lp_into_lq_p_lt_q", "lp", "lq", "1 <= p < q < inf", "alpha = p/q", 2.0, kInf, true, true, "2/q", 0.1});
    add({"hilbert_into_lq_q_lt_1", "l2", "lq", "0 < q < 1", "q^2 <= alpha <= 1", 0.0, 1.0, true, true, "q^2", 0.1});
    ref("lp_into_lq_zero", "lp", "lq", "2 <= q < p or 1 <= q <= 2 < p", "alpha = 0");
    ref("lp_into_lq_q_lt_p_lt_2", "lp", "lq", "1 <= q < p < 2", "p/2 <= alpha <= 1");
    ref("lp_into_lq_quasi_zero", "lp", "lq", "0 < q < 1 and p > 2", "alpha = 0");
    ref("lp_into_lq_quasi_mixed", "lp", "lq", "0 < q <= 1 < p < 2", "p q^2 / 2 <= alpha <= 1");
    ref("lp_into_lq_p_lt_q_le_1", "lp", "lq", "0 < p < q <= 1", "alpha = 1");
    ref("lp_into_lq_q_lt_p_le_1", "lp", "lq", "0 < q < p <= 1", "q^2 / 2 <= alpha <= 1");
    ref("lp_into_lq_p_le_1_lt_q", "lp", "lq", "0 < p <= 1 < q < inf", "alpha = 1/q");
    ref("lp_into_Lq_hilbert", "l2", "Lq", "1 <= q <= inf", "alpha = 1");
    ref("lp_into_Lq_p_le_2", "lp", "Lq", "1 <= p <= 2 and q >= p", "alpha = p / min(q, 2)");
    ref("lp_into_Lq_q_le_p_le_2", "lp", "Lq", "1 <= q <= p <= 2", "alpha = 1");
    ref("lp_into_Lq_2_lt_p_le_q", "lp", "Lq", "2 < p <= q < inf", "p/q <= alpha <= 1");
    ref("Lq_into_lq_q_gt_2", "Lq", "lq", "q > 2", "0 <= alpha <= 2/q");
    ref("Lp_into_lq_p_q_le_2", "Lp", "lq", "1 <= p, q <= 2", "p/2 <= alpha <= 1");
    return c;
  }();
  return claims;
}

struct ComparisonRow {
  Claim claim;
  Verdict verdict = Verdict::NotRun;
  std::string run;  // source file of the measured run
  double q = kNaN;
  double measured = kNaN;
  double claimed_lower = kNaN;
  std::size_t violations = 0;
};

// Consistent when the fitted rho slope is >= claim - tolerance and the
// certified per-pair checks of the run passed.
inline std::vector<ComparisonRow> report_tables(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("results directory missing: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Json> runs;
  std::vector<std::string> names;
  for (const auto& f : files) {
    Json j;
    try {
      j = Json::parse(read_text(f));
    } catch (const Json::parse_error&) {
      continue;
    }
    if (j.value("kind", "") != "moduli") continue;
    runs.push_back(std::move(j));
    names.push_back(f.filename().string());
  }
  if (runs.empty()) throw IoError("no completed moduli runs in " + dir.string());
  std::vector<ComparisonRow> rows;
  for (const Claim& c : compression_claims()) {
    bool matched = false;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const Json& r = runs[i];
      const double q = r.at("q").get<double>();
      if (!claim_applies(c, q)) continue;
      const Json* large = nullptr;
      for (const auto& f : r.at("fits"))
        if (f.value("label", "") == "large_t" && f.value("envelope", "") == "rho") large = &f;
      ComparisonRow row;
      row.claim = c;
      row.run = names[i];
      row.q = q;
      row.claimed_lower = claim_lower(c, q);
      row.violations = r.at("violations").get<std::size_t>();
      if (large && !(*large)["slope"].is_null()) {
        row.measured = (*large)["slope"].get<double>();
        row.verdict = row.violations == 0 && row.measured >= row.claimed_lower - c.tolerance
                          ? Verdict::Consistent
                          : Verdict::Inconsistent;
      }
      rows.push_back(row);
      matched = true;
    }
    if (!matched) {
      ComparisonRow row;
      row.claim = c;
      rows.push_back(row);
    }
  }
  return rows;
}

inline Json comparison_json(const std::vector<ComparisonRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    Json j;
    j["key"] = r.claim.key;
    j["domain"] = r.claim.domain;
    j["target"] = r.claim.target;
    j["regime"] = r.claim.regime;
    j["claim"] = r.claim.statement;
    j["run"] = r.run.empty() ? Json(nullptr) : Json(r.run);
    j["q"] = json_number(r.q);
    j["claimed_lower"] = json_number(r.claimed_lower);
    j["tolerance"] = r.claim.tolerance;
    j["measured_slope"] = json_number(r.measured);
    j["violations"] = r.violations;
    j["verdict"] = to_string(r.verdict);
    out.push_back(j);
  }
  return out;
}

inline std::string comparison_text(const std::vector<ComparisonRow>& rows) {
  std::ostringstream o;
  char line[512];
  std::snprintf(line, sizeof line, "%-26s %-4s %-3s %-32s %-24s %-6s %-9s %s\n", "key", "from", "to",
                "regime", "claim", "q", "measured", "verdict");
  o << line;
  for (const auto& r : rows) {
    std::string q = std::isnan(r.q) ? "-" : csv_number(r.q);
    char meas[32];
    if (std::isnan(r.measured))
      std::snprintf(meas, sizeof meas, "-");
    else
      std::snprintf(meas, sizeof meas, "%.3f", r.measured);
    std::snprintf(line, sizeof line, "%-26s %-4s %-3s %-32s %-24s %-6s %-9s %s\n", r.claim.key.c_str(),
                  r.claim.domain.c_str(), r.claim.target.c_str(), r.claim.regime.c_str(),
                  r.claim.statement.c_str(), q.c_str(), meas, to_string(r.verdict));
    o << line;
  }
  return o.str();
}

}  // namespace embedlab
