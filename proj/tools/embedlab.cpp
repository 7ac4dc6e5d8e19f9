// embedlab command-line front end.
//
// Exit codes: 0 success, 1 certified-bound violations, 2 usage or invalid
// configuration, 3 I/O failure, 4 internal error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "embedlab/suites.hpp"

namespace fs = std::filesystem;
using namespace embedlab;

namespace {

constexpr int kExitViolations = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitInternal = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void add_gaussian_opts(CLI::App* s, RunConfig& c) {
  s->add_option("--backend", c.backend, "auto|kernel|exp|rff")
      ->check(CLI::IsMember({"auto", "kernel", "exp", "rff"}));
  s->add_option("--rff-dim", c.rff_dim, "random features per block")->check(CLI::PositiveNumber);
  s->add_option("--exp-degree", c.exp_degree, "TruncatedExp degree")->check(CLI::PositiveNumber);
  s->add_option("--ambient-dim", c.ambient_dim, "domain dimension")->check(CLI::PositiveNumber);
}

void add_schedule_opts(CLI::App* s, RunConfig& c) {
  s->add_option("--schedule", c.schedule, "preset schedule")
      ->check(CLI::IsMember({"warmup_l2", "strong_qge2", "strong_1leqle2", "strong_qle1", "coarse_l2"}));
  s->add_option("--q", c.q, "target exponent");
  s->add_option("--beta", c.beta, "strong-preset growth parameter");
  s->add_option("--nu", c.nu, "coarse-preset parameter");
  s->add_option("--terms", c.terms, "number of glued blocks N")->check(CLI::PositiveNumber);
}

void add_range_opts(CLI::App* s, RunConfig& c) {
  s->add_option("--pairs", c.pairs, "sampled pairs (0: command default)");
  s->add_option("--bins", c.bins, "log-spaced bins")->check(CLI::PositiveNumber);
  s->add_option("--t-min", c.t_min, "smallest sampled distance")->check(CLI::PositiveNumber);
  s->add_option("--t-max", c.t_max, "largest sampled distance")->check(CLI::PositiveNumber);
  s->add_option_function<double>("--fit-lo", [&c](double v) { c.fit_lo = v; }, "large-t fit start");
  s->add_option_function<double>("--fit-hi", [&c](double v) { c.fit_hi = v; }, "large-t fit end");
}

void add_group_opts(CLI::App* s, RunConfig& c) {
  s->add_option("--group", c.group, "z<k>|heis|tree");
  s->add_option("--n-max", c.n_max, "last schedule level")->check(CLI::PositiveNumber);
  s->add_option("--p", c.p, "target exponent of the characteristic embedding");
}

// Applies JSON config values to options not given on the command line.
void apply_config(const fs::path& path, CLI::App& app, CLI::App* sub) {
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    std::string flag = "--" + key;
    for (auto& ch : flag)
      if (ch == '_') ch = '-';
    CLI::Option* opt = nullptr;
    for (CLI::App* a : {sub, &app}) {
      if (!a) continue;
      try {
        opt = a->get_option(flag);
        break;
      } catch (const CLI::OptionNotFound&) {
      }
    }
    if (!opt || flag == "--config") throw UsageError("unknown config key: " + key);
    if (opt->count() > 0) continue;  // command line wins
    std::string v;
    if (val.is_string())
      v = val.get<std::string>();
    else if (val.is_boolean())
      v = val.get<bool>() ? "true" : "false";
    else if (val.is_number())
      v = val.dump();
    else
      throw UsageError("config key " + key + " must be a scalar");
    opt->add_result(v);
    try {
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw UsageError("config key " + key + ": " + e.what());
    }
  }
}

int emit(const fs::path& out, const std::string& stem, const SuiteResult& r) {
  write_text(out / (stem + ".json"), dump(r.report));
  if (!r.csv.empty()) write_text(out / (stem + ".csv"), r.csv);
  std::printf("%s: %zu violation(s) -> %s\n", stem.c_str(), r.violations, (out / (stem + ".json")).string().c_str());
  return r.violations == 0 ? 0 : kExitViolations;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"embedlab: compression-exponent experiments for coarse embeddings"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::string out = "results";
  unsigned threads = 1;
  std::string config_path;
  std::string results_dir;
  std::string name;
  app.add_option("--seed", cfg.seed, "master seed");
  app.add_option("--out", out, "output directory");
  app.add_option("--threads", threads, "worker threads (0: all cores)");
  app.add_option("--config", config_path, "JSON config; flags override file values")->check(CLI::ExistingFile);
  app.add_flag("--negative-control", cfg.negative_control, "corrupt certified constants on purpose");

  auto* moduli = app.add_subcommand("moduli", "glued embedding of l2 into l_q: envelopes and fits");
  add_schedule_opts(moduli, cfg);
  add_gaussian_opts(moduli, cfg);
  add_range_opts(moduli, cfg);
  moduli->add_option("--name", name, "output file stem");

  auto* verify = app.add_subcommand("verify", "run a certified-inequality suite");
  verify->add_option("--suite", cfg.suite, "suite name")
      ->required()
      ->check(CLI::IsMember({"mazur", "kernel", "gluing", "folner", "cube", "gk"}));
  add_schedule_opts(verify, cfg);
  add_gaussian_opts(verify, cfg);
  add_range_opts(verify, cfg);
  add_group_opts(verify, cfg);
  verify->add_option("--m", cfg.m, "largest cube dimension")->check(CLI::Range(2, 10));
  verify->add_option("--k", cfg.k, "largest G_k subset size")->check(CLI::PositiveNumber);
  verify->add_option("--ground", cfg.ground, "largest G_k ground set")->check(CLI::PositiveNumber);
  verify->add_option("--exp-tol", cfg.exp_tol, "TruncatedExp distance tolerance");
  verify->add_option("--rff-tol", cfg.rff_tol, "random-feature kernel tolerance");

  auto* cube = app.add_subcommand("cube", "Hamming cube distortion bounds");
  cube->add_option("--m", cfg.m, "cube dimension")->check(CLI::Range(1, 24));
  cube->add_option("--p", cfg.p, "exponent of the Hamming metric");
  cube->add_option("--target-type", cfg.target_type, "type of the target space");

  auto* gk = app.add_subcommand("gk", "G_k probe audit");
  gk->add_option("--k", cfg.k, "subset size")->check(CLI::PositiveNumber);
  gk->add_option("--ground", cfg.ground, "ground set size")->check(CLI::PositiveNumber);
  gk->add_option("--p", cfg.p, "target exponent");

  auto* folner = app.add_subcommand("folner", "Folner sets, property A and the glued characteristic embedding");
  add_group_opts(folner, cfg);
  folner->add_option("--pairs", cfg.pairs, "sampled pairs (0: default)");
  folner->add_option("--bins", cfg.bins, "log-spaced bins")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "comparison tables from completed moduli runs");
  report->add_option("--results", results_dir, "directory with moduli JSON (default: --out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  cfg.command = sub->get_name();
  try {
    if (!config_path.empty()) apply_config(config_path, app, sub);
    set_threads(threads);
    resolve_defaults(cfg);
    const fs::path dir(out);
    if (cfg.command == "moduli") {
      if (name.empty()) name = "moduli_" + cfg.schedule + "_q" + csv_number(cfg.q);
      return emit(dir, name, run_moduli(cfg));
    }
    if (cfg.command == "verify") {
      SuiteResult r;
      if (cfg.suite == "mazur") r = run_mazur_suite(cfg);
      else if (cfg.suite == "kernel") r = run_kernel_suite(cfg);
      else if (cfg.suite == "gluing") r = run_gluing_suite(cfg);
      else if (cfg.suite == "folner") r = run_folner_suite(cfg);
      else if (cfg.suite == "cube") r = run_cube_suite(cfg);
      else r = run_gk_suite(cfg);
      return emit(dir, "verify_" + cfg.suite, r);
    }
    if (cfg.command == "cube") {
      SuiteResult r;
      r.report = cube_json(cfg.m, ExponentRegime::of(cfg.p), cfg.target_type);
      r.report["config"] = cfg.to_json();
      return emit(dir, "cube_m" + std::to_string(cfg.m), r);
    }
    if (cfg.command == "gk") {
      SuiteResult r;
      ProbeAudit a = probe_audit(cfg.k, cfg.ground, ExponentRegime::of(cfg.p));
      r.violations = a.lipschitz_violations + a.discreteness_violations;
      r.report = gk_json(a);
      r.report["config"] = cfg.to_json();
      r.report["violations"] = r.violations;
      return emit(dir, "gk_k" + std::to_string(cfg.k) + "_n" + std::to_string(cfg.ground), r);
    }
    if (cfg.command == "folner") return emit(dir, "folner_" + cfg.group, run_folner_suite(cfg));
    if (cfg.command == "report") {
      const fs::path src = results_dir.empty() ? dir : fs::path(results_dir);
      auto rows = report_tables(src);
      const std::string text = comparison_text(rows);
      write_text(dir / "comparison.json", dump(comparison_json(rows)));
      write_text(dir / "comparison.txt", text);
      std::fputs(text.c_str(), stdout);
      return 0;
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return kExitUsage;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInternal;
  }
  return kExitInternal;
}
