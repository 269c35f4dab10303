// bnnlab: width sweeps, perturbation curves, Hessian scans and bound checks
// for bottleneck linear networks.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bnn/bnn.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
  std::string out = "out";
  std::string preset;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool quiet = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* jobs_opt = nullptr;
};

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config", o.config, "Config file (key = value sections, or a JSON report echo)");
  sub->add_option("--set", o.sets, "Override one key, e.g. --set sweep.seeds=4")->take_all();
  sub->add_option("--out", o.out, "Output directory")->capture_default_str();
  sub->add_option("--preset", o.preset, "Named preset: default, quick, paper-fig1");
  o.seed_opt = sub->add_option("--seed", o.seed, "Master seed (run.seed)");
  o.jobs_opt = sub->add_option("--jobs", o.jobs, "Worker threads (run.jobs)")->check(CLI::PositiveNumber);
  sub->add_flag("-q,--quiet", o.quiet, "Only print the verdict");
}

bnn::LabConfig resolve(const CommonOptions& o) {
  bnn::LabConfig cfg;
  if (!o.preset.empty()) bnn::apply_preset(cfg, o.preset);
  if (!o.config.empty()) bnn::apply_config_file(cfg, o.config);
  for (const auto& s : o.sets) bnn::apply_override(cfg, s);
  if (o.seed_opt->count() > 0) cfg.seed = o.seed;
  if (o.jobs_opt->count() > 0) cfg.jobs = o.jobs;
  if (cfg.jobs < 1) throw bnn::ConfigError("run.jobs must be >= 1");
  return cfg;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Timestamps live only here, never in the CSV/JSON reports.
class RunLog {
 public:
  RunLog(std::string command, bool quiet) : command_(std::move(command)), quiet_(quiet) {}

  void line(const std::string& msg, bool echo = true) {
    text_ += timestamp() + " " + msg + "\n";
    if (echo && !quiet_) std::cout << msg << "\n";
  }
  void block(const std::string& body) { text_ += body; }
  void verdict(const std::string& msg) {
    text_ += timestamp() + " " + msg + "\n";
    std::cout << msg << "\n";
  }
  void save(const fs::path& dir) const {
    try {
      bnn::write_atomic(dir / (command_ + ".log"), text_);
    } catch (const std::exception& e) {
      std::cerr << "warning: could not write log: " << e.what() << "\n";
    }
  }

 private:
  std::string command_;
  bool quiet_;
  std::string text_;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

void log_bounds(RunLog& log, const std::vector<bnn::BoundReport>& bounds) {
  for (const auto& b : bounds) {
    std::string where;
    if (b.params.contains("m")) where = " m=" + b.params["m"].dump();
    if (b.params.contains("tag")) where += " " + b.params["tag"].get<std::string>();
    log.line("  " + b.bound_name + where + ": empirical " + fmt(b.empirical) +
             (b.kind == bnn::BoundKind::upper ? " <= " : " >= ") + fmt(b.theoretical) +
             (b.satisfied ? "  ok" : "  FAIL"));
  }
}

void log_config(RunLog& log, const bnn::LabConfig& cfg) {
  log.line("resolved config:", false);
  log.block(bnn::config_to_text(cfg));
}

int finish(RunLog& log, const fs::path& out, bool passed) {
  log.verdict(passed ? "PASS" : "FAIL");
  log.save(out);
  return passed ? kExitOk : kExitFailed;
}

void log_files(RunLog& log, const bnn::EmittedFiles& f) {
  log.line("wrote " + f.csv.string() + " and " + f.json.string());
}

int cmd_sweep(const bnn::LabConfig& cfg, const CommonOptions& o) {
  const bnn::SweepConfig sc = cfg.sweep_config();
  sc.validate();
  RunLog log("sweep", o.quiet);
  log_config(log, cfg);
  log.line("sweep over " + std::to_string(sc.widths.size()) + " widths, " + std::to_string(sc.seeds) + " seeds x " +
           std::to_string(sc.directions) + " directions");
  const bnn::SweepReport rep = bnn::run_width_sweep(sc);
  for (const auto& a : rep.per_m) {
    log.line("  m=" + std::to_string(a.m) + ": max residual " + fmt(a.max) + ", median " + fmt(a.median));
  }
  if (rep.slope) {
    log.line("slope " + fmt(rep.slope->slope) + " +- " + fmt(rep.slope->slope_stderr) + " (band [" +
             fmt(sc.slope_min) + ", " + fmt(sc.slope_max) + "])" + (rep.slope_in_band ? "" : "  OUT OF BAND"));
  }
  if (rep.monotone_inversions > 1) {
    log.line("warning: " + std::to_string(rep.monotone_inversions) + " inversions in the per-width medians");
  }
  log_bounds(log, rep.bounds);
  log_files(log, bnn::emit_report(rep, o.out));
  return finish(log, o.out, rep.passed());
}

int cmd_perturb(const bnn::LabConfig& cfg, const CommonOptions& o) {
  const bnn::PerturbConfig pc = cfg.perturb_config();
  pc.validate();
  RunLog log("perturb", o.quiet);
  log_config(log, cfg);
  const bnn::PerturbReport rep = bnn::run_perturbation_curves(pc);
  double quartic = 0.0, affine = 0.0, curvature = 0.0, ratio = INFINITY;
  for (const auto& s : rep.stats) {
    quartic = std::max(quartic, s.max_quartic_ratio);
    affine = std::max(affine, s.max_affine_deviation);
    curvature = std::max(curvature, s.max_block_curvature);
    ratio = std::min(ratio, s.quad_ratio);
  }
  log.line("curves: " + std::to_string(rep.rows.size()) + " rows");
  log.line("  high/low coefficient ratio (max over seeds) " + fmt(quartic) + " <= " + fmt(pc.quartic_tol) +
           (rep.quartic_ok() ? "  ok" : "  FAIL"));
  log.line("  block-supported network curves: relative deviation from affine " + fmt(curvature));
  log.line("  block-supported surrogate curves: deviation from affine " + fmt(affine) + " < " + fmt(pc.affine_tol) +
           (rep.affine_ok() ? "  ok" : "  FAIL"));
  log.line("  tanh / identity quadratic-fit residual (min over seeds) " + fmt(ratio) + " > " + fmt(pc.tanh_ratio) +
           (rep.tanh_ok() ? "  ok" : "  FAIL"));
  log_files(log, bnn::emit_report(rep, o.out));
  return finish(log, o.out, rep.passed());
}

int cmd_hessian(const bnn::LabConfig& cfg, const CommonOptions& o) {
  const bnn::HessianConfig hc = cfg.hessian_config();
  hc.validate();
  RunLog log("hessian", o.quiet);
  log_config(log, cfg);
  const bnn::HessianReport rep = bnn::run_hessian_scan(hc);
  log.line(std::string("same-slot blocks zero: ") + (rep.same_slot_zero ? "yes" : "NO"));
  log_bounds(log, rep.bounds);
  log_files(log, bnn::emit_report(rep, o.out));
  return finish(log, o.out, rep.passed());
}

int cmd_verify(const bnn::LabConfig& cfg, const CommonOptions& o) {
  const bnn::BoundSuiteConfig bc = cfg.bounds_config();
  bc.validate();
  RunLog log("verify", o.quiet);
  log_config(log, cfg);
  const bnn::BoundSuiteReport rep = bnn::run_bound_suite(bc);
  log_bounds(log, rep.reports);
  log_files(log, bnn::emit_report(rep, o.out));
  return finish(log, o.out, rep.passed());
}

int cmd_init_dump(const bnn::LabConfig& cfg, const CommonOptions& o, const std::string& file) {
  const bnn::NetworkSpec spec = cfg.init_spec();
  RunLog log("init-dump", o.quiet);
  log_config(log, cfg);
  const bnn::WeightSet w = bnn::init_weights(spec, cfg.seed);
  const fs::path path = fs::path(o.out) / file;
  bnn::save_weights(w, path, cfg.seed);
  log.line("wrote " + path.string() + " (" + spec.describe() + ")");
  log.save(o.out);
  return kExitOk;
}

int cmd_eval(const bnn::LabConfig& cfg, const std::string& weights, const std::vector<double>& xs) {
  const bnn::WeightSet w = bnn::load_weights(weights);
  const bnn::InputVector x =
      xs.empty() ? cfg.input.make(w.spec().input_dim())
                 : bnn::InputVector(Eigen::Map<const bnn::Vector>(xs.data(), static_cast<bnn::Index>(xs.size())));
  const bnn::Vector g = bnn::forward_bnn(w, x);
  for (bnn::Index i = 0; i < g.size(); ++i) std::cout << bnn::format_double(g[i]) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bnnlab: experiments on bottleneck linear networks"};
  app.set_version_flag("--version", std::string(bnn::kVersion));
  app.require_subcommand(1);

  CommonOptions opts;
  auto* sweep = app.add_subcommand("sweep", "Jet residual decay over a width sweep");
  auto* perturb = app.add_subcommand("perturb", "Network function along random lines (curve table)");
  auto* hessian = app.add_subcommand("hessian", "Hessian block-norm scan at initialization");
  auto* verify = app.add_subcommand("verify", "Bound suite and tail-bound Monte Carlo");
  auto* init_dump = app.add_subcommand("init-dump", "Write initial weights and a JSON sidecar");
  auto* eval = app.add_subcommand("eval", "Evaluate the network stored in a weights file");
  for (auto* sub : {sweep, perturb, hessian, verify, init_dump, eval}) add_common(sub, opts);

  bool list = false;
  verify->add_flag("--list", list, "Print the bound names and exit");
  std::string dump_file = "weights.bnnw";
  init_dump->add_option("--file", dump_file, "File name inside --out")->capture_default_str();
  std::string weights;
  std::vector<double> xs;
  eval->add_option("--weights", weights, "Weights file written by init-dump")->required();
  eval->add_option("--x", xs, "Explicit input vector (default: the [input] section)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (verify->parsed() && list) {
    for (const auto& n : bnn::bound_names()) std::cout << n << "\n";
    return kExitOk;
  }

  bnn::LabConfig cfg;
  try {
    cfg = resolve(opts);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (sweep->parsed()) return cmd_sweep(cfg, opts);
    if (perturb->parsed()) return cmd_perturb(cfg, opts);
    if (hessian->parsed()) return cmd_hessian(cfg, opts);
    if (verify->parsed()) return cmd_verify(cfg, opts);
    if (init_dump->parsed()) return cmd_init_dump(cfg, opts, dump_file);
    if (eval->parsed()) return cmd_eval(cfg, weights, xs);
  } catch (const bnn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const bnn::DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const bnn::BudgetError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailed;
  }
  return kExitUsage;
}
