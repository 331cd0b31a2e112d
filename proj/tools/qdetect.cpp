// qdetect command line front end.
//
// exit codes: 0 ok, 2 configuration/usage error, 3 numerical failure

#include <CLI11.hpp>
#include <cmath>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>

#include "qdetect/calibrate.hpp"
#include "qdetect/config.hpp"
#include "qdetect/cusum.hpp"
#include "qdetect/delay_calc.hpp"
#include "qdetect/errors.hpp"
#include "qdetect/format.hpp"
#include "qdetect/harness.hpp"
#include "qdetect/kernel.hpp"
#include "qdetect/oracles.hpp"
#include "qdetect/parallel.hpp"
#include "qdetect/path_io.hpp"
#include "qdetect/sde_sim.hpp"

using namespace qdetect;
using nlohmann::json;

namespace {

json null_or(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json stop_json(const StopReport& r) {
  json j;
  j["stopped"] = r.stopped;
  j["stop_time"] = null_or(r.stop_time);
  j["firing_sensor"] = r.firing_sensor ? json(*r.firing_sensor + 1) : json(nullptr);
  j["y_at_stop"] = r.y_at_stop;
  j["steps"] = r.steps;
  j["energy"] = r.energy;
  j["delay_energy"] = r.delay_energy;
  return j;
}

SignalStrengths strengths_or_symmetric(const std::vector<double>& c, std::size_t n) {
  return c.empty() ? SignalStrengths::symmetric(n) : SignalStrengths(c);
}

ThresholdVector thresholds_from(const ExperimentConfig& cfg, std::optional<double> gamma) {
  if (cfg.thresholds && !gamma) return *cfg.thresholds;
  const double g = gamma.value_or(cfg.gamma_sweep.front());
  return calibrate_for(cfg.system.strengths, g, cfg.tol).hbar;
}

int cmd_simulate(const std::string& config_file, std::size_t scenario, std::uint32_t index, const std::string& out,
                 std::string format) {
  const ExperimentConfig cfg = load_config(config_file);
  if (scenario >= cfg.tau_scenarios.size()) throw ConfigError("scenario index out of range");
  const PathBundle path = simulate(cfg.system, cfg.tau_scenarios[scenario], cfg.horizon, cfg.dt, cfg.seed, index);
  if (format.empty()) format = out.size() > 5 && out.substr(out.size() - 5) == ".qdpb" ? "bin" : "csv";
  if (format != "csv" && format != "bin") throw ConfigError("--format must be csv or bin");
  if (format == "bin" && out.empty()) throw ConfigError("binary output needs --out");
  for (const auto& w : path.warnings) std::cerr << "warning: " << w << '\n';
  if (out.empty()) {
    write_path_csv(path, std::cout);
    return 0;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + out);
  format == "bin" ? write_path_binary(path, f) : write_path_csv(path, f);
  return 0;
}

int cmd_run(const std::string& config_file, std::optional<std::size_t> paths, std::optional<std::size_t> scenario,
            const std::string& input, std::optional<double> gamma) {
  const ExperimentConfig cfg = load_config(config_file);
  const ThresholdVector hbar = thresholds_from(cfg, gamma);
  if (!input.empty()) {
    PathBundle p = read_path_file(input);
    if (p.n_sensors != cfg.n_sensors()) throw ConfigError("path file and config disagree on the sensor count");
    const StopReport r = run_detector(p, cfg.system, hbar);
    json j = stop_json(r);
    j["input"] = input;
    std::cout << j.dump() << '\n';
    return 0;
  }
  const std::size_t n_paths = paths.value_or(cfg.n_paths);
  std::vector<std::size_t> scenarios;
  if (scenario) {
    if (*scenario >= cfg.tau_scenarios.size()) throw ConfigError("scenario index out of range");
    scenarios.push_back(*scenario);
  } else {
    for (std::size_t k = 0; k < cfg.tau_scenarios.size(); ++k) scenarios.push_back(k);
  }
  for (std::size_t k : scenarios) {
    const ChangePointVector& taus = cfg.tau_scenarios[k];
    const double origin = taus.any_finite() ? taus.min_finite() : 0.0;
    std::vector<StopReport> reports(n_paths);
    parallel_chunks(n_paths, 16, [&](std::size_t begin, std::size_t count) {
      for (std::size_t p = begin; p < begin + count; ++p) {
        const PathBundle path =
            simulate(cfg.system, taus, cfg.horizon, cfg.dt, cfg.seed + k, static_cast<std::uint32_t>(p));
        reports[p] = run_detector(path, cfg.system, hbar, origin);
      }
    });
    for (std::size_t p = 0; p < n_paths; ++p) {
      json j = stop_json(reports[p]);
      j["scenario"] = k;
      j["path"] = p;
      std::cout << j.dump() << '\n';
    }
  }
  return 0;
}

int cmd_fvalue(const std::vector<int>& signs, const std::vector<double>& h, const std::vector<double>& c, double tol,
               const std::string& method, std::size_t paths, std::size_t grid, std::uint64_t seed) {
  const SignVector s(signs);
  const ThresholdVector hbar(h);
  const SignalStrengths cs = strengths_or_symmetric(c, signs.size());
  json j;
  j["signs"] = signs;
  j["h"] = h;
  j["c"] = cs.values();
  if (method == "series") {
    const FValue f = f_origin(s, hbar, cs, tol);
    j["value"] = f.value;
    j["error"] = f.error_estimate;
    j["method"] = std::string(method_name(f.method));
    j["cutoff"] = f.cutoff;
    j["tail_bound"] = f.tail_bound;
    j["edge_used"] = f.edge_used;
  } else if (method == "mc") {
    ReflectedMcOptions opt;
    opt.n_paths = paths;
    opt.seed = seed;
    const McEstimate m = f_mc_reflected(s, hbar, cs, opt);
    j["value"] = m.mean;
    j["error"] = m.stderr_mc;
    j["n_paths"] = m.n_paths;
    j["method"] = "mc_oracle";
  } else if (method == "fd") {
    const FdEstimate f = f_fd_richardson(s, hbar, cs, grid);
    j["value"] = f.value;
    j["error"] = f.error;
    j["coarse"] = f.coarse;
    j["fine"] = f.fine;
    j["grid"] = grid;
    j["method"] = "fd_oracle";
  } else {
    throw ConfigError("--method must be series, mc or fd");
  }
  std::cout << j.dump() << '\n';
  return 0;
}

json calibration_to_json(const CalibrationResult& c) {
  json j;
  j["gamma"] = c.gamma;
  j["c"] = c.strengths.values();
  j["hbar"] = c.hbar.values();
  j["nu_star"] = c.nu_star;
  j["lower_bound"] = c.lower_bound;
  j["delays"] = c.delays;
  j["delay_errors"] = c.delay_errors;
  j["j_kl"] = c.j_kl;
  j["gap"] = c.gap;
  j["regime"] = std::string(regime_name(c.regime));
  j["false_alarm"] = c.false_alarm;
  j["false_alarm_rel_residual"] = c.false_alarm_rel_residual;
  j["method"] = std::string(method_name(c.method));
  return j;
}

int cmd_calibrate(const std::vector<double>& c, std::size_t n, double gamma, bool symmetric, double tol) {
  CalibrateOptions opt;
  opt.tol = tol;
  CalibrationResult r;
  if (symmetric) {
    if (!c.empty()) {
      for (double x : c) {
        if (std::abs(x) != 1.0) throw ConfigError("--symmetric needs every |c_i| = 1");
      }
      n = c.size();
    }
    r = calibrate_symmetric(n, gamma, opt);
  } else {
    r = calibrate_asymmetric(strengths_or_symmetric(c, n), gamma, opt);
  }
  std::cout << calibration_to_json(r).dump() << '\n';
  return 0;
}

int cmd_gap_sweep(const std::string& config_file, std::vector<double> gammas, const std::vector<double>& c,
                  std::size_t n, double tol, const std::string& out) {
  ExperimentConfig cfg;
  if (!config_file.empty()) {
    cfg = load_config(config_file);
  } else {
    cfg.system.strengths = strengths_or_symmetric(c, n);
    cfg.tau_scenarios.push_back(ChangePointVector::none(cfg.n_sensors()));
    cfg.tol = tol;
  }
  if (!gammas.empty()) cfg.gamma_sweep = gammas;
  if (cfg.gamma_sweep.empty()) throw ConfigError("no gammas given (--gammas or gamma_sweep in the config)");
  ExperimentRecord rec = run_gap_experiment(cfg);
  if (!config_file.empty()) write_outputs(rec, cfg);
  const std::string csv = gap_csv(rec);
  if (out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + out);
    f << csv;
  }
  return 0;
}

int cmd_demo(const std::string& config_file) {
  const ExperimentConfig cfg = load_config(config_file);
  ExperimentRecord rec = run_detection_demo(cfg);
  write_outputs(rec, cfg);
  std::cout << record_json(rec) << '\n';
  return 0;
}

int cmd_kernel(double eps, int sign, double t, double tol) {
  const KernelValue v = eval_kernel(sign, eps, t, tol);
  json j;
  j["eps"] = eps;
  j["sign"] = sign;
  j["t"] = t;
  j["value"] = v.value;
  j["n_terms"] = v.n_terms;
  j["tail_bound"] = v.tail_bound;
  j["edge"] = v.edge;
  j["oracle"] = v.oracle;
  if (v.oracle) j["stderr"] = v.stderr_mc;
  std::cout << j.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qdetect: multi-chart CUSUM quickest detection toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", toolkit_version());

  std::string config_file, out, format, input, method = "series";
  std::size_t scenario = 0, paths = 0, grid = 200, n = 2;
  std::optional<std::size_t> run_paths, run_scenario;
  std::optional<double> run_gamma;
  std::uint32_t index = 0;
  std::uint64_t seed = 1;
  std::vector<int> signs;
  std::vector<double> h, c, gammas;
  double tol = 1e-6, gamma = 0.0, eps = 0.1, t = 1.0;
  int sign = -1;
  bool symmetric = false;

  auto* sim = app.add_subcommand("simulate", "simulate one path and export it (CSV or QDPB1 binary)");
  sim->add_option("--config", config_file, "experiment file (TOML or JSON)")->required();
  sim->add_option("--scenario", scenario, "index into tau_scenarios");
  sim->add_option("--path-index", index, "substream index under the configured seed");
  sim->add_option("--out", out, "output file (default: CSV on stdout)");
  sim->add_option("--format", format, "csv or bin (default from the --out extension)");

  auto* run = app.add_subcommand("run", "run the detector, one StopReport JSON line per path");
  run->add_option("--config", config_file, "experiment file (TOML or JSON)")->required();
  run->add_option("--paths", run_paths, "number of paths per scenario (default n_paths)");
  run->add_option("--scenario", run_scenario, "only this scenario");
  run->add_option("--input", input, "run on a stored path (CSV or QDPB1) instead of simulating");
  run->add_option("--gamma", run_gamma, "calibrate thresholds at this gamma");

  auto* fv = app.add_subcommand("fvalue", "expected signal energy to stopping at the origin");
  fv->set_help_flag("--help", "print this help message and exit");  // -h would clash with --h
  fv->add_option("--signs", signs, "sign vector, e.g. -1,-1")->required()->delimiter(',');
  fv->add_option("--h", h, "thresholds")->required()->delimiter(',');
  fv->add_option("--c", c, "signal strengths (default all 1)")->delimiter(',');
  fv->add_option("--tol", tol, "absolute tolerance (series)");
  fv->add_option("--method", method, "series, mc or fd");
  fv->add_option("--paths", paths, "Monte Carlo paths (mc)")->default_val(100000);
  fv->add_option("--grid", grid, "finite-difference cells per side (fd; solved at n and 2n)");
  fv->add_option("--seed", seed, "Monte Carlo seed");

  auto* cal = app.add_subcommand("calibrate", "thresholds for a false-alarm budget gamma");
  cal->add_option("--c", c, "signal strengths")->delimiter(',');
  cal->add_option("--n", n, "sensor count when --c is omitted");
  cal->add_option("--gamma", gamma, "false-alarm budget")->required();
  cal->add_flag("--symmetric", symmetric, "common threshold, all |c_i| = 1");
  cal->add_option("--tol", tol, "tolerance for the delay values");

  auto* gs = app.add_subcommand("gap-sweep", "optimality gap over a range of gamma, as CSV");
  gs->add_option("--config", config_file, "experiment file (also writes outputs to its output_dir)");
  gs->add_option("--gammas", gammas, "gamma values")->delimiter(',');
  gs->add_option("--c", c, "signal strengths")->delimiter(',');
  gs->add_option("--n", n, "sensor count when --c is omitted");
  gs->add_option("--tol", tol, "tolerance for the delay values");
  gs->add_option("--out", out, "CSV file (default stdout)");

  auto* demo = app.add_subcommand("demo", "Monte Carlo detection campaign over the tau scenarios");
  demo->add_option("--config", config_file, "experiment file (TOML or JSON)")->required();

  auto* ker = app.add_subcommand("kernel", "evaluate one survival kernel K_{sign,eps}(t, 0)");
  ker->add_option("--eps", eps, "eps = 1/h")->required();
  ker->add_option("--sign", sign, "+1 or -1")->required();
  ker->add_option("--t", t, "kernel argument")->required();
  ker->add_option("--tol", tol, "truncation tolerance")->default_val(1e-12);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sim) return cmd_simulate(config_file, scenario, index, out, format);
    if (*run) return cmd_run(config_file, run_paths, run_scenario, input, run_gamma);
    if (*fv) return cmd_fvalue(signs, h, c, tol, method, paths, grid, seed);
    if (*cal) return cmd_calibrate(c, n, gamma, symmetric, tol);
    if (*gs) return cmd_gap_sweep(config_file, gammas, c, n, tol, out);
    if (*demo) return cmd_demo(config_file);
    if (*ker) return cmd_kernel(eps, sign, t, tol);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const PreconditionError& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
