#include "qdetect/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "qdetect/errors.hpp"
#include "qdetect/format.hpp"

#ifndef QDETECT_VERSION
#define QDETECT_VERSION "0.0.0"
#endif

namespace qdetect {

using nlohmann::json;

std::string toolkit_version() { return QDETECT_VERSION; }

ThresholdVector asymptotic_thresholds(const SignalStrengths& cs, double gamma) {
  require(gamma > 0.0, "gamma must be positive");
  const std::size_t n = cs.size();
  const double target = cs.squared(n - 1) * gamma;
  const auto rate = [&](double v) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(-(1.0 + v / cs.squared(i))) / cs.squared(i);
    return 1.0 / s;
  };
  double lo = 0.0, hi = 1.0;
  while (rate(hi) < target) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (rate(mid) < target ? lo : hi) = mid;
  }
  const double v = 0.5 * (lo + hi);
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) h[i] = 1.0 + v / cs.squared(i);
  return ThresholdVector(std::move(h));
}

CalibrationResult calibrate_for(const SignalStrengths& cs, double gamma, double tol) {
  CalibrateOptions opt;
  opt.tol = tol;
  const bool symmetric = std::all_of(cs.values().begin(), cs.values().end(), [](double c) { return std::abs(c) == 1.0; });
  return symmetric ? calibrate_symmetric(cs.size(), gamma, opt) : calibrate_asymmetric(cs, gamma, opt);
}

double gap_bound(const SignalStrengths& cs, const ExperimentConfig& config) {
  const auto k = std::count_if(cs.values().begin(), cs.values().end(), [](double c) { return std::abs(c) == 1.0; });
  return k <= 1 ? config.dominant_allowance : std::log(static_cast<double>(k)) + config.gap_allowance;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Scenario context for errors thrown deep inside the estimators.
template <class F>
auto with_context(const std::string& what, F&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    throw NumericError(what + ": " + e.what());
  } catch (const PreconditionError& e) {
    throw PreconditionError(what + ": " + e.what());
  }
}

std::string describe(double gamma, const ChangePointVector* taus) {
  std::ostringstream s;
  s << "gamma=" << num(gamma);
  if (taus) {
    s << " tau=(";
    for (std::size_t i = 0; i < taus->size(); ++i) s << (i ? "," : "") << num((*taus)[i]);
    s << ")";
  }
  return s.str();
}

McDelayRecord run_scenario(const ExperimentConfig& config, double gamma, const CalibrationResult& cal,
                           std::size_t index, const ChangePointVector& taus, const ThresholdVector& hbar,
                           bool keep_samples) {
  McDelayRecord r;
  r.gamma = gamma;
  r.scenario = index;
  r.taus = taus;
  r.hbar = hbar;
  r.false_alarm = !taus.any_finite();
  r.has_wall_time = std::holds_alternative<ConstantDrift>(config.system.drift);
  DelayMcOptions opt;
  opt.keep_samples = keep_samples;
  r.estimate = with_context(describe(gamma, &taus), [&] {
    return expected_delay_mc(config.system, taus, hbar, config.n_paths, config.dt, config.seed + index, opt);
  });
  if (r.false_alarm) {
    r.reference = gamma;
    r.reference_kind = "gamma";
  } else {
    std::size_t finite = 0, first = 0;
    for (std::size_t i = 0; i < taus.size(); ++i) {
      if (std::isfinite(taus[i])) {
        if (finite == 0) first = i;
        ++finite;
      }
    }
    if (finite == 1 && taus[first] == 0.0) {
      r.reference = cal.delays.at(first);
      r.reference_kind = "f_changed";
    } else {
      r.reference = cal.j_kl;
      r.reference_kind = "j_kl_bound";
    }
  }
  return r;
}

json calibration_json(const CalibrationResult& c) {
  json j;
  j["gamma"] = c.gamma;
  j["strengths"] = c.strengths.values();
  j["hbar"] = c.hbar.values();
  j["v"] = c.v;
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

json taus_json(const ChangePointVector& t) {
  json a = json::array();
  for (double x : t.values()) a.push_back(std::isfinite(x) ? json(x) : json("inf"));
  return a;
}

std::string provenance(FMethod m) { return m == FMethod::series_quadrature ? "analytic" : "mc"; }

}  // namespace

ExperimentRecord run_gap_experiment(const ExperimentConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentRecord rec;
  rec.kind = "gap";
  rec.config_hash = config_hash(config);
  rec.version = toolkit_version();
  const SignalStrengths& cs = config.system.strengths;
  const std::size_t n = cs.size();
  for (double gamma : config.gamma_sweep) {
    const CalibrationResult cal =
        with_context(describe(gamma, nullptr), [&] { return calibrate_for(cs, gamma, config.tol); });
    rec.calibrations.push_back(cal);
    rec.asymptotic_hbar.push_back(asymptotic_thresholds(cs, gamma));
    if (config.mc_verify) {
      // worst case for sensor j: it changes at 0, nobody else ever does
      for (std::size_t j = 0; j < n; ++j) {
        rec.mc.push_back(run_scenario(config, gamma, cal, j, ChangePointVector::single(n, j, 0.0), cal.hbar, false));
      }
    }
  }
  rec.wall_clock_seconds = seconds_since(t0);
  return rec;
}

ExperimentRecord run_detection_demo(const ExperimentConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentRecord rec;
  rec.kind = "demo";
  rec.config_hash = config_hash(config);
  rec.version = toolkit_version();
  const SignalStrengths& cs = config.system.strengths;
  for (double gamma : config.gamma_sweep) {
    const CalibrationResult cal =
        with_context(describe(gamma, nullptr), [&] { return calibrate_for(cs, gamma, config.tol); });
    rec.calibrations.push_back(cal);
    rec.asymptotic_hbar.push_back(asymptotic_thresholds(cs, gamma));
    const ThresholdVector hbar = config.thresholds ? *config.thresholds : cal.hbar;
    for (std::size_t k = 0; k < config.tau_scenarios.size(); ++k) {
      rec.mc.push_back(run_scenario(config, gamma, cal, k, config.tau_scenarios[k], hbar, true));
    }
  }
  rec.wall_clock_seconds = seconds_since(t0);
  return rec;
}

std::string gap_csv(const ExperimentRecord& rec) {
  std::ostringstream out;
  const std::size_t n = rec.calibrations.empty() ? 0 : rec.calibrations.front().hbar.size();
  out << "gamma";
  for (std::size_t i = 0; i < n; ++i) out << ",h" << (i + 1);
  out << ",j_kl,lower_bound,gap,error,n_paths,wall_time,provenance\n";
  for (std::size_t g = 0; g < rec.calibrations.size(); ++g) {
    const CalibrationResult& c = rec.calibrations[g];
    // analytic: calibrated thresholds and series delays
    out << num(c.gamma);
    for (double h : c.hbar.values()) out << ',' << num(h);
    double err = 0.0;
    for (double e : c.delay_errors) err = std::max(err, e);
    out << ',' << num(c.j_kl) << ',' << num(c.lower_bound) << ',' << num(c.gap) << ',' << num(err) << ",,,"
        << provenance(c.method) << '\n';
    // asymptotic: leading-term thresholds, c_j^2 (h_j - 1) delays, nu* ~ log(c_N^2 gamma)
    const ThresholdVector& ha = rec.asymptotic_hbar[g];
    const double cn2 = c.strengths.squared(n - 1);
    double jas = 0.0;
    for (std::size_t i = 0; i < n; ++i) jas = std::max(jas, f_delay_asymptotic(i, ha, c.strengths));
    const double lb_as = std::log(cn2 * c.gamma) - 1.0;
    out << num(c.gamma);
    for (double h : ha.values()) out << ',' << num(h);
    out << ',' << num(jas) << ',' << num(lb_as) << ',' << num(jas - lb_as) << ",,,,asymptotic\n";
    // mc: worst of the per-sensor Monte Carlo delays at the calibrated thresholds
    const McDelayRecord* worst = nullptr;
    for (const auto& m : rec.mc) {
      if (m.gamma == c.gamma && (!worst || m.estimate.mean > worst->estimate.mean)) worst = &m;
    }
    if (worst) {
      out << num(c.gamma);
      for (double h : c.hbar.values()) out << ',' << num(h);
      out << ',' << num(worst->estimate.mean) << ',' << num(c.lower_bound) << ','
          << num(worst->estimate.mean - c.lower_bound) << ',' << num(worst->estimate.stderr_mc) << ','
          << worst->estimate.n_paths << ',' << (worst->has_wall_time ? num(worst->estimate.mean_wall_time) : "")
          << ",mc\n";
    }
  }
  return out.str();
}

std::string demo_csv(const ExperimentRecord& rec) {
  std::ostringstream out;
  out << "gamma,scenario,taus,hbar,quantity,value,stderr,n_paths,wall_time,provenance\n";
  const auto joined = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + num(v[i]);
    return s;
  };
  for (const auto& m : rec.mc) {
    const std::string head = num(m.gamma) + ',' + std::to_string(m.scenario) + ',' + joined(m.taus.values()) + ',' +
                             joined(m.hbar.values()) + ',';
    out << head << (m.false_alarm ? "false_alarm_energy" : "delay_energy") << ',' << num(m.estimate.mean) << ','
        << num(m.estimate.stderr_mc) << ',' << m.estimate.n_paths << ','
        << (m.has_wall_time ? num(m.estimate.mean_wall_time) : "") << ",mc\n";
    out << head << m.reference_kind << ',' << num(m.reference) << ",,,,analytic\n";
  }
  return out.str();
}

std::string record_json(const ExperimentRecord& rec) {
  json j;
  j["kind"] = rec.kind;
  j["config_hash"] = rec.config_hash;
  j["version"] = rec.version;
  j["wall_clock_seconds"] = rec.wall_clock_seconds;
  json cal = json::array();
  for (const auto& c : rec.calibrations) cal.push_back(calibration_json(c));
  j["calibrations"] = cal;
  json mc = json::array();
  for (const auto& m : rec.mc) {
    json e;
    e["gamma"] = m.gamma;
    e["scenario"] = m.scenario;
    e["taus"] = taus_json(m.taus);
    e["hbar"] = m.hbar.values();
    e["quantity"] = m.false_alarm ? "false_alarm_energy" : "delay_energy";
    e["mean"] = m.estimate.mean;
    e["stderr"] = m.estimate.stderr_mc;
    e["n_paths"] = m.estimate.n_paths;
    e["n_stopped"] = m.estimate.n_stopped;
    e["horizon"] = m.estimate.horizon;
    if (m.has_wall_time) e["mean_wall_time"] = m.estimate.mean_wall_time;
    e["reference"] = m.reference;
    e["reference_kind"] = m.reference_kind;
    mc.push_back(e);
  }
  j["mc"] = mc;
  j["files"] = rec.files;
  return j.dump();
}

std::string histogram_dat(const std::vector<double>& samples, std::size_t bins) {
  require(bins >= 1, "need at least one bin");
  std::ostringstream out;
  if (samples.empty()) return out.str();
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *mn;
  const double width = *mx > lo ? (*mx - lo) / static_cast<double>(bins) : 1.0;
  std::vector<std::size_t> count(bins, 0);
  for (double x : samples) {
    const auto b = std::min(bins - 1, static_cast<std::size_t>((x - lo) / width));
    ++count[b];
  }
  out << "# center density\n";
  const double norm = static_cast<double>(samples.size()) * width;
  for (std::size_t b = 0; b < bins; ++b) {
    out << num(lo + (static_cast<double>(b) + 0.5) * width) << ' ' << num(static_cast<double>(count[b]) / norm)
        << '\n';
  }
  return out.str();
}

namespace {

void write_file(const std::filesystem::path& p, const std::string& text, std::vector<std::string>& files) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << text;
  files.push_back(p.string());
}

}  // namespace

void write_outputs(ExperimentRecord& rec, const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  const fs::path dir(config.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  rec.files.clear();
  if (rec.kind == "gap") {
    write_file(dir / "gap.csv", gap_csv(rec), rec.files);
    std::ostringstream an, as;
    an << "# log_gamma gap\n";
    as << "# log_gamma gap\n";
    for (std::size_t g = 0; g < rec.calibrations.size(); ++g) {
      const CalibrationResult& c = rec.calibrations[g];
      an << num(std::log(c.gamma)) << ' ' << num(c.gap) << '\n';
      const std::size_t n = c.hbar.size();
      double jas = 0.0;
      for (std::size_t i = 0; i < n; ++i) jas = std::max(jas, f_delay_asymptotic(i, rec.asymptotic_hbar[g], c.strengths));
      as << num(std::log(c.gamma)) << ' ' << num(jas - (std::log(c.strengths.squared(n - 1) * c.gamma) - 1.0)) << '\n';
    }
    write_file(dir / "gap_analytic.dat", an.str(), rec.files);
    write_file(dir / "gap_asymptotic.dat", as.str(), rec.files);
  } else {
    write_file(dir / "demo.csv", demo_csv(rec), rec.files);
    for (std::size_t k = 0; k < rec.mc.size(); ++k) {
      const auto& m = rec.mc[k];
      std::ostringstream name;
      name << "hist_g" << num(m.gamma) << "_s" << m.scenario << ".dat";
      write_file(dir / name.str(), histogram_dat(m.estimate.samples, 60), rec.files);
    }
  }
  // single writer: the record line is appended once everything else is on disk
  std::ofstream log(dir / "records.jsonl", std::ios::app);
  if (!log) throw ConfigError("cannot append to records.jsonl");
  rec.files.push_back((dir / "records.jsonl").string());
  log << record_json(rec) << '\n';
}

}  // namespace qdetect
