#pragma once

// Experiment campaigns.  Tables go to CSV (every row tagged analytic,
// asymptotic or mc), records to an append-only JSON-lines file, plot data to
// two-column text files that gnuplot reads directly.

#include <cstddef>
#include <string>
#include <vector>

#include "qdetect/calibrate.hpp"
#include "qdetect/config.hpp"
#include "qdetect/delay_calc.hpp"

namespace qdetect {

std::string toolkit_version();

struct McDelayRecord {
  double gamma = 0.0;
  std::size_t scenario = 0;
  ChangePointVector taus;
  ThresholdVector hbar;
  bool false_alarm = false;     // all tau infinite: pre-change energy / c_N^2
  DelayEstimate estimate;
  double reference = 0.0;       // gamma (false alarm) or the analytic delay it is compared with
  std::string reference_kind;   // "gamma", "f_changed" or "j_kl_bound"
  bool has_wall_time = false;   // constant drift: energy converts exactly to time
};

struct ExperimentRecord {
  std::string kind;  // "gap" or "demo"
  std::string config_hash;
  std::string version;
  std::vector<CalibrationResult> calibrations;
  std::vector<ThresholdVector> asymptotic_hbar;  // per gamma, from the leading-term false-alarm rate
  std::vector<McDelayRecord> mc;
  double wall_clock_seconds = 0.0;
  std::vector<std::string> files;
};

// Thresholds of the form h_i = 1 + v / c_i^2 with the leading-term false
// alarm 1 / sum_i c_i^{-2} e^{-h_i} equal to c_N^2 gamma.
ThresholdVector asymptotic_thresholds(const SignalStrengths& cs, double gamma);

// Symmetric when every |c_i| = 1.
CalibrationResult calibrate_for(const SignalStrengths& cs, double gamma, double tol);

// Allowed gap: log K + allowance, K the number of sensors with |c_i| = 1
// (log N for the symmetric system, dominant_allowance alone when K = 1).
double gap_bound(const SignalStrengths& cs, const ExperimentConfig& config);

ExperimentRecord run_gap_experiment(const ExperimentConfig& config);
ExperimentRecord run_detection_demo(const ExperimentConfig& config);

// Table writers (deterministic given the record minus wall-clock fields).
std::string gap_csv(const ExperimentRecord& record);
std::string demo_csv(const ExperimentRecord& record);
std::string record_json(const ExperimentRecord& record);

// Writes the tables, the gnuplot files and appends the JSON line under
// config.output_dir; fills record.files.
void write_outputs(ExperimentRecord& record, const ExperimentConfig& config);

// Histogram with equal-width bins as gnuplot-ready "center density" rows.
std::string histogram_dat(const std::vector<double>& samples, std::size_t bins);

}  // namespace qdetect
