#pragma once

// Experiment configuration, read from TOML or JSON:
//
//   seed = 7
//   n_paths = 10000
//   dt = 0.001
//   horizon = 200.0
//   output_dir = "out"
//   gamma_sweep = [1e2, 1e3]
//   tau_scenarios = [[0.0, inf], [inf, inf]]   # JSON: "inf" or null
//   thresholds = [7.6, 7.6]                    # optional; else calibrated
//   mc_verify = false
//   tol = 1e-8
//   gap_allowance = 0.1
//   dominant_allowance = 0.15
//
//   [system]
//   strengths = [1.0, 1.0]
//   drift = "constant"          # or "linear_state_space"
//   mu = 1.0                    # r = 0.5 for the linear family

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qdetect/cusum.hpp"
#include "qdetect/sde_sim.hpp"

namespace qdetect {

struct ExperimentConfig {
  SensorSystemSpec system;
  std::vector<ChangePointVector> tau_scenarios;
  std::vector<double> gamma_sweep;
  std::size_t n_paths = 10000;
  double dt = 1e-3;
  double horizon = 100.0;
  std::uint64_t seed = 1;
  std::string output_dir = "qdetect_out";
  std::optional<ThresholdVector> thresholds;
  bool mc_verify = false;
  double tol = 1e-8;
  double gap_allowance = 0.1;
  double dominant_allowance = 0.15;

  std::size_t n_sensors() const noexcept { return system.n_sensors(); }
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

// Parsers throw ConfigError with the offending key on any problem, including
// empty sweeps and dimension mismatches.
ExperimentConfig parse_config_toml(const std::string& text);
ExperimentConfig parse_config_json(const std::string& text);
// By extension: .json is JSON, anything else TOML.
ExperimentConfig load_config(const std::string& filename);

std::string to_json(const ExperimentConfig& config);
std::string to_toml(const ExperimentConfig& config);

// 16 hex digits of FNV-1a over the canonical JSON form.
std::string config_hash(const ExperimentConfig& config);

}  // namespace qdetect
