#pragma once

// Expected signal energy to stopping, f_{S,h}(0, ..., 0), through the product
// representation
//
//   f = int_0^inf prod_i K_{S_i, eps_i}(eps_i t / c_i^2, 0) dt,   eps_i = 1/h_i,
//
// plus the closed-form leading terms and a Monte Carlo estimator that runs the
// actual detector.

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "qdetect/cusum.hpp"
#include "qdetect/kernel.hpp"
#include "qdetect/sde_sim.hpp"

namespace qdetect {

enum class FMethod { series_quadrature, asymptotic, mc_oracle, fd_oracle };
std::string_view method_name(FMethod m);

struct FValue {
  double value = 0.0;
  SignVector sign;
  ThresholdVector hbar;
  SignalStrengths strengths;
  double error_estimate = 0.0;
  FMethod method = FMethod::series_quadrature;
  bool edge_used = false;       // the K = 1 segment near t = 0 contributed
  double tail_bound = 0.0;      // certified bound on the part beyond the cutoff
  double cutoff = 0.0;          // T where the quadrature hands over to the tail
};

// g(nu) = e^nu - nu - 1.
double g_fn(double nu);

FValue f_origin(const SignVector& sign, const ThresholdVector& hbar, const SignalStrengths& cs, double tol);

// 1 / sum_i c_i^{-2} e^{-h_i}.
double f_false_alarm_asymptotic(const ThresholdVector& hbar, const SignalStrengths& cs);

// c_j^2 (h_j - 1).
double f_delay_asymptotic(std::size_t j, const ThresholdVector& hbar, const SignalStrengths& cs);

struct DelayEstimate {
  double mean = 0.0;
  double stderr_mc = 0.0;
  std::size_t n_paths = 0;
  std::size_t n_stopped = 0;
  double horizon = 0.0;   // largest horizon any path needed
  double mean_wall_time = 0.0;  // mean stopping time in time units
  std::vector<double> samples;
};

struct DelayMcOptions {
  double initial_horizon = 0.0;  // 0: derived from the asymptotic value
  double max_horizon_factor = 4096.0;
  std::size_t chunk = 1024;
  bool keep_samples = false;  // fill DelayEstimate::samples with the per-path values
};

// Monte Carlo E{1{T > tau~} int_{tau~}^T alpha_1^2/2 ds}; with every tau
// infinite, the false-alarm energy E int_0^T (alpha_1 / c_N)^2 / 2 ds.
// Horizons double until at least 99.9% of paths stop; otherwise throws
// NumericError ("nonstopping paths").
DelayEstimate expected_delay_mc(const SensorSystemSpec& spec, const ChangePointVector& taus,
                                const ThresholdVector& hbar, std::size_t n_paths, double dt, std::uint64_t seed,
                                const DelayMcOptions& options = {});

}  // namespace qdetect
