#pragma once

// Threshold calibration.  Thresholds follow c_i^2 (h_i - 1) = v for a common
// v (all equal for the symmetric system), and v is chosen so that the
// false-alarm energy f_{S0,h}(0) equals c_N^2 gamma.

#include <cstddef>
#include <string_view>
#include <vector>

#include "qdetect/cusum.hpp"
#include "qdetect/delay_calc.hpp"
#include "qdetect/sde_sim.hpp"

namespace qdetect {

// nu > 0 with g(nu) = e^nu - nu - 1 = target.  The residual is below
// 1e-10 * max(1, target) (an absolute 1e-10 is below one ulp of the target
// once it exceeds about 1e6).
double solve_g(double target);

enum class Regime { symmetric, asymmetric };
std::string_view regime_name(Regime r);

struct CalibrationResult {
  double gamma = 0.0;
  SignalStrengths strengths;
  ThresholdVector hbar;
  double v = 0.0;            // common c_i^2 (h_i - 1)
  double nu_star = 0.0;
  double lower_bound = 0.0;  // g(-nu*)
  std::vector<double> delays;        // f_{S^(j),h}(0), j = 1..N
  std::vector<double> delay_errors;
  double j_kl = 0.0;
  double gap = 0.0;
  Regime regime = Regime::symmetric;
  double false_alarm = 0.0;          // f_{S0,h}(0) at the returned thresholds
  double false_alarm_rel_residual = 0.0;
  FMethod method = FMethod::series_quadrature;  // mc_oracle when some h_i <= 2
};

struct CalibrateOptions {
  double tol = 1e-8;           // absolute tolerance for the delay values
  double fa_rel_tol = 1e-7;    // relative residual of the false-alarm equation
  std::size_t max_iter = 200;
};

// N sensors with |c_i| = 1 and a common threshold.
CalibrationResult calibrate_symmetric(std::size_t n, double gamma, const CalibrateOptions& opt = {});

// Canonical strengths; h_i = 1 + v / c_i^2.
CalibrationResult calibrate_asymmetric(const SignalStrengths& cs, double gamma, const CalibrateOptions& opt = {});

// f(S^(j)) - f(S^(1)) for j = 2..N.
std::vector<double> equalizer_residual(const ThresholdVector& hbar, const SignalStrengths& cs, double tol);

}  // namespace qdetect
