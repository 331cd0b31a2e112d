#include "qdetect/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qdetect/errors.hpp"

namespace qdetect {

double solve_g(double target) {
  require(target > 0.0 && std::isfinite(target), "solve_g needs a positive finite target");
  // g is increasing on (0, inf); g(nu) >= nu^2/2 and g(log(t) + 2) > t for t >= 1
  double lo = 0.0;
  double hi = std::max(std::sqrt(2.0 * target), std::log1p(target) + 2.0);
  while (g_fn(hi) < target) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g_fn(mid) < target ? lo : hi) = mid;
  }
  double nu = 0.5 * (lo + hi);
  // Newton polish; g' = expm1(nu)
  for (int it = 0; it < 4; ++it) {
    const double step = (g_fn(nu) - target) / std::expm1(nu);
    if (!std::isfinite(step)) break;
    nu = std::clamp(nu - step, lo, hi);
  }
  if (!(std::abs(g_fn(nu) - target) <= 1e-10 * std::max(1.0, target))) throw NumericError("solve_g did not converge");
  return nu;
}

std::string_view regime_name(Regime r) { return r == Regime::symmetric ? "symmetric" : "asymmetric"; }

namespace {

ThresholdVector thresholds_for(const SignalStrengths& cs, double v) {
  std::vector<double> h(cs.size());
  for (std::size_t i = 0; i < cs.size(); ++i) h[i] = 1.0 + v / cs.squared(i);
  return ThresholdVector(std::move(h));
}

CalibrationResult calibrate(const SignalStrengths& cs, double gamma, Regime regime, const CalibrateOptions& opt) {
  require(gamma > 0.0 && std::isfinite(gamma), "gamma must be positive");
  require(opt.tol > 0.0 && opt.fa_rel_tol > 0.0, "tolerances must be positive");
  const std::size_t n = cs.size();
  require(n >= 1, "need at least one sensor");
  const double cn2 = cs.squared(n - 1);
  const double target = cn2 * gamma;
  const SignVector s0 = SignVector::all_minus(n);

  // log f - log target along v; f grows roughly like e^{h}, so this is close
  // to linear and the Illinois iteration converges quickly.
  const auto fa = [&](double v) {
    return f_origin(s0, thresholds_for(cs, v), cs, std::max(1e-12, 0.1 * opt.fa_rel_tol * target));
  };
  const auto resid = [&](double v) { return std::log(fa(v).value / target); };

  double lo = std::max(0.1, std::log(target) / 4.0);
  double r_lo = resid(lo);
  for (int it = 0; r_lo > 0.0; ++it) {
    if (it > 60) throw NumericError("could not bracket the false-alarm equation from below");
    lo *= 0.5;
    r_lo = resid(lo);
  }
  double hi = std::max(2.0 * lo, 1.0);
  double r_hi = resid(hi);
  for (int it = 0; r_hi < 0.0; ++it) {
    if (it > 60) throw NumericError("could not bracket the false-alarm equation from above");
    lo = hi;
    r_lo = r_hi;
    hi *= 2.0;
    r_hi = resid(hi);
  }
  int side = 0;
  double v = lo;
  bool done = false;
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    v = (lo * r_hi - hi * r_lo) / (r_hi - r_lo);
    if (!(v > lo && v < hi)) v = 0.5 * (lo + hi);
    const double r = resid(v);
    if (std::abs(r) < 0.5 * opt.fa_rel_tol || hi - lo < 1e-14 * hi) {
      done = true;
      break;
    }
    if (r < 0.0) {
      lo = v;
      r_lo = r;
      if (side == -1) r_hi *= 0.5;
      side = -1;
    } else {
      hi = v;
      r_hi = r;
      if (side == 1) r_lo *= 0.5;
      side = 1;
    }
  }
  if (!done) throw NumericError("calibration did not converge");

  CalibrationResult out;
  out.gamma = gamma;
  out.strengths = cs;
  out.regime = regime;
  out.v = v;
  out.hbar = thresholds_for(cs, v);
  const FValue f0 = fa(v);
  out.false_alarm = f0.value;
  out.false_alarm_rel_residual = std::abs(f0.value - target) / target;
  out.method = f0.method;
  out.nu_star = solve_g(target);
  out.lower_bound = g_fn(-out.nu_star);
  out.j_kl = -1.0;
  for (std::size_t j = 0; j < n; ++j) {
    const FValue fj = f_origin(SignVector::changed(n, j), out.hbar, cs, opt.tol);
    out.delays.push_back(fj.value);
    out.delay_errors.push_back(fj.error_estimate);
    out.j_kl = std::max(out.j_kl, fj.value);
    if (fj.method != FMethod::series_quadrature) out.method = fj.method;
  }
  out.gap = out.j_kl - out.lower_bound;
  return out;
}

}  // namespace

CalibrationResult calibrate_symmetric(std::size_t n, double gamma, const CalibrateOptions& opt) {
  require(n >= 1, "need at least one sensor");
  return calibrate(SignalStrengths::symmetric(n), gamma, Regime::symmetric, opt);
}

CalibrationResult calibrate_asymmetric(const SignalStrengths& cs, double gamma, const CalibrateOptions& opt) {
  require(cs.size() >= 1, "need at least one sensor");
  return calibrate(cs, gamma, Regime::asymmetric, opt);
}

std::vector<double> equalizer_residual(const ThresholdVector& hbar, const SignalStrengths& cs, double tol) {
  require(hbar.size() == cs.size(), "dimension mismatch between thresholds and strengths");
  const std::size_t n = cs.size();
  std::vector<double> out;
  if (n < 2) return out;
  const double f1 = f_origin(SignVector::changed(n, 0), hbar, cs, tol).value;
  for (std::size_t j = 1; j < n; ++j) out.push_back(f_origin(SignVector::changed(n, j), hbar, cs, tol).value - f1);
  return out;
}

}  // namespace qdetect
