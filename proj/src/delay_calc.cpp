#include "qdetect/delay_calc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qdetect/errors.hpp"
#include "qdetect/oracles.hpp"
#include "qdetect/parallel.hpp"
#include "qdetect/quadrature.hpp"
#include "qdetect/simd/batch.hpp"

namespace qdetect {

std::string_view method_name(FMethod m) {
  switch (m) {
    case FMethod::series_quadrature: return "series_quadrature";
    case FMethod::asymptotic: return "asymptotic";
    case FMethod::mc_oracle: return "mc_oracle";
    case FMethod::fd_oracle: return "fd_oracle";
  }
  return "unknown";
}

double g_fn(double nu) { return std::expm1(nu) - nu; }

namespace {

void check_dims(const SignVector& sign, const ThresholdVector& hbar, const SignalStrengths& cs) {
  require(sign.size() == hbar.size() && hbar.size() == cs.size(),
          "dimension mismatch between sign vector, thresholds and strengths");
}

}  // namespace

FValue f_origin(const SignVector& sign, const ThresholdVector& hbar, const SignalStrengths& cs, double tol) {
  require(tol > 0.0 && std::isfinite(tol), "tolerance must be positive");
  check_dims(sign, hbar, cs);
  const std::size_t n = sign.size();
  FValue out;
  out.sign = sign;
  out.hbar = hbar;
  out.strengths = cs;

  const auto oracle = [&] {
    ReflectedMcOptions opt;
    opt.n_paths = 100000;
    const auto mc = f_mc_reflected(sign, hbar, cs, opt);
    out.value = mc.mean;
    out.error_estimate = mc.stderr_mc;
    out.method = FMethod::mc_oracle;
    return out;
  };
  bool series = true;
  for (std::size_t i = 0; i < n; ++i) series = series && hbar[i] > 2.0;
  if (!series) return oracle();

  std::vector<std::shared_ptr<const KernelSeries>> ker(n);
  std::vector<double> scale(n);  // kernel argument = scale_i * t
  double t0 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double eps = 1.0 / hbar[i];
    ker[i] = kernel_series(sign[i], eps);
    scale[i] = eps / cs.squared(i);
    t0 = std::min(t0, ker[i]->t_min() / scale[i]);
  }

  // Cutoff and certified tail.
  double cutoff = 0.0, tail_value = 0.0, tail_bound = std::numeric_limits<double>::infinity();
  const double tail_budget = 0.25 * tol;
  if (sign.any_plus()) {
    for (std::size_t i = 0; i < n; ++i) {
      if (sign[i] > 0) cutoff = std::max(cutoff, 6.0 / scale[i]);
    }
    // Any plus kernel dominates the product (the others are at most 1).
    const auto bound_at = [&](double t) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        if (sign[i] > 0) best = std::min(best, ker[i]->integrated_tail_from(1, scale[i] * t) / scale[i]);
      }
      return best;
    };
    for (int it = 0; (tail_bound = bound_at(cutoff)) > tail_budget; ++it) {
      if (it > 400) throw NumericError("could not certify the kernel tail");
      cutoff *= 1.25;
    }
  } else {
    // K_i = A0_i e^{-lambda0_i tau} + H_i: the pure exponential part is
    // integrated exactly, the H remainder is bounded.
    for (std::size_t i = 0; i < n; ++i) cutoff = std::max(cutoff, 6.0 / scale[i]);
    const auto bound_at = [&](double t) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double others = 1.0;
        for (std::size_t k = 0; k < n; ++k) {
          if (k != i) others *= ker[k]->a0() + ker[k]->tail_from(1, scale[k] * t);
        }
        total += ker[i]->integrated_tail_from(1, scale[i] * t) / scale[i] * others;
      }
      return total;
    };
    for (int it = 0; (tail_bound = bound_at(cutoff)) > tail_budget; ++it) {
      if (it > 400) throw NumericError("could not certify the kernel tail");
      cutoff *= 1.25;
    }
    double lam = 0.0, amp = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      lam += scale[i] * ker[i]->lambda0();
      amp *= ker[i]->a0();
    }
    tail_value = amp * std::exp(-lam * cutoff) / lam;
  }

  const double span = cutoff - t0;
  const double kernel_tol = std::max(1e-16, 0.05 * tol / (static_cast<double>(n) * span));
  bool edge = t0 > 0.0;
  const auto integrand = [&](double t) {
    double prod = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const KernelValue kv = ker[i]->eval(scale[i] * t, kernel_tol);
      prod *= kv.value;
      edge = edge || kv.edge;
    }
    return prod;
  };
  // Every factor lies in [0, 1], so the product error is at most the sum of
  // the per-kernel bounds; that sum is integrated on its own, loosely.
  const auto kernel_error = [&](double t) {
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) err += ker[i]->eval(scale[i] * t, kernel_tol).tail_bound;
    return err;
  };
  const QuadResult qe = integrate_gk(kernel_error, t0, cutoff, 0.02 * tol, 32, 4000);
  const double kernel_err = 1.25 * qe.value + qe.error;
  // The plus series cancels terms of size e^{h/2}; past a few dozen nats even
  // extended precision cannot certify it, and the walk oracle takes over.
  if (!(kernel_err <= 0.5 * tol) && n <= 3) return oracle();
  const QuadResult q = integrate_gk(integrand, t0, cutoff, 0.5 * tol, 32, 50000);

  out.value = t0 + q.value + tail_value;
  out.error_estimate = q.error + tail_bound + kernel_err;
  out.edge_used = edge;
  out.tail_bound = tail_bound;
  out.cutoff = cutoff;
  out.method = FMethod::series_quadrature;
  if (!(out.error_estimate <= tol) || !std::isfinite(out.value)) {
    std::ostringstream msg;
    msg << "series quadrature missed tolerance " << tol << " (estimate " << out.error_estimate << ": quadrature "
        << q.error << ", tail " << tail_bound << ", kernel " << kernel_err << ")";
    throw NumericError(msg.str());
  }
  return out;
}

double f_false_alarm_asymptotic(const ThresholdVector& hbar, const SignalStrengths& cs) {
  require(hbar.size() == cs.size(), "dimension mismatch between thresholds and strengths");
  double s = 0.0;
  for (std::size_t i = 0; i < hbar.size(); ++i) s += std::exp(-hbar[i]) / cs.squared(i);
  return 1.0 / s;
}

double f_delay_asymptotic(std::size_t j, const ThresholdVector& hbar, const SignalStrengths& cs) {
  require(hbar.size() == cs.size(), "dimension mismatch between thresholds and strengths");
  require(j < hbar.size(), "sensor index out of range");
  return cs.squared(j) * (hbar[j] - 1.0);
}

// ---------------------------------------------------------------------------

DelayEstimate expected_delay_mc(const SensorSystemSpec& spec, const ChangePointVector& taus,
                                const ThresholdVector& hbar, std::size_t n_paths, double dt, std::uint64_t seed,
                                const DelayMcOptions& options) {
  require(n_paths >= 100, "expected_delay_mc needs at least 100 paths");
  require(dt > 0.0 && std::isfinite(dt), "dt must be positive");
  const std::size_t n = spec.n_sensors();
  require(taus.size() == n && hbar.size() == n, "dimension mismatch between system, change points and thresholds");
  const double origin = taus.any_finite() ? taus.min_finite() : 0.0;
  const bool false_alarm = !taus.any_finite();
  const double cn2 = spec.strengths.squared(n - 1);

  double horizon = options.initial_horizon;
  if (horizon <= 0.0) {
    // energy accrues at alpha_1^2/2 per unit time for constant drifts; a rough
    // guess is enough, the loop below doubles as needed
    double energy_guess;
    if (false_alarm) {
      energy_guess = f_false_alarm_asymptotic(hbar, spec.strengths);
    } else {
      energy_guess = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (taus[i] == origin) energy_guess = std::max(energy_guess, f_delay_asymptotic(i, hbar, spec.strengths));
      }
    }
    double rate = 0.5;
    if (const auto* c = std::get_if<ConstantDrift>(&spec.drift)) rate = 0.5 * c->mu * c->mu;
    horizon = origin + 4.0 * energy_guess / rate + 10.0 * dt;
  }
  const double max_horizon = horizon * options.max_horizon_factor;

  std::vector<simd::DetectionOutcome> out(n_paths);
  std::vector<std::size_t> pending(n_paths);
  for (std::size_t p = 0; p < n_paths; ++p) pending[p] = p;
  double used_horizon = horizon;
  for (;;) {
    const auto batch = simd::make_detection_batch(spec, taus, hbar, dt, horizon, origin, seed);
    if (pending.size() == n_paths) {
      parallel_chunks(n_paths, options.chunk, [&](std::size_t begin, std::size_t count) {
        simd::detect(batch, static_cast<std::uint32_t>(begin), count, out.data() + begin);
      });
    } else {
      parallel_chunks(pending.size(), 64, [&](std::size_t begin, std::size_t count) {
        for (std::size_t k = begin; k < begin + count; ++k) {
          simd::detect(batch, static_cast<std::uint32_t>(pending[k]), 1, &out[pending[k]]);
        }
      });
    }
    used_horizon = horizon;
    std::vector<std::size_t> still;
    for (std::size_t p : pending) {
      if (!out[p].stopped) still.push_back(p);
    }
    pending.swap(still);
    if (pending.empty() || horizon >= max_horizon) break;
    horizon = std::min(2.0 * horizon, max_horizon);
  }
  const std::size_t stopped = n_paths - pending.size();
  if (static_cast<double>(stopped) < 0.999 * static_cast<double>(n_paths)) {
    std::ostringstream msg;
    msg << "nonstopping paths: " << pending.size() << " of " << n_paths << " still running at horizon "
        << used_horizon;
    throw NumericError(msg.str());
  }

  DelayEstimate est;
  est.n_paths = n_paths;
  est.n_stopped = stopped;
  est.horizon = used_horizon;
  double sum = 0.0, sumsq = 0.0, wall = 0.0;
  for (const auto& o : out) {
    const double v = false_alarm ? o.energy / cn2 : o.delay_energy;
    if (options.keep_samples) est.samples.push_back(v);
    sum += v;
    sumsq += v * v;
    wall += dt * static_cast<double>(o.steps);
  }
  const double np = static_cast<double>(n_paths);
  est.mean = sum / np;
  est.stderr_mc = std::sqrt(std::max(0.0, (sumsq - np * est.mean * est.mean) / (np - 1.0)) / np);
  est.mean_wall_time = wall / np;
  return est;
}

}  // namespace qdetect
