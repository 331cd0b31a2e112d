#include "qdetect/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

#include "qdetect/errors.hpp"
#include "qdetect/oracles.hpp"

namespace qdetect {

using std::numbers::pi;

SignVector::SignVector(std::vector<int> signs) : s_(std::move(signs)) {
  require(!s_.empty(), "sign vector is empty");
  for (int s : s_) require(s == 1 || s == -1, "sign vector entries must be +1 or -1");
}

SignVector SignVector::all_minus(std::size_t n) { return SignVector(std::vector<int>(n, -1)); }

SignVector SignVector::changed(std::size_t n, std::size_t j) {
  require(j < n, "sensor index out of range");
  std::vector<int> s(n, -1);
  s[j] = 1;
  return SignVector(std::move(s));
}

bool SignVector::any_plus() const noexcept {
  return std::any_of(s_.begin(), s_.end(), [](int s) { return s == 1; });
}

// ---------------------------------------------------------------------------
// roots

double solve_omega(double eps) {
  if (!(eps > 0.0 && eps < 0.5)) throw PreconditionError("no positive root of tanh(w) = 2 eps w unless 0 < eps < 1/2");
  const auto f = [eps](double w) { return std::tanh(w) - 2.0 * eps * w; };
  // f > 0 just right of 0 (slope 1 - 2 eps), f < 0 at 1/(2 eps).
  double lo = 0.0, hi = 0.5 / eps;
  while (hi - lo > 1e-8) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  double w = 0.5 * (lo + hi);
  for (int it = 0; it < 50; ++it) {
    const double c = std::cosh(w);
    const double step = f(w) / (1.0 / (c * c) - 2.0 * eps);
    const double next = std::clamp(w - step, lo, hi);
    if (next == w) break;
    w = next;
    if (std::abs(step) < 1e-15 * w) break;
  }
  if (!(std::abs(f(w)) < 1e-12)) throw NumericError("omega root did not converge");
  return w;
}

namespace {

// delta = w - 1/(2 eps) = (tanh w - 1) / (2 eps), accurate for small eps.
double omega_offset(double eps, double w) { return -1.0 / (eps * (std::exp(2.0 * w) + 1.0)); }

}  // namespace

double omega_expansion_gap(double eps) {
  const double w = solve_omega(eps);
  const double delta = omega_offset(eps, w);
  const double e = std::exp(-1.0 / eps);
  const double x = std::exp(-2.0 * w);
  // delta + e/eps = (e/eps) (1 - e^{-2 delta} + x) / (1 + x) since x = e e^{-2 delta}
  return (e / eps) * (-std::expm1(-2.0 * delta) + x) / (1.0 + x);
}

namespace {

// Offset theta in [0, pi/2] from the bracket end: w = n pi + theta (sign -1)
// or w = n pi - theta (sign +1); in both cases theta = atan(2 eps w).
long double solve_theta(int sign, long double eps, std::size_t n) {
  const long double half_pi = std::numbers::pi_v<long double> / 2;
  const long double base = std::numbers::pi_v<long double> * static_cast<long double>(n);
  const long double dir = sign < 0 ? 1.0L : -1.0L;
  const auto g = [&](long double th) { return th - std::atan(2.0L * eps * (base + dir * th)); };
  long double lo = 0.0L, hi = half_pi;
  while (hi - lo > 1e-8L) {
    const long double mid = 0.5L * (lo + hi);
    (g(mid) < 0.0L ? lo : hi) = mid;
  }
  long double th = 0.5L * (lo + hi);
  for (int it = 0; it < 20; ++it) {
    const long double a = 2.0L * eps * (base + dir * th);
    const long double dg = 1.0L - dir * 2.0L * eps / (1.0L + a * a);
    const long double next = std::clamp(th - g(th) / dg, 0.0L, half_pi);
    if (next == th) break;
    th = next;
  }
  return th;
}

long double oscillatory_root(int sign, long double eps, std::size_t n) {
  const long double base = std::numbers::pi_v<long double> * static_cast<long double>(n);
  const long double th = solve_theta(sign, eps, n);
  return sign < 0 ? base + th : base - th;
}

}  // namespace

std::vector<double> solve_oscillatory_roots(int sign, double eps, std::size_t n_max) {
  require(sign == 1 || sign == -1, "sign must be +1 or -1");
  require(eps > 0.0 && std::isfinite(eps), "eps must be positive");
  require(n_max >= 1, "need at least one root");
  std::vector<double> out(n_max);
  for (std::size_t n = 1; n <= n_max; ++n) out[n - 1] = static_cast<double>(oscillatory_root(sign, eps, n));
  return out;
}

double oscillatory_residual(int sign, double eps, std::size_t n, double w) {
  const double at = std::atan(2.0 * eps * w);
  const double base = pi * static_cast<double>(n);
  return sign < 0 ? std::abs(w - base - at) : std::abs(base - w - at);
}

// ---------------------------------------------------------------------------
// series

KernelSeries::KernelSeries(int sign, double eps, double t_min_factor) : sign_(sign), eps_(eps) {
  require(sign == 1 || sign == -1, "sign must be +1 or -1");
  require(eps > 0.0 && eps < 0.5, "kernel series need 0 < eps < 1/2");
  require(t_min_factor > 0.0, "t_min factor must be positive");
  t_min_ = t_min_factor * eps;
  const double quarter = 0.25 / eps;
  if (sign < 0) {
    omega_ = solve_omega(eps);
    const double w = omega_;
    const double delta = omega_offset(eps, w);
    lambda0_ = -delta * (1.0 + eps * delta);
    const double denom = -std::expm1(-4.0 * w) / (2.0 * w) - 2.0 * std::exp(-2.0 * w);
    const double em = -std::expm1(-2.0 * w);
    a0_ = em * em / (w + 2.0 * quarter) * std::exp(w - 2.0 * quarter) / denom;
    log_env_ = -2.0 * quarter;
  } else {
    log_env_ = 2.0 * quarter;
  }
  // Enough roots that the bracket bound on the remainder is negligible at t_min.
  std::size_t n = kMinTerms;
  while (tail_from(n + 1, t_min_) > 1e-18 && n < 2'000'000) n = n * 5 / 4 + 1;
  roots_.resize(n);
  coeffs_.resize(n);
  rates_.resize(n);
  wl_.resize(n);
  bl_.resize(n);
  rl_.resize(n);
  const long double el = eps;
  const long double e2 = el * el;
  const long double ql = 0.25L / el;
  for (std::size_t k = 0; k < n; ++k) {
    const long double w = oscillatory_root(sign, el, k + 1);
    const long double ww = w * w;
    const long double amp = sign < 0 ? 8.0L * e2 * ww / (4.0L * e2 * ww + 1.0L - 2.0L * el)
                                     : 8.0L * e2 * ww / (4.0L * e2 * ww + 1.0L + 2.0L * el);
    wl_[k] = w;
    bl_[k] = std::sin(w) / w * amp;
    rl_[k] = ww * el + ql;
    roots_[k] = static_cast<double>(w);
    coeffs_[k] = static_cast<double>(bl_[k]) * std::exp(log_env_);
    rates_[k] = static_cast<double>(rl_[k]);
  }
}

double KernelSeries::lower_root(std::size_t n) const {
  const double base = pi * static_cast<double>(n);
  return sign_ < 0 ? base : base - 0.5 * pi;
}

// |c_n| <= 2 env / L_n and r_n >= L_n^2 eps + 1/(4 eps), with L_n the lower
// bracket end.  Consecutive bounds shrink by at least the first ratio.
double KernelSeries::tail_from(std::size_t first, double tau) const {
  if (tau <= 0.0) return std::numeric_limits<double>::infinity();
  const double l0 = lower_root(first), l1 = lower_root(first + 1);
  const double quarter = 0.25 / eps_;
  const double lead = 2.0 / l0 * std::exp(log_env_ - (l0 * l0 * eps_ + quarter) * tau);
  const double q = std::exp(-(l1 * l1 - l0 * l0) * eps_ * tau);
  return q < 1.0 ? lead / (1.0 - q) : std::numeric_limits<double>::infinity();
}

double KernelSeries::integrated_tail_from(std::size_t first, double t_lower) const {
  if (t_lower <= 0.0) return std::numeric_limits<double>::infinity();
  const double l0 = lower_root(first);
  const double r0 = l0 * l0 * eps_ + 0.25 / eps_;
  return tail_from(first, t_lower) / r0;
}

KernelValue KernelSeries::eval(double tau, double tol) const {
  require(tol > 0.0, "tolerance must be positive");
  require(tau >= 0.0, "kernel argument must be nonnegative");
  KernelValue out;
  if (tau < t_min_) {
    out.value = 1.0;
    out.edge = true;
    return out;
  }
  long double sum = 0.0L, rounding = 0.0L;
  if (sign_ < 0) {
    const double lead = a0_ * std::exp(-lambda0_ * tau);
    sum = lead;
    rounding = 8.0L * std::numeric_limits<double>::epsilon() * lead;
  }
  const long double tl = tau;
  std::size_t n = 0;
  double tail = std::numeric_limits<double>::infinity();
  while (n < roots_.size()) {
    // each term carries relative error ~ eps_ld (8 + |exponent|)
    const long double expo = log_env_ - rl_[n] * tl;
    const long double term = bl_[n] * std::exp(expo);
    sum += term;
    rounding += std::abs(term) * (8.0L + std::abs(expo));
    ++n;
    if (n >= kMinTerms) {
      tail = tail_from(n + 1, tau);
      if (tail <= tol) break;
    }
  }
  out.n_terms = n;
  out.tail_bound = tail + static_cast<double>(rounding * std::numeric_limits<long double>::epsilon()) +
                   std::numeric_limits<double>::epsilon();
  out.value = std::clamp(static_cast<double>(sum), 0.0, 1.0);
  return out;
}

// ---------------------------------------------------------------------------

std::shared_ptr<const KernelSeries> kernel_series(int sign, double eps) {
  static std::mutex mu;
  static std::map<std::pair<int, double>, std::shared_ptr<const KernelSeries>> cache;
  const std::lock_guard<std::mutex> lock(mu);
  // calibration walks through many eps values; holders keep their series alive
  if (cache.size() >= 512 && !cache.count({sign, eps})) cache.clear();
  auto& slot = cache[{sign, eps}];
  if (!slot) slot = std::make_shared<const KernelSeries>(sign, eps);
  return slot;
}

KernelValue eval_kernel(int sign, double eps, double tau, double tol) {
  require(tol > 0.0, "tolerance must be positive");
  require(eps > 0.0 && std::isfinite(eps), "eps must be positive");
  require(tau >= 0.0, "kernel argument must be nonnegative");
  if (eps >= 0.5) {
    KernelValue out;
    const auto mc = kernel_survival_mc(sign, eps, tau, 100000, 0x5eed);
    out.value = mc.mean;
    out.stderr_mc = mc.stderr_mc;
    out.oracle = true;
    return out;
  }
  return kernel_series(sign, eps)->eval(tau, tol);
}

KernelValue eval_kminus(double eps, double tau, double tol) { return eval_kernel(-1, eps, tau, tol); }
KernelValue eval_kplus(double eps, double tau, double tol) { return eval_kernel(1, eps, tau, tol); }

}  // namespace qdetect
