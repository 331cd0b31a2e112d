#pragma once

// Survival kernels K_{+-1,eps}(tau, 0) of a reflected drifted Brownian motion
// below the level h = 1/eps, as Sturm-Liouville eigenfunction series.
//
//   K_{-1}(tau) = A0 exp(-lambda0 tau) + H(tau),   lambda0 = 1/(4 eps) - omega^2 eps
//   H(tau)      = sum_n A_n e^{-1/(2 eps)} sin(w_n)/w_n exp(-(w_n^2 eps + 1/(4 eps)) tau)
//   K_{+1}(tau) = e^{-tau/(4 eps)} sum_n e^{1/(2 eps)} sin(w'_n)/w'_n B_n exp(-w'_n^2 eps tau)
//
// with tanh(omega) = 2 eps omega, tan(w_n) = 2 eps w_n on [n pi, n pi + pi/2]
// and tan(w'_n) = -2 eps w'_n on [n pi - pi/2, n pi].  Valid for 0 < eps < 1/2.

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace qdetect {

class SignVector {
 public:
  SignVector() = default;
  explicit SignVector(std::vector<int> signs);

  // All -1: the pre-change (false alarm) regime.
  static SignVector all_minus(std::size_t n);
  // +1 at j, -1 elsewhere: sensor j changed first.
  static SignVector changed(std::size_t n, std::size_t j);

  std::size_t size() const noexcept { return s_.size(); }
  int operator[](std::size_t i) const { return s_[i]; }
  const std::vector<int>& values() const noexcept { return s_; }
  bool any_plus() const noexcept;

  friend bool operator==(const SignVector&, const SignVector&) = default;

 private:
  std::vector<int> s_;
};

// Unique positive root of tanh(w) = 2 eps w, 0 < eps < 1/2.
double solve_omega(double eps);

// The quantity w - 1/(2 eps) + e^{-1/eps}/eps, evaluated without the
// cancellation that makes the naive difference vanish in double precision.
double omega_expansion_gap(double eps);

// Roots 1..n_max of tan(w) = 2 sign' eps w in their brackets (sign = -1:
// [n pi, n pi + pi/2]; sign = +1: [n pi - pi/2, n pi]).
std::vector<double> solve_oscillatory_roots(int sign, double eps, std::size_t n_max);

// Angle residual |w - n pi - atan(2 eps w)| (sign -1) or |n pi - w - atan(2 eps w)|
// (sign +1): the distance from w to the exact root, to first order.
double oscillatory_residual(int sign, double eps, std::size_t n, double w);

struct KernelValue {
  double value = 1.0;
  std::size_t n_terms = 0;
  double tail_bound = 0.0;    // certified bound on the dropped terms (+ rounding)
  bool edge = false;          // tau below t_min, answered by K(0) = 1
  bool oracle = false;        // eps >= 1/2, answered by Monte Carlo
  double stderr_mc = 0.0;
};

// Truncated series for one (sign, eps).  Roots are precomputed for every
// argument down to t_min, so evaluation is read-only and thread-safe.
class KernelSeries {
 public:
  static constexpr std::size_t kMinTerms = 8;

  KernelSeries(int sign, double eps, double t_min_factor = 1e-4);

  int sign() const noexcept { return sign_; }
  double eps() const noexcept { return eps_; }
  double t_min() const noexcept { return t_min_; }
  double omega() const noexcept { return omega_; }
  double a0() const noexcept { return a0_; }
  // lambda0 for the minus kernel, 0 for the plus kernel.
  double lambda0() const noexcept { return lambda0_; }
  const std::vector<double>& roots() const noexcept { return roots_; }
  const std::vector<double>& coeffs() const noexcept { return coeffs_; }
  const std::vector<double>& rates() const noexcept { return rates_; }

  // K(tau, 0) with truncation error at most tol, clamped to [0, 1].  The
  // reported tail_bound adds an estimate of the summation rounding, which
  // dominates for the plus kernel at small eps and tau < 2.
  KernelValue eval(double tau, double tol) const;

  // Bound on sum_{n >= first} |c_n| e^{-r_n tau} using only the bracket
  // information w_n >= n pi (minus) or w'_n >= n pi - pi/2 (plus).
  double tail_from(std::size_t first, double tau) const;
  // Bound on the integral over [T, inf) of sum_{n >= first} |c_n| e^{-r_n tau}.
  double integrated_tail_from(std::size_t first, double t_lower) const;

 private:
  int sign_;
  double eps_;
  double t_min_;
  double omega_ = 0.0;
  double a0_ = 0.0;
  double lambda0_ = 0.0;
  double log_env_ = 0.0;  // -1/(2 eps) (minus) or 1/(2 eps) (plus)
  std::vector<double> roots_;
  std::vector<double> coeffs_;
  std::vector<double> rates_;
  // The plus series cancels terms of size e^{1/(2 eps)} down to O(1) values, so
  // evaluation runs on extended-precision roots, weights and rates.
  std::vector<long double> wl_, bl_, rl_;

  double lower_root(std::size_t n) const;
};

// Single-call front ends.  eps >= 1/2 falls to the Monte Carlo oracle.
KernelValue eval_kminus(double eps, double tau, double tol);
KernelValue eval_kplus(double eps, double tau, double tol);
KernelValue eval_kernel(int sign, double eps, double tau, double tol);

// Shared immutable series, cached per (sign, eps).
std::shared_ptr<const KernelSeries> kernel_series(int sign, double eps);

}  // namespace qdetect
