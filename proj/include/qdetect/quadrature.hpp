#pragma once

// Globally adaptive Gauss-Kronrod (7/15) quadrature on a finite interval.
// The interval with the largest error estimate is bisected until the summed
// estimate falls below the tolerance.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <queue>
#include <vector>

#include "qdetect/errors.hpp"

namespace qdetect {

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
  std::size_t evaluations = 0;
  bool converged = false;
};

namespace gk {

inline constexpr std::array<double, 8> kXk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851, 0.864864423359769072789712788640926,
    0.741531185599394439863864773280788, 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204, 0.104790010322250183839876322541518,
    0.140653259715525918745189590510238, 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                              0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double a, b, value, error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

template <class F>
Panel panel(F& f, double a, double b) {
  const double c = 0.5 * (a + b), r = 0.5 * (b - a);
  const double fc = f(c);
  double kron = kWk[7] * fc;
  double gauss = kWg[3] * fc;
  for (int k = 0; k < 7; ++k) {
    const double x = r * kXk[k];
    const double s = f(c - x) + f(c + x);
    kron += kWk[k] * s;
    if (k % 2 == 1) gauss += kWg[k / 2] * s;
  }
  return {a, b, kron * r, std::abs((kron - gauss) * r)};
}

}  // namespace gk

// Integrates f over [a, b] to absolute tolerance tol, starting from
// `initial` equal panels.
template <class F>
QuadResult integrate_gk(F&& f, double a, double b, double tol, std::size_t initial = 1,
                        std::size_t max_panels = 20000) {
  require(tol > 0.0, "quadrature tolerance must be positive");
  require(b >= a, "quadrature interval is reversed");
  QuadResult res;
  if (b == a) {
    res.converged = true;
    return res;
  }
  std::priority_queue<gk::Panel> heap;
  double value = 0.0, error = 0.0;
  initial = std::max<std::size_t>(initial, 1);
  for (std::size_t k = 0; k < initial; ++k) {
    const double lo = a + (b - a) * static_cast<double>(k) / static_cast<double>(initial);
    const double hi = k + 1 == initial ? b : a + (b - a) * static_cast<double>(k + 1) / static_cast<double>(initial);
    const auto p = gk::panel(f, lo, hi);
    value += p.value;
    error += p.error;
    heap.push(p);
  }
  res.evaluations = 15 * initial;
  while (error > tol && heap.size() < max_panels) {
    const gk::Panel worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    const auto left = gk::panel(f, worst.a, mid);
    const auto right = gk::panel(f, mid, worst.b);
    res.evaluations += 30;
    value += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
  }
  // re-sum to shed accumulated update rounding
  value = 0.0;
  error = 0.0;
  while (!heap.empty()) {
    value += heap.top().value;
    error += heap.top().error;
    heap.pop();
  }
  res.value = value;
  res.error = error;
  res.converged = error <= tol;
  return res;
}

}  // namespace qdetect
