#pragma once

// Brute-force references for the delay/false-alarm function f_{S,h}(0):
//
//   * Monte Carlo over N independent reflected Brownian motions with drift
//     S_i / c_i^2 and diffusion sqrt(2) / |c_i|, averaging the first time any
//     of them reaches its threshold h_i;
//   * finite differences for the N = 2 elliptic problem
//       sum_i c_i^{-2} (f_{y_i y_i} + S_i f_{y_i}) = -1,
//     f_{y_i} = 0 at y_i = 0 and f = 0 at y_i = h_i.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "qdetect/cusum.hpp"
#include "qdetect/kernel.hpp"
#include "qdetect/sde_sim.hpp"

namespace qdetect {

struct McEstimate {
  double mean = 0.0;
  double stderr_mc = 0.0;
  std::size_t n_paths = 0;
};

enum class ReflectionScheme {
  exact_bridge,    // exact reflected increments, bridge-refined crossing times
  absolute_value,  // X <- |X + dX|, crossings at grid times
};

struct ReflectedMcOptions {
  std::size_t n_paths = 100000;
  double dt = 0.0;  // 0 selects min_i (h_i / (6 sigma_i))^2 (exact bridge) or 1e-4 min h_i^2
  std::uint64_t seed = 1;
  ReflectionScheme scheme = ReflectionScheme::exact_bridge;
  double max_time = 0.0;  // 0 selects a generous multiple of the asymptotic estimate
};

// E min_i T_{h_i} for the reflected system.  Throws NumericError naming the
// count of paths still running at max_time.
McEstimate f_mc_reflected(const SignVector& sign, const ThresholdVector& hbar, const SignalStrengths& cs,
                          const ReflectedMcOptions& options = {});

// P(T_{1/eps} > tau / eps) for one reflected motion, i.e. K_{sign,eps}(tau, 0).
McEstimate kernel_survival_mc(int sign, double eps, double tau, std::size_t n_paths, std::uint64_t seed);

struct FDGrid {
  std::size_t nx = 0, ny = 0;
  double h1 = 0.0, h2 = 0.0;
  std::vector<double> values;  // (nx + 1) * (ny + 1), index i * (ny + 1) + j

  double at(std::size_t i, std::size_t j) const { return values[i * (ny + 1) + j]; }
  double origin() const { return values.front(); }
};

FDGrid f_fd_solve(const SignVector& sign, const ThresholdVector& hbar, const SignalStrengths& cs, std::size_t nx,
                  std::size_t ny);

struct FdEstimate {
  double value = 0.0;       // Richardson extrapolation (4 f_fine - f_coarse) / 3
  double error = 0.0;       // |f_fine - f_coarse| / 3
  double coarse = 0.0, fine = 0.0;
};

// Solves on n x n and 2n x 2n grids and extrapolates.
FdEstimate f_fd_richardson(const SignVector& sign, const ThresholdVector& hbar, const SignalStrengths& cs,
                           std::size_t n);

}  // namespace qdetect
