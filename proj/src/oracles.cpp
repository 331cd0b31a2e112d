#include "qdetect/oracles.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "qdetect/errors.hpp"
#include "qdetect/parallel.hpp"
#include "qdetect/simd/batch.hpp"

namespace qdetect {

namespace {

double g_plus(double nu) { return std::expm1(nu) - nu; }

// Rough size of E min_i T_i, only used to cap the simulation horizon.
double rough_f(const SignVector& sign, const ThresholdVector& hbar, const SignalStrengths& cs) {
  double best = std::numeric_limits<double>::infinity();
  double rate = 0.0;
  for (std::size_t i = 0; i < sign.size(); ++i) {
    const double c2 = cs.squared(i);
    if (sign[i] > 0) best = std::min(best, c2 * (hbar[i] + 1.0));
    rate += 1.0 / (c2 * std::max(g_plus(hbar[i]), 1e-3));
  }
  return std::min(best, 1.0 / rate);
}

struct ChunkSums {
  double sum = 0.0, sumsq = 0.0;
  std::size_t running = 0;
};

McEstimate run_reflected(const simd::ReflectedBatch& batch, std::size_t n_paths,
                         const std::function<double(const simd::ReflectedOutcome&)>& score, bool need_stop) {
  constexpr std::size_t kChunk = 4096;
  const std::size_t n_chunks = (n_paths + kChunk - 1) / kChunk;
  std::vector<ChunkSums> sums(n_chunks);
  parallel_chunks(n_paths, kChunk, [&](std::size_t begin, std::size_t count) {
    std::vector<simd::ReflectedOutcome> out(count);
    simd::reflected(batch, static_cast<std::uint32_t>(begin), count, out.data());
    ChunkSums& s = sums[begin / kChunk];
    for (const auto& o : out) {
      const double v = score(o);
      s.sum += v;
      s.sumsq += v * v;
      if (!o.stopped) ++s.running;
    }
  });
  ChunkSums total;
  for (const auto& s : sums) {
    total.sum += s.sum;
    total.sumsq += s.sumsq;
    total.running += s.running;
  }
  if (need_stop && total.running > 0) {
    std::ostringstream msg;
    msg << "nonstopping paths: " << total.running << " of " << n_paths << " still running at the maximum horizon";
    throw NumericError(msg.str());
  }
  const double n = static_cast<double>(n_paths);
  McEstimate est;
  est.n_paths = n_paths;
  est.mean = total.sum / n;
  const double var = std::max(0.0, (total.sumsq - n * est.mean * est.mean) / (n - 1.0));
  est.stderr_mc = std::sqrt(var / n);
  return est;
}

simd::ReflectedBatch reflected_batch(const SignVector& sign, const ThresholdVector& hbar, const SignalStrengths& cs,
                                     const ReflectedMcOptions& opt) {
  const std::size_t n = sign.size();
  require(hbar.size() == n && cs.size() == n, "dimension mismatch between sign, thresholds and strengths");
  require(n <= 3, "reflected Monte Carlo oracle is limited to N <= 3");
  simd::ReflectedBatch b;
  b.n_sensors = n;
  b.exact_bridge = opt.scheme == ReflectionScheme::exact_bridge;
  b.seed = opt.seed;
  double dt_auto = std::numeric_limits<double>::infinity();
  double hmin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double c2 = cs.squared(i);
    b.drift.push_back(static_cast<double>(sign[i]) / c2);
    b.sigma.push_back(std::sqrt(2.0) / std::abs(cs[i]));
    b.h.push_back(hbar[i]);
    const double r = hbar[i] / (6.0 * b.sigma.back());
    dt_auto = std::min(dt_auto, r * r);
    hmin = std::min(hmin, hbar[i]);
  }
  b.dt = opt.dt > 0.0 ? opt.dt : (b.exact_bridge ? dt_auto : 1e-4 * hmin * hmin);
  return b;
}

}  // namespace

McEstimate f_mc_reflected(const SignVector& sign, const ThresholdVector& hbar, const SignalStrengths& cs,
                          const ReflectedMcOptions& opt) {
  require(opt.n_paths >= 2, "need at least two paths");
  simd::ReflectedBatch b = reflected_batch(sign, hbar, cs, opt);
  const double max_time = opt.max_time > 0.0 ? opt.max_time : 60.0 * rough_f(sign, hbar, cs) + 10.0;
  b.max_steps = static_cast<std::uint64_t>(std::ceil(max_time / b.dt));
  return run_reflected(b, opt.n_paths, [](const simd::ReflectedOutcome& o) { return o.time; }, true);
}

McEstimate kernel_survival_mc(int sign, double eps, double tau, std::size_t n_paths, std::uint64_t seed) {
  require(eps > 0.0 && tau >= 0.0, "kernel survival needs eps > 0 and tau >= 0");
  const double h = 1.0 / eps;
  const double t_end = tau / eps;
  ReflectedMcOptions opt;
  opt.seed = seed;
  simd::ReflectedBatch b = reflected_batch(SignVector({sign}), ThresholdVector({h}), SignalStrengths({1.0}), opt);
  if (t_end <= 0.0) return {1.0, 0.0, n_paths};
  b.dt = std::min(b.dt, t_end);
  b.max_steps = static_cast<std::uint64_t>(std::ceil(t_end / b.dt));
  return run_reflected(
      b, n_paths, [t_end](const simd::ReflectedOutcome& o) { return o.stopped && o.time <= t_end ? 0.0 : 1.0; },
      false);
}

// ---------------------------------------------------------------------------

FDGrid f_fd_solve(const SignVector& sign, const ThresholdVector& hbar, const SignalStrengths& cs, std::size_t nx,
                  std::size_t ny) {
  require(sign.size() == 2 && hbar.size() == 2 && cs.size() == 2, "finite differences are implemented for N = 2");
  require(nx >= 50 && ny >= 50, "finite-difference grids need at least 50 cells per side");
  FDGrid grid;
  grid.nx = nx;
  grid.ny = ny;
  grid.h1 = hbar[0];
  grid.h2 = hbar[1];
  const double dx = grid.h1 / static_cast<double>(nx);
  const double dy = grid.h2 / static_cast<double>(ny);
  const double ax = 1.0 / cs.squared(0), ay = 1.0 / cs.squared(1);
  const double sx = sign[0], sy = sign[1];

  // unknowns: i < nx, j < ny (the far edges are Dirichlet zeros)
  const auto idx = [ny](std::size_t i, std::size_t j) { return static_cast<int>(i * ny + j); };
  const int n_unknowns = static_cast<int>(nx * ny);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n_unknowns) * 5);
  const double cx2 = ax / (dx * dx), cy2 = ay / (dy * dy);
  const double cx1 = ax * sx / (2.0 * dx), cy1 = ay * sy / (2.0 * dy);
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      const int row = idx(i, j);
      trip.emplace_back(row, row, -2.0 * cx2 - 2.0 * cy2);
      // x direction; at i = 0 the ghost node mirrors i = 1 (zero normal derivative)
      if (i == 0) {
        trip.emplace_back(row, idx(1, j), 2.0 * cx2);
      } else {
        trip.emplace_back(row, idx(i - 1, j), cx2 - cx1);
        if (i + 1 < nx) trip.emplace_back(row, idx(i + 1, j), cx2 + cx1);
      }
      if (j == 0) {
        trip.emplace_back(row, idx(i, 1), 2.0 * cy2);
      } else {
        trip.emplace_back(row, idx(i, j - 1), cy2 - cy1);
        if (j + 1 < ny) trip.emplace_back(row, idx(i, j + 1), cy2 + cy1);
      }
    }
  }
  Eigen::SparseMatrix<double> a(n_unknowns, n_unknowns);
  a.setFromTriplets(trip.begin(), trip.end());
  a.makeCompressed();
  Eigen::VectorXd rhs = Eigen::VectorXd::Constant(n_unknowns, -1.0);
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw NumericError("finite-difference system is singular");
  const Eigen::VectorXd sol = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !sol.allFinite()) throw NumericError("finite-difference solve failed");

  grid.values.assign((nx + 1) * (ny + 1), 0.0);
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) grid.values[i * (ny + 1) + j] = sol[idx(i, j)];
  }
  return grid;
}

FdEstimate f_fd_richardson(const SignVector& sign, const ThresholdVector& hbar, const SignalStrengths& cs,
                           std::size_t n) {
  FdEstimate est;
  est.coarse = f_fd_solve(sign, hbar, cs, n, n).origin();
  est.fine = f_fd_solve(sign, hbar, cs, 2 * n, 2 * n).origin();
  est.value = (4.0 * est.fine - est.coarse) / 3.0;
  est.error = std::abs(est.fine - est.coarse) / 3.0;
  return est;
}

}  // namespace qdetect
