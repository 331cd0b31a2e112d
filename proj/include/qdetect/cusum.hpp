#pragma once

// Per-sensor CUSUM statistics y_i = u_i - m_i and the multi-chart rule
//
//   T = inf{ t : max_i y_i(t) / h_i >= 1 },
//
// with u_i(t) = int alpha_i dZ_i - 1/2 int alpha_i^2 ds and m_i its running
// minimum.  m_i is stored explicitly (not the reflected recursion) so that u, m
// and y are all observable.  Crossings are checked at grid times only and ties
// go to the lowest sensor index.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qdetect/sde_sim.hpp"

namespace qdetect {

struct CusumState {
  std::vector<double> u;
  std::vector<double> m;
  std::vector<double> y;
  double t = 0.0;

  static CusumState zero(std::size_t n) {
    return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0.0};
  }
  std::size_t size() const noexcept { return u.size(); }
};

struct Increment {
  double dz;
  double alpha;
};

// One grid step: u += alpha dZ - alpha^2 dt / 2, m = min(m, u), y = u - m.
CusumState update(const CusumState& state, std::span<const Increment> increments, double dt);

class ThresholdVector {
 public:
  ThresholdVector() = default;
  explicit ThresholdVector(std::vector<double> hs);
  static ThresholdVector uniform(std::size_t n, double h) { return ThresholdVector(std::vector<double>(n, h)); }

  std::size_t size() const noexcept { return hs_.size(); }
  double operator[](std::size_t i) const { return hs_[i]; }
  const std::vector<double>& values() const noexcept { return hs_; }

  friend bool operator==(const ThresholdVector&, const ThresholdVector&) = default;

 private:
  std::vector<double> hs_;
};

struct StopReport {
  bool stopped = false;
  std::optional<double> stop_time;
  std::optional<std::size_t> firing_sensor;
  std::vector<double> y_at_stop;
  std::uint64_t steps = 0;  // grid steps consumed
  // Model-clock energy: integral of alpha_1^2 / 2 over [0, stop] (or the horizon).
  double energy = 0.0;
  // The same integral restricted to (clock_origin, stop]; zero when stopping
  // at or before the origin.
  double delay_energy = 0.0;
};

// Streaming multi-chart detector.  Feed observation increments grid step by
// grid step; the detector evaluates the model drift on the path it has seen.
class MultiChartDetector {
 public:
  MultiChartDetector(SensorSystemSpec spec, ThresholdVector hbar, double dt, double clock_origin = 0.0);

  // Increments over (t, t + dt].  Returns the stop report once the rule fires;
  // further calls after stopping are rejected.
  std::optional<StopReport> feed(std::span<const double> dz);
  // As above with an explicit end time, checked against the internal clock.
  std::optional<StopReport> feed(double t_end, std::span<const double> dz);

  // Same step, given the observed levels Z(t + dt) instead of increments.
  std::optional<StopReport> feed_levels(std::span<const double> z_next);

  const CusumState& state() const noexcept { return state_; }
  bool stopped() const noexcept { return stopped_; }
  // Report for the current position (stopped = false unless the rule fired).
  StopReport report() const;

 private:
  SensorSystemSpec spec_;
  ThresholdVector hbar_;
  double dt_;
  std::uint64_t origin_index_;
  bool keep_history_;
  std::vector<double> history_;  // step-major Z values (only the last row unless custom)
  CusumState state_;
  std::uint64_t steps_ = 0;
  double energy_ = 0.0;
  double origin_energy_ = 0.0;
  bool stopped_ = false;
  std::optional<std::size_t> firing_;
  std::vector<Increment> scratch_;
  std::vector<double> level_scratch_;

  std::optional<StopReport> step(std::span<const double> dz, std::span<const double> z_next);
};

// Runs the multi-chart rule over a simulated path.
StopReport run_detector(const PathBundle& path, const SensorSystemSpec& spec, const ThresholdVector& hbar,
                        double clock_origin = 0.0);

// One-sensor CUSUM S_nu on `sensor`, nu >= 0 (nu = 0 stops immediately).
StopReport single_cusum(const PathBundle& path, const SensorSystemSpec& spec, std::size_t sensor, double nu,
                        double clock_origin = 0.0);

}  // namespace qdetect
