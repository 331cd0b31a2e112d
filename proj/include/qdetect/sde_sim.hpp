#pragma once

// Euler-Maruyama simulation of N coupled observation processes
//
//   dZ_i = 1{t > tau_i} alpha_i(t, Z) dt + dw_i,
//
// on the uniform grid {0, dt, 2dt, ...}.  The drift seen by the detector is the
// same functional evaluated on the observed path irrespective of the true
// change points; only the simulated data gate it with the indicator.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace qdetect {

inline constexpr double kNoChange = std::numeric_limits<double>::infinity();

// Per-sensor change points; kNoChange marks a sensor that never changes.
class ChangePointVector {
 public:
  ChangePointVector() = default;
  explicit ChangePointVector(std::vector<double> taus);

  // All-infinite vector of length n.
  static ChangePointVector none(std::size_t n);
  // tau_j = at, every other sensor unchanged.
  static ChangePointVector single(std::size_t n, std::size_t j, double at = 0.0);

  std::size_t size() const noexcept { return taus_.size(); }
  double operator[](std::size_t i) const { return taus_[i]; }
  const std::vector<double>& values() const noexcept { return taus_; }

  // min_i tau_i, or kNoChange when no sensor changes.
  double min_finite() const noexcept;
  bool any_finite() const noexcept { return min_finite() != kNoChange; }

  friend bool operator==(const ChangePointVector&, const ChangePointVector&) = default;

 private:
  std::vector<double> taus_;
};

// Relative signal strengths c_i with |c_i alpha_i| = |alpha_1|.  Canonical
// form: c_1 = 1 and |c_1| <= |c_2| <= ... <= |c_N|.
class SignalStrengths {
 public:
  SignalStrengths() = default;
  explicit SignalStrengths(std::vector<double> cs);

  // N sensors of equal strength.
  static SignalStrengths symmetric(std::size_t n);

  std::size_t size() const noexcept { return cs_.size(); }
  double operator[](std::size_t i) const { return cs_[i]; }
  double squared(std::size_t i) const { return cs_[i] * cs_[i]; }
  double max_abs() const noexcept;
  const std::vector<double>& values() const noexcept { return cs_; }

  friend bool operator==(const SignalStrengths&, const SignalStrengths&) = default;

 private:
  std::vector<double> cs_;
};

// Read-only window onto the first `count` grid points of a path (step-major).
struct PathView {
  const double* data = nullptr;
  std::size_t n_sensors = 0;
  std::size_t count = 0;

  double z(std::size_t sensor, std::size_t step) const { return data[step * n_sensors + sensor]; }
  double latest(std::size_t sensor) const { return z(sensor, count - 1); }
};

struct ConstantDrift {
  double mu = 1.0;
};

// alpha_1(t) = -r * sum_j Z_j(t); alpha_i = alpha_1 / c_i.
struct LinearStateSpaceDrift {
  double r = 0.5;
};

// Arbitrary predictable drift.  Returns alpha_i(t) given the path up to t.
// The caller asserts |c_i alpha_i| = |alpha_1|; simulate() spot-checks it.
struct CustomDrift {
  std::function<double(double t, const PathView& history, std::size_t sensor)> fn;
  std::string name = "custom";
};

using DriftSpec = std::variant<ConstantDrift, LinearStateSpaceDrift, CustomDrift>;

struct SensorSystemSpec {
  SignalStrengths strengths;
  DriftSpec drift = ConstantDrift{};

  std::size_t n_sensors() const noexcept { return strengths.size(); }
};

// Model drift alpha_i evaluated at grid time t on the observed history
// (history.count - 1 is the current grid index).
double model_drift(const SensorSystemSpec& spec, std::size_t sensor, double t, const PathView& history);

// Grid index of the first step carrying drift is change_index + 1.  Change
// points are snapped to the grid time at or after tau.
std::uint64_t change_index(double tau, double dt) noexcept;

struct PathBundle {
  double dt = 0.0;
  std::size_t n_sensors = 0;
  std::size_t n_points = 0;  // M, grid points including t = 0
  // samples[k * N + i] = Z_i(k dt)
  std::vector<double> samples;
  // drift_samples[k * N + i] = realized alpha_i driving the increment that ends at k dt
  std::vector<double> drift_samples;
  std::uint64_t rng_seed = 0;
  std::uint32_t path_index = 0;
  std::vector<std::string> warnings;

  double z(std::size_t sensor, std::size_t step) const { return samples[step * n_sensors + sensor]; }
  double drift(std::size_t sensor, std::size_t step) const {
    return drift_samples[step * n_sensors + sensor];
  }
  double horizon() const noexcept { return dt * static_cast<double>(n_points - 1); }
  PathView view(std::size_t count) const { return {samples.data(), n_sensors, count}; }
};

// Simulates one path.  `path_index` selects an independent substream under the
// same seed, so Monte Carlo path p equals simulate(..., seed, p).
PathBundle simulate(const SensorSystemSpec& spec, const ChangePointVector& taus, double horizon,
                    double dt, std::uint64_t seed, std::uint32_t path_index = 0);

// Left-Riemann approximation of the integral of alpha_1^2 / 2 over [from, to]
// using the realized drift of sensor 1.
double signal_energy(const PathBundle& path, double from, double to);

}  // namespace qdetect
