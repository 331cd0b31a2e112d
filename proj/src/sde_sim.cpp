#include "qdetect/sde_sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qdetect/errors.hpp"
#include "qdetect/rng.hpp"

namespace qdetect {

ChangePointVector::ChangePointVector(std::vector<double> taus) : taus_(std::move(taus)) {
  for (double t : taus_) {
    require(!std::isnan(t) && t >= 0.0, "change points must be >= 0 or infinite");
  }
}

ChangePointVector ChangePointVector::none(std::size_t n) {
  return ChangePointVector(std::vector<double>(n, kNoChange));
}

ChangePointVector ChangePointVector::single(std::size_t n, std::size_t j, double at) {
  require(j < n, "sensor index out of range");
  std::vector<double> taus(n, kNoChange);
  taus[j] = at;
  return ChangePointVector(std::move(taus));
}

double ChangePointVector::min_finite() const noexcept {
  double best = kNoChange;
  for (double t : taus_) best = std::min(best, t);
  return best;
}

SignalStrengths::SignalStrengths(std::vector<double> cs) : cs_(std::move(cs)) {
  require(!cs_.empty(), "at least one sensor is required");
  require(cs_.front() == 1.0, "canonical strengths need c_1 = 1");
  for (std::size_t i = 0; i < cs_.size(); ++i) {
    require(std::isfinite(cs_[i]) && cs_[i] != 0.0, "signal strengths must be finite and nonzero");
    if (i > 0) {
      require(std::abs(cs_[i - 1]) <= std::abs(cs_[i]),
              "signal strengths must be ordered by nondecreasing |c_i|");
    }
  }
}

SignalStrengths SignalStrengths::symmetric(std::size_t n) {
  return SignalStrengths(std::vector<double>(n, 1.0));
}

double SignalStrengths::max_abs() const noexcept {
  double m = 0.0;
  for (double c : cs_) m = std::max(m, std::abs(c));
  return m;
}

double model_drift(const SensorSystemSpec& spec, std::size_t sensor, double t, const PathView& history) {
  const double c = spec.strengths[sensor];
  return std::visit(
      [&](const auto& d) -> double {
        using D = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<D, ConstantDrift>) {
          return d.mu / c;
        } else if constexpr (std::is_same_v<D, LinearStateSpaceDrift>) {
          double sum = 0.0;
          for (std::size_t j = 0; j < history.n_sensors; ++j) sum = sum + history.latest(j);
          return ((-d.r) * sum) / c;
        } else {
          return d.fn(t, history, sensor);
        }
      },
      spec.drift);
}

std::uint64_t change_index(double tau, double dt) noexcept {
  if (!std::isfinite(tau)) return std::numeric_limits<std::uint64_t>::max();
  const double k = std::ceil(tau / dt - 1e-9);
  return k <= 0.0 ? 0 : static_cast<std::uint64_t>(k);
}

namespace {

void validate_drift(const SensorSystemSpec& spec) {
  require(spec.n_sensors() > 0, "system has no sensors");
  if (const auto* c = std::get_if<ConstantDrift>(&spec.drift)) {
    require(c->mu != 0.0 && std::isfinite(c->mu), "constant drift needs mu != 0");
  } else if (const auto* l = std::get_if<LinearStateSpaceDrift>(&spec.drift)) {
    require(l->r > 0.0 && std::isfinite(l->r), "linear state-space drift needs r > 0");
  } else {
    require(static_cast<bool>(std::get<CustomDrift>(spec.drift).fn), "custom drift has no callback");
  }
}

}  // namespace

PathBundle simulate(const SensorSystemSpec& spec, const ChangePointVector& taus, double horizon,
                    double dt, std::uint64_t seed, std::uint32_t path_index) {
  require(dt > 0.0 && std::isfinite(dt), "dt must be positive");
  require(horizon >= dt, "horizon must be at least dt");
  validate_drift(spec);
  const std::size_t n = spec.n_sensors();
  require(taus.size() == n, "change-point vector length must equal the number of sensors");

  PathBundle out;
  out.dt = dt;
  out.n_sensors = n;
  out.n_points = static_cast<std::size_t>(std::floor(horizon / dt + 1e-9)) + 1;
  out.samples.assign(out.n_points * n, 0.0);
  out.drift_samples.assign(out.n_points * n, 0.0);
  out.rng_seed = seed;
  out.path_index = path_index;

  std::vector<std::uint64_t> starts(n);
  for (std::size_t i = 0; i < n; ++i) starts[i] = change_index(taus[i], dt);

  const bool custom = std::holds_alternative<CustomDrift>(spec.drift);
  bool warned = false;
  const auto key = rng::key_from_seed(seed);
  const double sqdt = std::sqrt(dt);
  const std::size_t groups = (n + 3) / 4;
  std::vector<double> alpha(n), xi(groups * 4);

  for (std::size_t k = 1; k < out.n_points; ++k) {
    const PathView history = out.view(k);
    const double t_prev = dt * static_cast<double>(k - 1);
    for (std::size_t i = 0; i < n; ++i) {
      alpha[i] = model_drift(spec, i, t_prev, history);
      if (!std::isfinite(alpha[i])) {
        std::ostringstream msg;
        msg << "drift blowup at step " << k << " in sensor " << (i + 1);
        throw NumericError(msg.str());
      }
    }
    if (custom && !warned) {
      for (std::size_t i = 1; i < n; ++i) {
        const double lhs = std::abs(spec.strengths[i] * alpha[i]);
        const double rhs = std::abs(alpha[0]);
        if (std::abs(lhs - rhs) > 1e-9 * std::max({1.0, lhs, rhs})) {
          std::ostringstream msg;
          msg << "custom drift violates |c_i alpha_i| = |alpha_1| at step " << k << " sensor "
              << (i + 1);
          out.warnings.push_back(msg.str());
          warned = true;
          break;
        }
      }
    }
    for (std::size_t g = 0; g < groups; ++g) {
      const auto block = rng::philox4x32_10(
          rng::counter(k, path_index, static_cast<std::uint32_t>(g), rng::Stream::observation_noise), key);
      const auto z = rng::normals4(block);
      std::copy(z.begin(), z.end(), xi.begin() + static_cast<std::ptrdiff_t>(4 * g));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const bool active = k > starts[i];
      const double drift_term = active ? alpha[i] * dt : 0.0;
      const double dz = drift_term + sqdt * xi[i];
      out.samples[k * n + i] = out.samples[(k - 1) * n + i] + dz;
      out.drift_samples[k * n + i] = active ? alpha[i] : 0.0;
    }
  }
  return out;
}

double signal_energy(const PathBundle& path, double from, double to) {
  require(from >= 0.0 && from <= to, "signal_energy needs 0 <= from <= to");
  const double horizon = path.horizon();
  const double slack = 1e-9 * std::max(1.0, horizon);
  require(to <= horizon + slack, "signal_energy interval extends past the simulated grid");
  const auto first = static_cast<std::size_t>(std::llround(from / path.dt)) + 1;
  const auto last = std::min(static_cast<std::size_t>(std::llround(to / path.dt)), path.n_points - 1);
  double energy = 0.0;
  for (std::size_t k = first; k <= last; ++k) {
    const double a = path.drift(0, k);
    energy += 0.5 * a * a * path.dt;
  }
  return energy;
}

}  // namespace qdetect
