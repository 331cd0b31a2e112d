#include "qdetect/cusum.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qdetect/errors.hpp"

namespace qdetect {

CusumState update(const CusumState& state, std::span<const Increment> increments, double dt) {
  require(dt > 0.0, "dt must be positive");
  require(increments.size() == state.size(), "increment count must equal the number of sensors");
  CusumState next = state;
  for (std::size_t i = 0; i < increments.size(); ++i) {
    const Increment& inc = increments[i];
    const double u = state.u[i] + (inc.alpha * inc.dz - 0.5 * inc.alpha * inc.alpha * dt);
    if (!std::isfinite(u)) {
      std::ostringstream msg;
      msg << "numeric overflow in CUSUM statistic of sensor " << (i + 1) << " at t = " << state.t;
      throw NumericError(msg.str());
    }
    next.u[i] = u;
    next.m[i] = std::min(state.m[i], u);
    next.y[i] = u - next.m[i];
  }
  next.t = state.t + dt;
  return next;
}

ThresholdVector::ThresholdVector(std::vector<double> hs) : hs_(std::move(hs)) {
  require(!hs_.empty(), "threshold vector is empty");
  for (double h : hs_) require(h > 0.0 && std::isfinite(h), "thresholds must be positive and finite");
}

MultiChartDetector::MultiChartDetector(SensorSystemSpec spec, ThresholdVector hbar, double dt,
                                       double clock_origin)
    : spec_(std::move(spec)),
      hbar_(std::move(hbar)),
      dt_(dt),
      origin_index_(change_index(clock_origin, dt)),
      keep_history_(std::holds_alternative<CustomDrift>(spec_.drift)),
      history_(spec_.n_sensors(), 0.0),
      state_(CusumState::zero(spec_.n_sensors())),
      scratch_(spec_.n_sensors()) {
  require(dt > 0.0, "dt must be positive");
  require(hbar_.size() == spec_.n_sensors(), "threshold vector length must equal the number of sensors");
}

std::optional<StopReport> MultiChartDetector::feed(double t_end, std::span<const double> dz) {
  require(std::abs(t_end - (state_.t + dt_)) <= 1e-6 * std::max(1.0, dt_),
          "feed time is not one grid step after the detector clock");
  return feed(dz);
}

std::optional<StopReport> MultiChartDetector::feed(std::span<const double> dz) {
  const std::size_t n = spec_.n_sensors();
  require(dz.size() == n, "increment count must equal the number of sensors");
  const std::size_t last = history_.size() - n;
  level_scratch_.resize(n);
  for (std::size_t i = 0; i < n; ++i) level_scratch_[i] = history_[last + i] + dz[i];
  return step(dz, level_scratch_);
}

std::optional<StopReport> MultiChartDetector::feed_levels(std::span<const double> z_next) {
  const std::size_t n = spec_.n_sensors();
  require(z_next.size() == n, "level count must equal the number of sensors");
  const std::size_t last = history_.size() - n;
  std::vector<double> dz(n);
  for (std::size_t i = 0; i < n; ++i) dz[i] = z_next[i] - history_[last + i];
  return step(dz, z_next);
}

std::optional<StopReport> MultiChartDetector::step(std::span<const double> dz, std::span<const double> z_next) {
  require(!stopped_, "detector has already stopped");
  const std::size_t n = spec_.n_sensors();

  const std::size_t rows = history_.size() / n;
  const PathView view{history_.data(), n, rows};
  for (std::size_t i = 0; i < n; ++i) {
    const double a = model_drift(spec_, i, state_.t, view);
    scratch_[i] = {dz[i], a};
  }
  const double a1 = scratch_[0].alpha;
  state_ = update(state_, scratch_, dt_);
  energy_ += 0.5 * a1 * a1 * dt_;
  ++steps_;
  if (steps_ == origin_index_) origin_energy_ = energy_;

  if (keep_history_) {
    history_.insert(history_.end(), z_next.begin(), z_next.end());
  } else {
    std::copy(z_next.begin(), z_next.end(), history_.begin());
  }

  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (state_.y[i] >= hbar_[i]) {
      const double ratio = state_.y[i] / hbar_[i];
      if (ratio > best) {
        best = ratio;
        firing_ = i;
      }
    }
  }
  if (firing_) {
    stopped_ = true;
    return report();
  }
  return std::nullopt;
}

StopReport MultiChartDetector::report() const {
  StopReport r;
  r.stopped = stopped_;
  r.steps = steps_;
  r.energy = energy_;
  r.delay_energy = steps_ > origin_index_ ? energy_ - origin_energy_ : 0.0;
  r.y_at_stop = state_.y;
  if (stopped_) {
    r.stop_time = state_.t;
    r.firing_sensor = firing_;
  }
  return r;
}

namespace {

void check_dimensions(const PathBundle& path, const SensorSystemSpec& spec) {
  require(path.n_sensors == spec.n_sensors(), "path and system have different sensor counts");
  require(path.n_points >= 1, "empty path");
}

}  // namespace

StopReport run_detector(const PathBundle& path, const SensorSystemSpec& spec, const ThresholdVector& hbar,
                        double clock_origin) {
  check_dimensions(path, spec);
  const std::size_t n = spec.n_sensors();
  MultiChartDetector detector(spec, hbar, path.dt, clock_origin);
  for (std::size_t k = 1; k < path.n_points; ++k) {
    const std::span<const double> levels(path.samples.data() + k * n, n);
    if (auto stop = detector.feed_levels(levels)) return *stop;
  }
  return detector.report();
}

StopReport single_cusum(const PathBundle& path, const SensorSystemSpec& spec, std::size_t sensor, double nu,
                        double clock_origin) {
  check_dimensions(path, spec);
  require(sensor < spec.n_sensors(), "sensor index out of range");
  require(nu >= 0.0, "CUSUM threshold must be nonnegative");

  StopReport r;
  r.y_at_stop = {0.0};
  if (nu == 0.0) {
    r.stopped = true;
    r.stop_time = 0.0;
    r.firing_sensor = sensor;
    return r;
  }
  const std::uint64_t origin = change_index(clock_origin, path.dt);
  const double dt = path.dt;
  CusumState state = CusumState::zero(1);
  double origin_energy = 0.0;
  for (std::size_t k = 1; k < path.n_points; ++k) {
    const PathView view = path.view(k);
    const double t_prev = dt * static_cast<double>(k - 1);
    const double a = model_drift(spec, sensor, t_prev, view);
    const double a1 = sensor == 0 ? a : model_drift(spec, 0, t_prev, view);
    const Increment inc{path.z(sensor, k) - path.z(sensor, k - 1), a};
    state = update(state, std::span<const Increment>(&inc, 1), dt);
    r.energy += 0.5 * a1 * a1 * dt;
    r.steps = k;
    if (k == origin) origin_energy = r.energy;
    if (state.y[0] >= nu) {
      r.stopped = true;
      r.stop_time = state.t;
      r.firing_sensor = sensor;
      break;
    }
  }
  r.y_at_stop = state.y;
  r.delay_energy = r.steps > origin ? r.energy - origin_energy : 0.0;
  return r;
}

}  // namespace qdetect
