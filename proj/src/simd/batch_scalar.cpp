#include <algorithm>
#include <cmath>
#include <sstream>

#include "qdetect/errors.hpp"
#include "qdetect/rng.hpp"
#include "qdetect/simd/batch.hpp"

namespace qdetect::simd {

DetectionBatch make_detection_batch(const SensorSystemSpec& spec, const ChangePointVector& taus,
                                    const ThresholdVector& hbar, double dt, double horizon,
                                    double clock_origin, std::uint64_t seed) {
  require(dt > 0.0 && std::isfinite(dt), "dt must be positive");
  require(horizon >= dt, "horizon must be at least dt");
  const std::size_t n = spec.n_sensors();
  require(taus.size() == n && hbar.size() == n, "dimension mismatch between system, change points and thresholds");
  DetectionBatch b;
  b.n_sensors = n;
  if (const auto* c = std::get_if<ConstantDrift>(&spec.drift)) {
    require(c->mu != 0.0 && std::isfinite(c->mu), "constant drift needs mu != 0");
    b.linear = false;
    b.param = c->mu;
  } else if (const auto* l = std::get_if<LinearStateSpaceDrift>(&spec.drift)) {
    require(l->r > 0.0 && std::isfinite(l->r), "linear state-space drift needs r > 0");
    b.linear = true;
    b.param = l->r;
  } else {
    throw PreconditionError("batch kernels need a registry drift (constant or linear)");
  }
  b.c = spec.strengths.values();
  b.h = hbar.values();
  b.change_idx.resize(n);
  // Clamped so that signed 64-bit lane compares stay valid.
  constexpr auto kNever = static_cast<std::uint64_t>(INT64_MAX);
  for (std::size_t i = 0; i < n; ++i) b.change_idx[i] = std::min(change_index(taus[i], dt), kNever);
  b.dt = dt;
  b.max_steps = static_cast<std::uint64_t>(std::floor(horizon / dt + 1e-9));
  b.origin_index = change_index(clock_origin, dt);
  b.seed = seed;
  return b;
}

namespace detail {

void throw_blowup(std::uint64_t step, std::size_t sensor) {
  std::ostringstream msg;
  msg << "drift blowup at step " << step << " in sensor " << (sensor + 1);
  throw NumericError(msg.str());
}

void throw_overflow(std::uint64_t step, std::size_t sensor) {
  std::ostringstream msg;
  msg << "numeric overflow in CUSUM statistic of sensor " << (sensor + 1) << " at step " << step;
  throw NumericError(msg.str());
}

std::uint32_t firing_sensor(const double* y, const double* h, std::size_t n, std::size_t stride) {
  double best = -1.0;
  std::uint32_t arg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double yi = y[i * stride];
    if (yi >= h[i]) {
      const double ratio = yi / h[i];
      if (ratio > best) {
        best = ratio;
        arg = static_cast<std::uint32_t>(i);
      }
    }
  }
  return arg;
}

void detect_scalar(const DetectionBatch& b, std::uint32_t first_path, std::size_t count, DetectionOutcome* out) {
  const std::size_t n = b.n_sensors;
  const std::size_t groups = (n + 3) / 4;
  const auto key = rng::key_from_seed(b.seed);
  const double sqdt = std::sqrt(b.dt);
  std::vector<double> z(n), u(n), m(n), y(n), alpha(n), xi(groups * 4);
  std::vector<double> const_alpha(n);
  for (std::size_t i = 0; i < n; ++i) const_alpha[i] = b.param / b.c[i];

  for (std::size_t p = 0; p < count; ++p) {
    const std::uint32_t path = first_path + static_cast<std::uint32_t>(p);
    std::fill(z.begin(), z.end(), 0.0);
    std::fill(u.begin(), u.end(), 0.0);
    std::fill(m.begin(), m.end(), 0.0);
    DetectionOutcome res;
    double origin_energy = 0.0;
    for (std::uint64_t k = 1; k <= b.max_steps; ++k) {
      if (b.linear) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum = sum + z[j];
        const double base = (-b.param) * sum;
        for (std::size_t i = 0; i < n; ++i) {
          alpha[i] = base / b.c[i];
          if (!std::isfinite(alpha[i])) throw_blowup(k, i);
        }
      } else {
        std::copy(const_alpha.begin(), const_alpha.end(), alpha.begin());
      }
      for (std::size_t g = 0; g < groups; ++g) {
        const auto block = rng::philox4x32_10(
            rng::counter(k, path, static_cast<std::uint32_t>(g), rng::Stream::observation_noise), key);
        const auto w = rng::normals4(block);
        std::copy(w.begin(), w.end(), xi.begin() + static_cast<std::ptrdiff_t>(4 * g));
      }
      bool crossed = false;
      for (std::size_t i = 0; i < n; ++i) {
        const double a = alpha[i];
        const double drift_term = k > b.change_idx[i] ? a * b.dt : 0.0;
        const double dz = drift_term + sqdt * xi[i];
        const double znew = z[i] + dz;
        const double dzobs = znew - z[i];
        z[i] = znew;
        u[i] = u[i] + (a * dzobs - 0.5 * a * a * b.dt);
        if (!std::isfinite(u[i])) throw_overflow(k, i);
        m[i] = u[i] < m[i] ? u[i] : m[i];
        y[i] = u[i] - m[i];
        crossed = crossed || y[i] >= b.h[i];
      }
      const double a1 = alpha[0];
      res.energy += 0.5 * a1 * a1 * b.dt;
      if (k == b.origin_index) origin_energy = res.energy;
      res.steps = k;
      if (crossed) {
        res.stopped = true;
        res.firing = firing_sensor(y.data(), b.h.data(), n, 1);
        break;
      }
    }
    res.delay_energy = res.steps > b.origin_index ? res.energy - origin_energy : 0.0;
    out[p] = res;
  }
}

// ---------------------------------------------------------------------------

namespace {

struct Node {
  const ReflectedBatch& b;
  std::size_t sensor;
  std::uint32_t path;
  std::uint64_t step;
  rng::Key key;

  double crossing_probability(double a, double b_end, double d) const {
    const double hh = b.h[sensor];
    if (a >= hh || b_end >= hh) return 1.0;
    const double s2 = b.sigma[sensor] * b.sigma[sensor];
    const double x = 2.0 * (hh - a) * (hh - b_end) / (s2 * d);
    return x > kCrossingCutoff ? 0.0 : std::exp(-x);
  }

  bool visit(std::uint32_t id, int depth, double t0, double d, double a, double b_end, double* time) const {
    const double p = crossing_probability(a, b_end, d);
    if (p <= 0.0) return false;
    const auto block = rng::philox4x32_10(
        rng::counter(step, path, static_cast<std::uint32_t>(sensor << 14) | id, rng::Stream::reflected_walk),
        key);
    if (depth == b.depth) {
      if (p >= 1.0 || rng::to_unit(block[2]) < p) {
        *time = t0 + 0.5 * d;
        return true;
      }
      return false;
    }
    const double xi = rng::box_muller(block[0], block[1]).a;
    const double mid = 0.5 * (a + b_end) + b.sigma[sensor] * std::sqrt(0.25 * d) * xi;
    const double half = 0.5 * d;
    if (visit(2 * id, depth + 1, t0, half, a, mid, time)) return true;
    return visit(2 * id + 1, depth + 1, t0 + half, half, mid, b_end, time);
  }
};

}  // namespace

bool refine_crossing(const ReflectedBatch& batch, std::size_t sensor, std::uint32_t path, std::uint64_t step,
                     double a, double b, double* time) {
  const Node node{batch, sensor, path, step, rng::key_from_seed(batch.seed)};
  const double t0 = batch.dt * static_cast<double>(step - 1);
  return node.visit(1, 0, t0, batch.dt, a, b, time);
}

void reflected_scalar(const ReflectedBatch& b, std::uint32_t first_path, std::size_t count,
                      ReflectedOutcome* out) {
  const std::size_t n = b.n_sensors;
  const auto key = rng::key_from_seed(b.seed);
  const double sqdt = std::sqrt(b.dt);
  std::vector<double> mdt(n), sd(n), two_var(n), inv_var(n);
  for (std::size_t i = 0; i < n; ++i) {
    mdt[i] = b.drift[i] * b.dt;
    sd[i] = b.sigma[i] * sqdt;
    two_var[i] = 2.0 * sd[i] * sd[i];
    inv_var[i] = 2.0 / (sd[i] * sd[i]);
  }
  std::vector<double> x(n);
  for (std::size_t p = 0; p < count; ++p) {
    const std::uint32_t path = first_path + static_cast<std::uint32_t>(p);
    std::fill(x.begin(), x.end(), 0.0);
    ReflectedOutcome res;
    res.time = b.dt * static_cast<double>(b.max_steps);
    for (std::uint64_t k = 1; k <= b.max_steps && !res.stopped; ++k) {
      double first = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto block = rng::philox4x32_10(
            rng::counter(k, path, static_cast<std::uint32_t>(i << 14), rng::Stream::reflected_walk), key);
        const double xi = rng::box_muller(block[0], block[1]).a;
        const double delta = mdt[i] + sd[i] * xi;
        const double a = x[i];
        double xn;
        if (b.exact_bridge) {
          const double lg = rng::portable_log(rng::to_unit(block[2]));
          const double low = 0.5 * (delta - std::sqrt(delta * delta - two_var[i] * lg));
          const double free_end = a + delta;
          const double reflected = delta - low;
          xn = free_end > reflected ? free_end : reflected;
          const double hh = b.h[i];
          const double expo = ((hh - a) * (hh - xn)) * inv_var[i];
          if (xn >= hh || expo < kCrossingCutoff) {
            double t;
            if (refine_crossing(b, i, path, k, a, xn, &t) && (!res.stopped || t < first)) {
              first = t;
              res.stopped = true;
            }
          }
        } else {
          xn = std::abs(a + delta);
          if (xn >= b.h[i] && !res.stopped) {
            first = b.dt * static_cast<double>(k);
            res.stopped = true;
          }
        }
        x[i] = xn;
      }
      if (res.stopped) res.time = first;
    }
    out[p] = res;
  }
}

}  // namespace detail

}  // namespace qdetect::simd
