#pragma once

// Fused Monte Carlo inner loops.  Each path is simulated and consumed on the
// fly, never materialized.  Two kernels live here:
//
//   detection  - Euler-Maruyama observations fed straight into the multi-chart
//                CUSUM, one path per lane, lanes refilled as paths stop;
//   reflected  - independent reflected drifted Brownian motions until the
//                first of them reaches its threshold.
//
// The scalar versions are the reference.  The AVX2 / AVX-512 versions replay the same
// floating-point operation sequence lane-wise and must agree bit for bit; the
// detection kernel must also agree bit for bit with simulate() + run_detector().

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "qdetect/cusum.hpp"
#include "qdetect/sde_sim.hpp"

namespace qdetect::simd {

enum class Isa { scalar, avx2, avx512 };

// Best variant the CPU supports.  QDETECT_SIMD=scalar|avx2|avx512 caps the
// choice (an unsupported request falls back to the next one down).
Isa active_isa();
bool isa_available(Isa isa);
std::string_view isa_name(Isa isa);

// ---------------------------------------------------------------------------

struct DetectionBatch {
  std::size_t n_sensors = 0;
  bool linear = false;  // linear state-space drift, else constant
  double param = 1.0;   // mu or r
  std::vector<double> c;
  std::vector<double> h;
  std::vector<std::uint64_t> change_idx;  // drift active once step > change_idx
  double dt = 0.0;
  std::uint64_t max_steps = 0;
  std::uint64_t origin_index = 0;  // delay clock starts after this step
  std::uint64_t seed = 0;
};

struct DetectionOutcome {
  std::uint64_t steps = 0;
  double energy = 0.0;
  double delay_energy = 0.0;
  std::uint32_t firing = 0;
  bool stopped = false;
};

// Rejects custom drifts (they need the full path history).
DetectionBatch make_detection_batch(const SensorSystemSpec& spec, const ChangePointVector& taus,
                                    const ThresholdVector& hbar, double dt, double horizon,
                                    double clock_origin, std::uint64_t seed);

// Paths first_path .. first_path + count - 1, written to out[0 .. count).
void detect(const DetectionBatch& batch, std::uint32_t first_path, std::size_t count, DetectionOutcome* out,
            Isa isa);
void detect(const DetectionBatch& batch, std::uint32_t first_path, std::size_t count, DetectionOutcome* out);

// ---------------------------------------------------------------------------

struct ReflectedBatch {
  std::size_t n_sensors = 0;
  std::vector<double> drift;  // S_i / c_i^2
  std::vector<double> sigma;  // sqrt(2) / |c_i|
  std::vector<double> h;
  double dt = 0.0;
  std::uint64_t max_steps = 0;
  std::uint64_t seed = 0;
  int depth = 12;  // dyadic refinement depth for crossing times
  // false: X <- |X + dX| with crossings checked at grid times only.
  bool exact_bridge = true;
};

struct ReflectedOutcome {
  double time = 0.0;  // first passage of any sensor (max time if not stopped)
  bool stopped = false;
};

void reflected(const ReflectedBatch& batch, std::uint32_t first_path, std::size_t count,
               ReflectedOutcome* out, Isa isa);
void reflected(const ReflectedBatch& batch, std::uint32_t first_path, std::size_t count,
               ReflectedOutcome* out);

namespace detail {

void detect_scalar(const DetectionBatch&, std::uint32_t, std::size_t, DetectionOutcome*);
void detect_avx2(const DetectionBatch&, std::uint32_t, std::size_t, DetectionOutcome*);
void detect_avx512(const DetectionBatch&, std::uint32_t, std::size_t, DetectionOutcome*);
void reflected_scalar(const ReflectedBatch&, std::uint32_t, std::size_t, ReflectedOutcome*);
void reflected_avx2(const ReflectedBatch&, std::uint32_t, std::size_t, ReflectedOutcome*);

// Exponent 2 (h - a)(h - b) / (sigma^2 d) above which a bridge crossing is
// ignored (probability below 1e-15).
inline constexpr double kCrossingCutoff = 34.538776394910684;

// First crossing time in (t0, t0 + dt] of the bridge from a to b, if any.
// Shared by both variants so that refinement is identical.
bool refine_crossing(const ReflectedBatch& batch, std::size_t sensor, std::uint32_t path, std::uint64_t step,
                     double a, double b, double* time);

// Scalar firing decision shared by both variants: argmax of y_i / h_i over
// the sensors at or above threshold, lowest index on ties.
std::uint32_t firing_sensor(const double* y, const double* h, std::size_t n, std::size_t stride);

[[noreturn]] void throw_blowup(std::uint64_t step, std::size_t sensor);
[[noreturn]] void throw_overflow(std::uint64_t step, std::size_t sensor);

}  // namespace detail

}  // namespace qdetect::simd
