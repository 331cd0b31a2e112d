#include <cmath>
#include <cstring>

#include "doctest.h"
#include "qdetect/cusum.hpp"
#include "qdetect/errors.hpp"
#include "qdetect/simd/batch.hpp"

using namespace qdetect;
using qdetect::simd::Isa;

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

void check_against_reference(const SensorSystemSpec& spec, const ChangePointVector& taus, const ThresholdVector& h,
                             double dt, double horizon, double origin, std::uint64_t seed, std::uint32_t paths) {
  const auto batch = simd::make_detection_batch(spec, taus, h, dt, horizon, origin, seed);
  std::vector<simd::DetectionOutcome> out(paths);
  simd::detect(batch, 0, paths, out.data(), Isa::scalar);
  for (std::uint32_t p = 0; p < paths; ++p) {
    const auto path = simulate(spec, taus, horizon, dt, seed, p);
    const auto rep = run_detector(path, spec, h, origin);
    CAPTURE(p);
    CHECK(rep.stopped == out[p].stopped);
    CHECK(rep.steps == out[p].steps);
    CHECK(same_bits(rep.energy, out[p].energy));
    CHECK(same_bits(rep.delay_energy, out[p].delay_energy));
    if (rep.stopped) CHECK(*rep.firing_sensor == out[p].firing);
  }
}

}  // namespace

TEST_CASE("scalar detection batch replays simulate + run_detector") {
  check_against_reference({SignalStrengths({1.0, 1.0}), ConstantDrift{1.0}}, ChangePointVector({0.3, kNoChange}),
                          ThresholdVector({2.0, 2.0}), 1e-2, 20.0, 0.3, 17, 40);
  check_against_reference({SignalStrengths({1.0, -2.0, 2.0}), ConstantDrift{0.7}},
                          ChangePointVector::none(3), ThresholdVector({1.5, 0.5, 0.6}), 5e-3, 10.0, 0.0, 3, 30);
  check_against_reference({SignalStrengths({1.0, 1.5}), LinearStateSpaceDrift{0.5}}, ChangePointVector({0.0, 0.2}),
                          ThresholdVector({1.0, 1.0}), 1e-2, 30.0, 0.0, 99, 30);
  // five sensors spill into a second noise group
  check_against_reference({SignalStrengths({1, 1, 1, 1, 2}), ConstantDrift{1.0}},
                          ChangePointVector({kNoChange, kNoChange, kNoChange, 0.1, kNoChange}),
                          ThresholdVector::uniform(5, 2.0), 1e-2, 5.0, 0.1, 5, 20);
}

TEST_CASE("vector detection batches are bit-identical to scalar") {
  for (Isa isa : {Isa::avx2, Isa::avx512}) {
  if (!simd::isa_available(isa)) continue;
  CAPTURE(simd::isa_name(isa));
  const std::vector<SensorSystemSpec> specs = {
      {SignalStrengths({1.0, 1.0}), ConstantDrift{1.0}},
      {SignalStrengths({1, 1, 2, 2, -4}), ConstantDrift{-0.8}},
      {SignalStrengths({1.0, 2.0}), LinearStateSpaceDrift{0.3}},
  };
  for (const auto& spec : specs) {
    const std::size_t n = spec.n_sensors();
    std::vector<double> taus(n, kNoChange);
    taus[0] = 0.5;
    const auto batch = simd::make_detection_batch(spec, ChangePointVector(taus), ThresholdVector::uniform(n, 2.5),
                                                  1e-2, 8.0, 0.5, 2024);
    const std::size_t paths = 203;  // not a multiple of the lane count
    std::vector<simd::DetectionOutcome> a(paths), b(paths);
    simd::detect(batch, 11, paths, a.data(), Isa::scalar);
    simd::detect(batch, 11, paths, b.data(), isa);
    for (std::size_t p = 0; p < paths; ++p) {
      CAPTURE(p);
      CHECK(a[p].stopped == b[p].stopped);
      CHECK(a[p].steps == b[p].steps);
      CHECK(a[p].firing == b[p].firing);
      CHECK(same_bits(a[p].energy, b[p].energy));
      CHECK(same_bits(a[p].delay_energy, b[p].delay_energy));
    }
  }
  }
}

TEST_CASE("avx2 reflected batch is bit-identical to scalar") {
  if (!simd::isa_available(Isa::avx2)) return;
  simd::ReflectedBatch rb;
  rb.n_sensors = 2;
  rb.drift = {1.0, -0.25};
  rb.sigma = {std::sqrt(2.0), std::sqrt(2.0) / 2.0};
  rb.h = {4.0, 3.0};
  rb.dt = 0.05;
  rb.max_steps = 100000;
  rb.seed = 7;
  const std::size_t paths = 301;
  std::vector<simd::ReflectedOutcome> a(paths), b(paths);
  simd::reflected(rb, 3, paths, a.data(), Isa::scalar);
  simd::reflected(rb, 3, paths, b.data(), Isa::avx2);
  for (std::size_t p = 0; p < paths; ++p) {
    CAPTURE(p);
    CHECK(a[p].stopped == b[p].stopped);
    CHECK(same_bits(a[p].time, b[p].time));
  }
}

TEST_CASE("vector normals match the scalar generator") {
  // indirect: under a linear drift the energy path depends on every deviate
  SensorSystemSpec spec{SignalStrengths({1.0}), LinearStateSpaceDrift{0.1}};
  const auto batch = simd::make_detection_batch(spec, ChangePointVector({0.0}), ThresholdVector({1e9}), 1e-3, 2.0,
                                                0.0, 1);
  std::vector<simd::DetectionOutcome> a(19), b(19);
  simd::detect(batch, 0, 19, a.data(), Isa::scalar);
  for (Isa isa : {Isa::avx2, Isa::avx512}) {
    if (!simd::isa_available(isa)) continue;
    simd::detect(batch, 0, 19, b.data(), isa);
    for (int p = 0; p < 19; ++p) CHECK(same_bits(a[p].energy, b[p].energy));
  }
}

TEST_CASE("batch rejects custom drift") {
  SensorSystemSpec spec{SignalStrengths({1.0}), CustomDrift{[](double, const PathView&, std::size_t) { return 1.0; }}};
  CHECK_THROWS_AS(simd::make_detection_batch(spec, ChangePointVector({0.0}), ThresholdVector({1.0}), 0.1, 1.0, 0.0, 1),
                  PreconditionError);
}
