#pragma once

// Counter-based random streams.
//
// Every random number in the toolkit is a pure function of (seed, path, step,
// group): a Philox4x32-10 block keyed by the seed and counted by the other
// three.  The scalar routines below are the reference; the SIMD kernels in
// src/simd replay the exact same operation sequence lane-wise so that both
// produce bit-identical deviates.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>

namespace qdetect::rng {

using Block = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

constexpr Block philox4x32_10(Block ctr, Key key) noexcept {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kPhiloxM0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kPhiloxM1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

constexpr Key key_from_seed(std::uint64_t seed) noexcept {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

// Stream tags occupy the top byte of the fourth counter word.
enum class Stream : std::uint32_t {
  observation_noise = 0x01,
  reflected_walk = 0x02,
  custom_drift_check = 0x03,
};

constexpr Block counter(std::uint64_t step, std::uint32_t path, std::uint32_t group,
                        Stream stream) noexcept {
  return {static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32), path,
          (static_cast<std::uint32_t>(stream) << 24) | (group & 0x00FFFFFFu)};
}

// Open-interval uniform (w + 1/2) / 2^32, exact in double.
constexpr double to_unit(std::uint32_t w) noexcept {
  return (static_cast<double>(w) + 0.5) * 0x1.0p-32;
}

// ---------------------------------------------------------------------------
// Portable elementary functions.  Only the operations +, -, *, /, sqrt and fma
// are used so that the vector kernels can mirror them exactly.

namespace detail {

inline constexpr double kLn2Hi = 6.93147180369123816490e-01;
inline constexpr double kLn2Lo = 1.90821492927058770002e-10;
inline constexpr double kLg1 = 6.666666666666735130e-01;
inline constexpr double kLg2 = 3.999999999940941908e-01;
inline constexpr double kLg3 = 2.857142874366239149e-01;
inline constexpr double kLg4 = 2.222219843214978396e-01;
inline constexpr double kLg5 = 1.818357216161805012e-01;
inline constexpr double kLg6 = 1.531383769920937332e-01;
inline constexpr double kLg7 = 1.479819860511658591e-01;

inline constexpr double kTwoPi = 6.28318530717958647692;

// Taylor coefficients, adequate for |x| <= pi/4.
inline constexpr double kS3 = -1.0 / 6.0;
inline constexpr double kS5 = 1.0 / 120.0;
inline constexpr double kS7 = -1.0 / 5040.0;
inline constexpr double kS9 = 1.0 / 362880.0;
inline constexpr double kS11 = -1.0 / 39916800.0;
inline constexpr double kS13 = 1.0 / 6227020800.0;
inline constexpr double kS15 = -1.0 / 1307674368000.0;
inline constexpr double kC2 = -1.0 / 2.0;
inline constexpr double kC4 = 1.0 / 24.0;
inline constexpr double kC6 = -1.0 / 720.0;
inline constexpr double kC8 = 1.0 / 40320.0;
inline constexpr double kC10 = -1.0 / 3628800.0;
inline constexpr double kC12 = 1.0 / 479001600.0;
inline constexpr double kC14 = -1.0 / 87178291200.0;
inline constexpr double kC16 = 1.0 / 20922789888000.0;

}  // namespace detail

// Natural log for positive normal doubles (fdlibm reduction).
inline double portable_log(double x) noexcept {
  using namespace detail;
  std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
  // Shift the mantissa into [sqrt(1/2), sqrt(2)).
  bits += 0x3ff0000000000000ull - 0x3fe6a09e00000000ull;
  const auto k = static_cast<std::int64_t>(bits >> 52) - 0x3ff;
  bits = (bits & 0x000fffffffffffffull) + 0x3fe6a09e00000000ull;
  const double m = std::bit_cast<double>(bits);
  const double f = m - 1.0;
  const double hfsq = 0.5 * f * f;
  const double s = f / (2.0 + f);
  const double z = s * s;
  const double w = z * z;
  const double t1 = w * std::fma(w, std::fma(w, kLg6, kLg4), kLg2);
  const double t2 = z * std::fma(w, std::fma(w, std::fma(w, kLg7, kLg5), kLg3), kLg1);
  const double r = t2 + t1;
  const double dk = static_cast<double>(k);
  return s * (hfsq + r) + dk * kLn2Lo - hfsq + f + dk * kLn2Hi;
}

struct SinCos {
  double sin;
  double cos;
};

// sin and cos of 2*pi*u for u in [0, 1].
inline SinCos sincos_2pi(double u) noexcept {
  using namespace detail;
  const double q = std::nearbyint(4.0 * u);
  const double r = u - 0.25 * q;  // exact, |r| <= 1/8
  const double x = kTwoPi * r;
  const double x2 = x * x;
  double ps = std::fma(x2, kS15, kS13);
  ps = std::fma(x2, ps, kS11);
  ps = std::fma(x2, ps, kS9);
  ps = std::fma(x2, ps, kS7);
  ps = std::fma(x2, ps, kS5);
  ps = std::fma(x2, ps, kS3);
  const double s = std::fma(x * x2, ps, x);
  double pc = std::fma(x2, kC16, kC14);
  pc = std::fma(x2, pc, kC12);
  pc = std::fma(x2, pc, kC10);
  pc = std::fma(x2, pc, kC8);
  pc = std::fma(x2, pc, kC6);
  pc = std::fma(x2, pc, kC4);
  pc = std::fma(x2, pc, kC2);
  const double c = std::fma(x2, pc, 1.0);
  switch (static_cast<int>(q) & 3) {
    case 0: return {s, c};
    case 1: return {c, -s};
    case 2: return {-s, -c};
    default: return {-c, s};
  }
}

struct NormalPair {
  double a;
  double b;
};

// Box-Muller on two raw 32-bit words.
inline NormalPair box_muller(std::uint32_t w0, std::uint32_t w1) noexcept {
  const double radius = std::sqrt(-2.0 * portable_log(to_unit(w0)));
  const SinCos sc = sincos_2pi(to_unit(w1));
  return {radius * sc.cos, radius * sc.sin};
}

// Four standard normals from one Philox block.
inline std::array<double, 4> normals4(const Block& block) noexcept {
  const NormalPair p = box_muller(block[0], block[1]);
  const NormalPair q = box_muller(block[2], block[3]);
  return {p.a, p.b, q.a, q.b};
}

}  // namespace qdetect::rng
