#include <cmath>
#include <numbers>

#include "doctest.h"
#include "qdetect/calibrate.hpp"
#include "qdetect/errors.hpp"

using namespace qdetect;

namespace {

double g(double nu) { return std::expm1(nu) - nu; }

}  // namespace

TEST_CASE("solve_g on exact targets") {
  CHECK(solve_g(std::numbers::e - 2.0) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(solve_g(std::exp(3.0) - 4.0) == doctest::Approx(3.0).epsilon(1e-13));
  CHECK_THROWS_AS(solve_g(0.0), PreconditionError);
  CHECK_THROWS_AS(solve_g(-1.0), PreconditionError);
}

TEST_CASE("solve_g against bisection") {
  double lo = 0.0, hi = 20.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) < 1000.0 ? lo : hi) = mid;
  }
  const double nu = solve_g(1000.0);
  CHECK(nu == doctest::Approx(lo).epsilon(1e-13));
  CHECK(nu > std::log(1000.0));
  CHECK(std::abs(g(nu) - 1000.0) < 1e-10 * 1000.0);
}

TEST_CASE("solve_g residual across targets") {
  // absolute 1e-10 below one and relative above: past 1e6 a double cannot
  // represent g(nu) to an absolute 1e-10
  for (double t = 1e-3; t <= 1e12; t *= 3.7) {
    const double nu = solve_g(t);
    CAPTURE(t);
    CHECK(nu > 0.0);
    CHECK(std::abs(g(nu) - t) < 1e-10 * std::max(1.0, t));
  }
}

TEST_CASE("one sensor is exactly optimal") {
  const auto r = calibrate_symmetric(1, 500.0);
  CHECK(r.hbar[0] == doctest::Approx(r.nu_star).epsilon(1e-9));
  CHECK(std::abs(r.gap) < 1e-6);
}

TEST_CASE("symmetric pair at gamma = 1e4") {
  const double gamma = 1e4;
  const auto r = calibrate_symmetric(2, gamma);
  CHECK(r.regime == Regime::symmetric);
  CHECK(r.hbar[0] == r.hbar[1]);
  CHECK(std::abs(r.delays[0] - (std::log(gamma) + std::log(2.0) - 1.0)) <= 0.15);
  CHECK(r.gap <= std::log(2.0) + 0.1);
  CHECK(r.gap >= -1e-8);
  CHECK(std::abs(g(r.nu_star) - gamma) < 1e-10 * gamma);
  CHECK(r.lower_bound == doctest::Approx(g(-r.nu_star)));
  // fixed point: recompute the false-alarm value independently of the solver
  const auto fa = f_origin(SignVector::all_minus(2), r.hbar, r.strengths, 1e-6);
  CHECK(std::abs(fa.value - gamma) / gamma < 1e-6);
}

TEST_CASE("asymmetric calibration honours the equalizer and false-alarm equations") {
  for (const auto& cs : {SignalStrengths({1.0, 2.0}), SignalStrengths({1.0, 1.0, 1.5})}) {
    const double gamma = 300.0;
    const auto r = calibrate_asymmetric(cs, gamma);
    const double cn2 = cs.squared(cs.size() - 1);
    for (std::size_t i = 0; i < cs.size(); ++i) {
      CHECK(cs.squared(i) * (r.hbar[i] - 1.0) == doctest::Approx(r.v).epsilon(1e-12));
    }
    CHECK(std::abs(g(r.nu_star) - cn2 * gamma) < 1e-10 * cn2 * gamma);
    CHECK(r.false_alarm_rel_residual < 1e-6);
    const auto fa = f_origin(SignVector::all_minus(cs.size()), r.hbar, cs, 1e-6);
    CHECK(std::abs(fa.value - cn2 * gamma) / (cn2 * gamma) < 1e-6);
    CHECK(r.j_kl >= r.lower_bound - 1e-6);
    CHECK(r.gap == doctest::Approx(r.j_kl - r.lower_bound));
  }
}

TEST_CASE("equalizer thresholds by hand") {
  // c = (1, 2), h_1 = 5: v = 4, h_2 = 1 + 4 / 4 = 2
  const SignalStrengths cs({1.0, 2.0});
  const double v = cs.squared(0) * (5.0 - 1.0);
  CHECK(1.0 + v / cs.squared(1) == 2.0);
}

TEST_CASE("equalizer residuals") {
  SUBCASE("symmetric system") {
    for (double r : equalizer_residual(ThresholdVector({6.0, 6.0, 6.0}), SignalStrengths({1.0, 1.0, 1.0}), 1e-9)) {
      CHECK(std::abs(r) < 1e-8);
    }
  }
  SUBCASE("deliberately unbalanced") {
    const auto r = equalizer_residual(ThresholdVector({8.0, 4.0}), SignalStrengths({1.0, 1.0}), 1e-8);
    REQUIRE(r.size() == 1);
    CHECK(std::abs(std::abs(r[0]) - 4.0) <= 0.5);
  }
  SUBCASE("residual shrinks as gamma grows") {
    const SignalStrengths cs({1.0, 1.2});
    const auto lo = calibrate_asymmetric(cs, 1e2);
    const auto hi = calibrate_asymmetric(cs, 1e4);
    const double r_lo = std::abs(equalizer_residual(lo.hbar, cs, 1e-8)[0]);
    const double r_hi = std::abs(equalizer_residual(hi.hbar, cs, 1e-8)[0]);
    CHECK(r_hi < r_lo);
  }
}

TEST_CASE("symmetric gap across a sweep") {
  double prev = 0.0;
  for (double gamma : {1e2, 1e3, 1e4, 1e5}) {
    const auto r = calibrate_symmetric(2, gamma);
    CAPTURE(gamma);
    CHECK(r.gap >= -1e-8);
    CHECK(r.gap <= std::log(2.0) + 0.5);
    if (prev > 0.0) CHECK(r.gap <= prev + 0.1);
    prev = r.gap;
    if (gamma == 1e5) CHECK(r.gap <= std::log(2.0) + 0.1);
  }
}
