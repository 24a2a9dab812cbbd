#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "cav/dynamics.hpp"
#include "cav/rng.hpp"
#include "doctest.h"

using namespace cav::dyn;
using cav::num::Rng;

static const VehicleKind kSedan = VehicleKind::sedan();

TEST_CASE("zero dynamics") {
  VehicleState s{0, 0, 0, 0};
  auto n = step_bicycle(s, {0, 0}, 0.1, kSedan);
  CHECK(n.x == 0.0);
  CHECK(n.y == 0.0);
  CHECK(n.v == 0.0);
  CHECK(n.psi == 0.0);
}

TEST_CASE("straight euler step") {
  auto n = step_bicycle({0, 0, 10, 0}, {0, 0}, 0.1, kSedan);
  CHECK(n.x == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(n.y == 0.0);
  CHECK(n.v == doctest::Approx(10.0));
  CHECK(n.psi == 0.0);

  n = step_bicycle({0, 0, 5, 0}, {2, 0}, 0.1, kSedan);
  CHECK(n.v == doctest::Approx(5.2).epsilon(1e-14));
  CHECK(n.x == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("speed clamping") {
  auto n = step_bicycle({0, 0, 0.1, 0}, {-8, 0}, 0.1, kSedan);
  CHECK(n.v == 0.0);
  n = step_bicycle({0, 0, 29.9, 0}, {4, 0}, 0.1, kSedan);
  CHECK(n.v == 30.0);
}

TEST_CASE("pedal map") {
  CHECK(pedal_to_accel(1, 0, 0, kSedan) == kSedan.accel_max);
  CHECK(pedal_to_accel(0, 1, 20, kSedan) == kSedan.accel_min);
  CHECK(pedal_to_accel(0.5, 0, 10, kSedan) == doctest::Approx(1.6).epsilon(1e-14));
  CHECK_THROWS_AS(pedal_to_accel(0.5, 0.5, 0, kSedan), std::invalid_argument);
}

TEST_CASE("non-finite input rejected") {
  CHECK_THROWS_AS(step_bicycle({NAN, 0, 0, 0}, {0, 0}, 0.1, kSedan), std::invalid_argument);
  CHECK_THROWS_AS(step_bicycle({0, 0, 1, 0}, {0, INFINITY}, 0.1, kSedan),
                  std::invalid_argument);
  CHECK_THROWS_AS(step_bicycle({0, 0, 1, 0}, {0, 0}, 0.0, kSedan), std::invalid_argument);
}

TEST_CASE("v never negative, heading preserved when straight") {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    VehicleState s{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(0, 30),
                   rng.uniform(-3.1, 3.1)};
    ControlInput u{rng.uniform(kSedan.accel_min, kSedan.accel_max),
                   rng.uniform(-kSedan.steer_max, kSedan.steer_max)};
    auto n = step_bicycle(s, u, 0.1, kSedan);
    CHECK(n.v >= 0.0);
    auto straight = step_bicycle(s, {u.accel, 0.0}, 0.1, kSedan);
    CHECK(straight.psi == s.psi);
    // displacement collinear with heading
    double dx = straight.x - s.x, dy = straight.y - s.y;
    CHECK(std::abs(dx * std::sin(s.psi) - dy * std::cos(s.psi)) <= 1e-12);
  }
}

TEST_CASE("steer mirror symmetry") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    double v0 = rng.uniform(0, 25);
    double steer = rng.uniform(0, kSedan.steer_max);
    double accel = rng.uniform(-2, 2);
    VehicleState a{0, 0, v0, 0}, b{0, 0, v0, 0};
    for (int t = 0; t < 20; ++t) {
      a = step_bicycle(a, {accel, steer}, 0.1, kSedan);
      b = step_bicycle(b, {accel, -steer}, 0.1, kSedan);
    }
    CHECK(a.x == b.x);
    CHECK(a.y == -b.y);
    CHECK(a.psi == -b.psi);
    CHECK(a.v == b.v);
  }
}

TEST_CASE("wrap_angle range") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    double w = wrap_angle(rng.uniform(-50, 50));
    CHECK(w > -3.14159265358979324);
    CHECK(w <= 3.14159265358979324);
  }
  CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(3 * M_PI) == doctest::Approx(M_PI));
}
