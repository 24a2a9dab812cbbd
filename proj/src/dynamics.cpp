#include "cav/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cav::dyn {

double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  a = std::fmod(a, 2.0 * pi);
  if (a <= -pi) a += 2.0 * pi;
  if (a > pi) a -= 2.0 * pi;
  return a;
}

VehicleState step_bicycle(const VehicleState& s, const ControlInput& u, double dt,
                          const VehicleKind& kind) {
  if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.v) ||
      !std::isfinite(s.psi) || !std::isfinite(u.accel) || !std::isfinite(u.steer))
    throw std::invalid_argument("step_bicycle: non-finite input");
  if (!(dt > 0.0)) throw std::invalid_argument("step_bicycle: dt must be positive");

  const double accel = std::clamp(u.accel, kind.accel_min, kind.accel_max);
  const double steer = std::clamp(u.steer, -kind.steer_max, kind.steer_max);
  const double beta = std::atan(kind.l_r * std::tan(steer) / (kind.l_f + kind.l_r));

  VehicleState n;
  n.x = s.x + s.v * std::cos(s.psi + beta) * dt;
  n.y = s.y + s.v * std::sin(s.psi + beta) * dt;
  n.psi = wrap_angle(s.psi + (s.v / kind.l_r) * std::sin(beta) * dt);
  n.v = std::clamp(s.v + accel * dt, 0.0, kind.v_max);
  return n;
}

double pedal_to_accel(double throttle, double brake, double v, const VehicleKind& kind) {
  if (throttle > 0.0 && brake > 0.0)
    throw std::invalid_argument("pedal_to_accel: both pedals active");
  throttle = std::clamp(throttle, 0.0, 1.0);
  brake = std::clamp(brake, 0.0, 1.0);
  double a = throttle * kind.accel_max - brake * std::abs(kind.accel_min) -
             kind.c_drag * v * v;
  return std::clamp(a, kind.accel_min, kind.accel_max);
}

}  // namespace cav::dyn
