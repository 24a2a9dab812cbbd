#pragma once

namespace cav::dyn {

// Bicycle-model state, c.g. referenced.
struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;    // >= 0
  double psi = 0.0;  // (-pi, pi]
};

struct ControlInput {
  double accel = 0.0;
  double steer = 0.0;
};

struct VehicleKind {
  double length;
  double width;
  double l_f;
  double l_r;
  double accel_max;
  double accel_min;  // most negative = hardest brake
  double steer_max;
  double v_max;
  double c_drag;

  static VehicleKind sedan() { return {4.8, 2.0, 1.4, 1.4, 4.0, -8.0, 0.6, 30.0, 0.004}; }
};

double wrap_angle(double a);  // to (-pi, pi]

// Forward-Euler kinematic bicycle step. Throws std::invalid_argument on
// non-finite input or dt <= 0; control is clamped to kind bounds.
VehicleState step_bicycle(const VehicleState& s, const ControlInput& u, double dt,
                          const VehicleKind& kind);

// throttle*accel_max - brake*|accel_min| - c_drag*v^2, clamped to the accel
// bounds. Throws if both pedals are active.
double pedal_to_accel(double throttle, double brake, double v, const VehicleKind& kind);

}  // namespace cav::dyn
