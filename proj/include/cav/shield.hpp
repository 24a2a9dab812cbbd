#pragma once
#include <array>
#include <optional>
#include <vector>

#include "cav/dynamics.hpp"
#include "cav/world.hpp"

namespace cav::shield {

struct ShieldConfig {
  double c1 = 0.6;        // reaction delay, s
  double c2 = 1.0;        // hard-braking coefficient
  double D = 3.0;         // buffer distance, m
  double gamma_cbf = 0.8;  // class-K slope, 1/s
  int horizon_check = 20;
  double keep_band = 0.5;  // accel authority of speed-hold actions, m/s^2
};

enum class Action {
  keep_lane_speed = 0,
  change_left,
  change_right,
  brake,
  throttle1,
  throttle2,
  throttle3,
};
constexpr int kNumActions = 7;
constexpr int kThrottleBins = 3;
const char* action_name(Action a);

struct SafeActionSet {
  std::vector<Action> actions;  // empty iff emergency
  bool emergency = false;
  std::array<bool, kNumActions> mask() const;
};

struct VehicleSnapshot {
  int id = -1;
  dyn::VehicleState state;
  double accel = 0.0;  // last applied, frozen during the check
  const dyn::VehicleKind* kind = nullptr;
  int lane = -1;
};

// Observation of one barrier target in the ego's corridor frame.
struct TargetObs {
  double ds_centers = 0.0;  // chain gap between centers, >0 front, <0 rear
  double v = 0.0;
  double accel = 0.0;
  const dyn::VehicleKind* kind = nullptr;
  bool front = true;
};

double safety_following_distance(double v, double v_f, const ShieldConfig& cfg,
                                 const dyn::VehicleKind& ego, const dyn::VehicleKind& front);
double safety_leading_distance(double v, double v_b, const ShieldConfig& cfg,
                               const dyn::VehicleKind& ego, const dyn::VehicleKind& back);

struct Barrier {
  double h = 0.0;
  double hdot_unc = 0.0;  // hdot at zero ego accel
  double dhdot_da = 0.0;  // hdot sensitivity to ego accel
};

Barrier barrier_values(double v_ego, const dyn::VehicleKind& ego_kind, const TargetObs& t,
                       const ShieldConfig& cfg);

// Feasible accel interval from hdot >= -gamma h per barrier, intersected with
// [a_lo, a_hi]; returns the point closest to a_nom or nullopt if empty.
std::optional<double> cbf_qp(const std::vector<Barrier>& barriers, double a_nom, double a_lo,
                             double a_hi, const ShieldConfig& cfg);

dyn::ControlInput nominal_control(const dyn::VehicleState& s, Action a,
                                  const world::RoadNetwork& net, int lane_hint,
                                  const dyn::VehicleKind& kind);

std::vector<TargetObs> relevant_targets(const world::RoadNetwork& net,
                                        const std::vector<VehicleSnapshot>& vehicles,
                                        int ego_id, Action a);

struct ActionCheck {
  bool safe = false;
  dyn::ControlInput control;  // shield-projected when safe
};

struct AgentShieldResult {
  SafeActionSet safe_set;
  std::array<ActionCheck, kNumActions> checks{};
  dyn::ControlInput emergency;  // full brake, lane-center steer
};

// vehicles = the set known to this agent (itself included).
AgentShieldResult check_agent(const world::RoadNetwork& net,
                              const std::vector<VehicleSnapshot>& vehicles, int ego_id,
                              const ShieldConfig& cfg);

}  // namespace cav::shield
