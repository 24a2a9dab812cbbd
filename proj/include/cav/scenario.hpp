#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cav/comms.hpp"
#include "cav/dynamics.hpp"
#include "cav/rng.hpp"
#include "cav/shield.hpp"
#include "cav/world.hpp"

namespace cav::scen {

enum class Kind {
  intersection,
  highway,
  highway_hard,
  intersection_normal,
  highway_normal,
};

const char* kind_name(Kind k);
Kind kind_from_name(const std::string& name);  // throws on unknown

enum class Role { cav, ucv, hazv };

struct SpawnPose {
  double x = 0, y = 0, psi = 0;
  double v_lo = 0, v_hi = 0;
  Role role = Role::cav;
};

struct ScenarioSpec {
  Kind kind = Kind::highway;
  int n_cav = 0;
  int n_ucv = 0;
  bool has_hazv = false;
  std::vector<SpawnPose> spawns;  // CAVs first, then UCVs, then the hazard
  std::uint64_t seed = 0;
  bool comm_enabled = true;
  bool shield_enabled = true;
  int episode_horizon = 300;

  static ScenarioSpec builtin(Kind k, std::uint64_t seed);
};

struct Vehicle {
  int id = -1;
  Role role = Role::cav;
  dyn::VehicleState state;
  dyn::VehicleKind kind;
  double accel = 0.0;  // last realized
  int lane_hint = -1;
  bool collided = false;
  bool goal_reached = false;
  double goal_x = 1e18;
  double t_brk = -1.0;  // highway hazard trigger time, s
};

struct World {
  world::RoadNetwork net;
  std::vector<Vehicle> vehicles;
  ScenarioSpec spec;
  shield::ShieldConfig shield_cfg;
  double dt = 0.1;
  int t = 0;

  const Vehicle& vehicle(int id) const { return vehicles.at(std::size_t(id)); }
  std::vector<comms::AgentView> views() const;
  std::vector<world::VehicleRef> refs() const;
};

World spawn(const ScenarioSpec& spec);

struct Pedals {
  double throttle = 0.0;
  double brake = 0.0;
};

Pedals hazv_policy(const World& w, int id, num::Rng& rng);
Pedals ucv_policy(const World& w, int id, num::Rng& rng);

double reward(const World& w, int i, double mu_self = 1.0, double mu_other = 0.5);
double cost(const World& w, int i);

inline constexpr double kCostCap = 50.0;

std::vector<bool> detect_collision(const World& w);

enum class DoneReason { none, horizon, collision, all_goals };

struct StepOutcome {
  std::vector<double> rewards;  // per CAV
  std::vector<double> costs;
  std::vector<bool> collisions;  // per vehicle
  bool done = false;
  DoneReason reason = DoneReason::none;
};

// the agent's known vehicle set, richer sources first
std::vector<shield::VehicleSnapshot> known_snapshots(const World& w,
                                                     const comms::ObservationBundle& b);

// shield evaluation for one agent under the world's comm setting
shield::AgentShieldResult agent_shield(const World& w, int id);

StepOutcome step_world(World& w, const std::vector<shield::Action>& cav_actions,
                       num::Rng& rng);

}  // namespace cav::scen
