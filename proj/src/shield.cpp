#include "cav/shield.hpp"

#include <algorithm>
#include <cmath>

namespace cav::shield {

using dyn::ControlInput;
using dyn::VehicleKind;
using dyn::VehicleState;

const char* action_name(Action a) {
  switch (a) {
    case Action::keep_lane_speed: return "KEEP-LANE-SPEED";
    case Action::change_left: return "CHANGE-LANE-LEFT";
    case Action::change_right: return "CHANGE-LANE-RIGHT";
    case Action::brake: return "BRAKE";
    case Action::throttle1: return "THROTTLE-BIN-1";
    case Action::throttle2: return "THROTTLE-BIN-2";
    case Action::throttle3: return "THROTTLE-BIN-3";
  }
  return "?";
}

std::array<bool, kNumActions> SafeActionSet::mask() const {
  std::array<bool, kNumActions> m{};
  for (Action a : actions) m[int(a)] = true;
  return m;
}

double safety_following_distance(double v, double v_f, const ShieldConfig& cfg,
                                 const VehicleKind& ego, const VehicleKind& front) {
  double be = std::abs(ego.accel_min), bf = std::abs(front.accel_min);
  double d = cfg.c1 * v + cfg.c2 * (v * v / (2.0 * be) - v_f * v_f / (2.0 * bf)) + cfg.D;
  return std::max(d, cfg.D);
}

double safety_leading_distance(double v, double v_b, const ShieldConfig& cfg,
                               const VehicleKind& ego, const VehicleKind& back) {
  double be = std::abs(ego.accel_min), bb = std::abs(back.accel_min);
  double d = cfg.c1 * v_b + cfg.c2 * (v_b * v_b / (2.0 * bb) - v * v / (2.0 * be)) + cfg.D;
  return std::max(d, cfg.D);
}

Barrier barrier_values(double v_ego, const VehicleKind& ego_kind, const TargetObs& t,
                       const ShieldConfig& cfg) {
  double be = std::abs(ego_kind.accel_min);
  double bt = std::abs(t.kind->accel_min);
  double half_lengths = (ego_kind.length + t.kind->length) / 2.0;
  Barrier b;
  if (t.front) {
    double gap = t.ds_centers - half_lengths;
    double df = cfg.c1 * v_ego +
                cfg.c2 * (v_ego * v_ego / (2.0 * be) - t.v * t.v / (2.0 * bt)) + cfg.D;
    bool floored = df < cfg.D;
    b.h = gap - std::max(df, cfg.D);
    if (floored) {
      b.hdot_unc = t.v - v_ego;
      b.dhdot_da = 0.0;
    } else {
      b.hdot_unc = (t.v - v_ego) + (cfg.c2 * t.v / bt) * t.accel;
      b.dhdot_da = -(cfg.c1 + cfg.c2 * v_ego / be);
    }
  } else {
    double gap = -t.ds_centers - half_lengths;
    double dl = cfg.c1 * t.v + cfg.c2 * (t.v * t.v / (2.0 * bt) - v_ego * v_ego / (2.0 * be)) +
                cfg.D;
    bool floored = dl < cfg.D;
    b.h = gap - std::max(dl, cfg.D);
    if (floored) {
      b.hdot_unc = v_ego - t.v;
      b.dhdot_da = 0.0;
    } else {
      b.hdot_unc = (v_ego - t.v) - (cfg.c1 + cfg.c2 * t.v / bt) * t.accel;
      b.dhdot_da = cfg.c2 * v_ego / be;
    }
  }
  return b;
}

std::optional<double> cbf_qp(const std::vector<Barrier>& barriers, double a_nom, double a_lo,
                             double a_hi, const ShieldConfig& cfg) {
  constexpr double kTiny = 1e-12;
  double lo = a_lo, hi = a_hi;
  for (const Barrier& b : barriers) {
    double rhs = -cfg.gamma_cbf * b.h - b.hdot_unc;  // dhdot_da * a >= rhs
    if (b.dhdot_da > kTiny) {
      lo = std::max(lo, rhs / b.dhdot_da);
    } else if (b.dhdot_da < -kTiny) {
      hi = std::min(hi, rhs / b.dhdot_da);
    } else if (rhs > 0.0) {
      return std::nullopt;
    }
  }
  if (lo > hi) return std::nullopt;
  return std::clamp(a_nom, lo, hi);
}

namespace {

double pure_pursuit(const VehicleState& s, double wx, double wy, const VehicleKind& k) {
  double dx = wx - s.x, dy = wy - s.y;
  double ld = std::hypot(dx, dy);
  if (ld < 1e-6) return 0.0;
  double alpha = dyn::wrap_angle(std::atan2(dy, dx) - s.psi);
  double steer = std::atan(2.0 * (k.l_f + k.l_r) * std::sin(alpha) / std::max(ld, 1.0));
  return std::clamp(steer, -k.steer_max, k.steer_max);
}

world::LaneKeepAction lateral_of(Action a) {
  if (a == Action::change_left) return world::LaneKeepAction::change_left;
  if (a == Action::change_right) return world::LaneKeepAction::change_right;
  return world::LaneKeepAction::keep;
}

// Achievable net-accel interval of each discrete action; the QP projects
// inside it so the executed control still belongs to the chosen action.
void action_bounds(Action a, double v, const VehicleKind& k, double keep_band, double& lo,
                   double& hi) {
  switch (a) {
    case Action::keep_lane_speed:
    case Action::change_left:
    case Action::change_right:
      lo = -keep_band;
      hi = keep_band;
      break;
    case Action::brake:
      lo = dyn::pedal_to_accel(0.0, 0.5, v, k);
      hi = dyn::pedal_to_accel(0.0, 0.0, v, k);
      break;
    default: {
      int j = int(a) - int(Action::throttle1) + 1;
      lo = dyn::pedal_to_accel(double(j - 1) / kThrottleBins, 0.0, v, k);
      hi = dyn::pedal_to_accel(double(j) / kThrottleBins, 0.0, v, k);
      break;
    }
  }
  lo = std::clamp(lo, k.accel_min, k.accel_max);
  hi = std::clamp(hi, k.accel_min, k.accel_max);
}

double nominal_accel(Action a, double v, const VehicleKind& k) {
  switch (a) {
    case Action::keep_lane_speed:
    case Action::change_left:
    case Action::change_right:
      return 0.0;
    case Action::brake:
      return dyn::pedal_to_accel(0.0, 0.25, v, k);
    default: {
      int j = int(a) - int(Action::throttle1) + 1;
      return dyn::pedal_to_accel((j - 0.5) / kThrottleBins, 0.0, v, k);
    }
  }
}

const VehicleSnapshot* find_vehicle(const std::vector<VehicleSnapshot>& vs, int id) {
  for (const auto& v : vs)
    if (v.id == id) return &v;
  return nullptr;
}

// Crossing traffic at the intersection: a chain that transversally crosses
// the ego chain ahead, with overlapping occupancy windows at current speeds,
// becomes a stopped virtual front target at the conflict point.
void add_crossing_targets(const world::RoadNetwork& net,
                          const std::vector<VehicleSnapshot>& vehicles,
                          const VehicleSnapshot& ego, std::vector<TargetObs>& out) {
  if (net.intersections.empty() || ego.lane < 0) return;
  constexpr double kRadius = 5.0;
  constexpr double kSlack = 1.5;
  constexpr double kTimeHorizon = 8.0;
  world::Chain ego_chain = world::build_chain(net, ego.lane);
  auto ego_cc = world::chain_coord(net, ego_chain, ego.state.x, ego.state.y);
  if (!ego_cc) return;
  for (const auto& v : vehicles) {
    if (v.id == ego.id || v.lane < 0) continue;
    world::Chain other = world::build_chain(net, v.lane);
    auto x = world::chain_crossing(net, ego_chain, other);
    if (!x) continue;
    double d_e = x->first - ego_cc->s;
    if (d_e <= 0.0 || d_e > 120.0) continue;
    auto v_cc = world::chain_coord(net, other, v.state.x, v.state.y);
    if (!v_cc) continue;
    double d_j = x->second - v_cc->s;
    if (d_j < -kRadius) continue;  // already through
    auto window = [](double d, double vel) {
      double sp = std::max(vel, 0.2);
      return std::pair<double, double>{std::max(0.0, (d - kRadius) / sp),
                                       (d + kRadius) / sp};
    };
    auto [te_in, te_out] = window(d_e, ego.state.v);
    auto [tj_in, tj_out] = window(d_j, v.state.v);
    if (te_in > kTimeHorizon) continue;
    if (te_in <= tj_out + kSlack && tj_in <= te_out + kSlack) {
      TargetObs t;
      t.ds_centers = d_e;
      t.v = 0.0;
      t.accel = 0.0;
      t.kind = v.kind;
      t.front = true;
      out.push_back(t);
    }
  }
}

}  // namespace

ControlInput nominal_control(const VehicleState& s, Action a, const world::RoadNetwork& net,
                             int lane_hint, const VehicleKind& kind) {
  auto wp = world::waypoint_for_action(net, s.x, s.y, s.v, lane_hint, lateral_of(a));
  if (!wp) throw std::invalid_argument("nominal_control: no such lane");
  return {nominal_accel(a, s.v, kind), pure_pursuit(s, wp->x, wp->y, kind)};
}

std::vector<TargetObs> relevant_targets(const world::RoadNetwork& net,
                                        const std::vector<VehicleSnapshot>& vehicles,
                                        int ego_id, Action a) {
  const VehicleSnapshot* ego = find_vehicle(vehicles, ego_id);
  if (!ego) throw std::invalid_argument("relevant_targets: unknown ego id");

  std::vector<world::VehicleRef> refs;
  refs.reserve(vehicles.size());
  for (const auto& v : vehicles)
    refs.push_back({v.id, v.state.x, v.state.y, v.state.v, v.state.psi, v.lane});

  struct Query {
    world::Relation rel;
    bool front;
  };
  std::vector<Query> queries;
  int side = 0;
  if (a == Action::change_left || a == Action::change_right) {
    side = a == Action::change_left ? 1 : -1;
    queries = {{world::Relation::front_same, true},
               {world::Relation::front_target, true},
               {world::Relation::rear_target, false},
               {world::Relation::front_other, true},
               {world::Relation::rear_other, false}};
  } else {
    queries = {{world::Relation::front_same, true}, {world::Relation::rear_same, false}};
  }

  std::vector<TargetObs> out;
  for (const auto& q : queries) {
    auto n = world::neighbor_query(net, refs, ego_id, q.rel, side);
    if (!n) continue;
    const VehicleSnapshot* tv = find_vehicle(vehicles, n->id);
    if (!tv) continue;
    out.push_back({n->ds, tv->state.v, tv->accel, tv->kind, q.front});
  }
  add_crossing_targets(net, vehicles, *ego, out);
  return out;
}

AgentShieldResult check_agent(const world::RoadNetwork& net,
                              const std::vector<VehicleSnapshot>& vehicles, int ego_id,
                              const ShieldConfig& cfg) {
  const VehicleSnapshot* ego = find_vehicle(vehicles, ego_id);
  if (!ego) throw std::invalid_argument("check_agent: unknown ego id");
  const VehicleKind& kind = *ego->kind;

  AgentShieldResult res;
  for (int ai = 0; ai < kNumActions; ++ai) {
    Action a = Action(ai);
    ControlInput nom;
    try {
      nom = nominal_control(ego->state, a, net, ego->lane, kind);
    } catch (const std::invalid_argument&) {
      continue;  // no such lane
    }
    auto targets = relevant_targets(net, vehicles, ego_id, a);
    std::vector<Barrier> barriers;
    barriers.reserve(targets.size());
    for (const auto& t : targets) barriers.push_back(barrier_values(ego->state.v, kind, t, cfg));
    double lo, hi;
    action_bounds(a, ego->state.v, kind, cfg.keep_band, lo, hi);
    auto alpha = cbf_qp(barriers, nom.accel, lo, hi, cfg);
    if (alpha) {
      res.checks[ai].safe = true;
      res.checks[ai].control = {*alpha, nom.steer};
      res.safe_set.actions.push_back(a);
    }
  }
  if (res.safe_set.actions.empty()) res.safe_set.emergency = true;

  double brake_accel = dyn::pedal_to_accel(0.0, 1.0, ego->state.v, kind);
  double steer = 0.0;
  auto wp = world::waypoint_for_action(net, ego->state.x, ego->state.y, ego->state.v,
                                       ego->lane, world::LaneKeepAction::keep);
  if (wp) steer = pure_pursuit(ego->state, wp->x, wp->y, kind);
  res.emergency = {brake_accel, steer};
  return res;
}

}  // namespace cav::shield
