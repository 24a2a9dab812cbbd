#include "cav/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <stdexcept>

namespace cav::scen {

using dyn::ControlInput;
using dyn::VehicleKind;
using dyn::VehicleState;
using num::Rng;

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::intersection: return "Intersection";
    case Kind::highway: return "Highway";
    case Kind::highway_hard: return "HighwayHard";
    case Kind::intersection_normal: return "IntersectionNormal";
    case Kind::highway_normal: return "HighwayNormal";
  }
  return "?";
}

Kind kind_from_name(const std::string& name) {
  // "HighwayHard", "highway-hard", and "highway_hard" all refer to the same kind
  auto fold = [](const std::string& s) {
    std::string o;
    for (char ch : s)
      if (ch != '-' && ch != '_') o.push_back(char(std::tolower((unsigned char)ch)));
    return o;
  };
  std::string want = fold(name);
  for (Kind k : {Kind::intersection, Kind::highway, Kind::highway_hard,
                 Kind::intersection_normal, Kind::highway_normal})
    if (want == fold(kind_name(k))) return k;
  throw std::invalid_argument("unknown scenario kind: " + name);
}

namespace {

bool is_intersection_kind(Kind k) {
  return k == Kind::intersection || k == Kind::intersection_normal;
}

VehicleKind ucv_kind() {
  VehicleKind k = VehicleKind::sedan();
  k.v_max = 12.0;
  return k;
}

}  // namespace

ScenarioSpec ScenarioSpec::builtin(Kind k, std::uint64_t seed) {
  ScenarioSpec s;
  s.kind = k;
  s.seed = seed;
  auto cav = [](double x, double y) { return SpawnPose{x, y, 0, 6, 8, Role::cav}; };
  auto ucv = [](double x, double y) { return SpawnPose{x, y, 0, 6, 9, Role::ucv}; };
  switch (k) {
    case Kind::intersection:
    case Kind::intersection_normal:
      s.n_cav = 3;
      s.has_hazv = true;
      s.spawns = {cav(-35, -1.75), cav(-47, -1.75), cav(-41, -5.25),
                  {1.75, -50, M_PI_2, 8, 8, Role::hazv}};
      break;
    case Kind::highway:
    case Kind::highway_normal:
      s.n_cav = 3;
      s.n_ucv = 1;
      s.has_hazv = true;
      s.spawns = {cav(60, 0), cav(53, 3.5), cav(46, 7), ucv(75, 0),
                  {90, 3.5, 0, 9, 11, Role::hazv}};
      break;
    case Kind::highway_hard:
      s.n_cav = 5;
      s.n_ucv = 4;
      s.has_hazv = true;
      // slow traffic screens the outer lanes while the middle lane runs open
      // into a stoppage far downrange; fast approaches outrun the sensing
      // horizon there, so advance awareness of it has to come over the air
      s.spawns = {cav(60, 0),  cav(52, 3.5), cav(60, 7), cav(44, 0), cav(36, 3.5),
                  ucv(76, 0),  ucv(84, 0),   ucv(76, 7), ucv(84, 7),
                  {260, 3.5, 0, 9, 11, Role::hazv}};
      break;
  }
  return s;
}

std::vector<comms::AgentView> World::views() const {
  std::vector<comms::AgentView> out;
  for (const Vehicle& v : vehicles)
    out.push_back({v.id, v.state.x, v.state.y, v.state.v, v.state.psi, v.accel,
                   v.role == Role::cav, v.lane_hint});
  return out;
}

std::vector<world::VehicleRef> World::refs() const {
  std::vector<world::VehicleRef> out;
  for (const Vehicle& v : vehicles)
    out.push_back({v.id, v.state.x, v.state.y, v.state.v, v.state.psi, v.lane_hint});
  return out;
}

World spawn(const ScenarioSpec& spec) {
  World w;
  w.spec = spec;
  w.net = is_intersection_kind(spec.kind) ? world::RoadNetwork::intersection_map()
                                          : world::RoadNetwork::highway();
  Rng rng(spec.seed);
  Rng sp = rng.spawn(0);

  int id = 0;
  for (const SpawnPose& p : spec.spawns) {
    Vehicle v;
    v.id = id++;
    v.role = p.role;
    v.kind = p.role == Role::ucv ? ucv_kind() : VehicleKind::sedan();
    v.state = {p.x, p.y, sp.uniform(p.v_lo, p.v_hi), p.psi};
    world::LanePosition lp = project_to_lane(w.net, p.x, p.y);
    if (!lp.valid()) throw std::invalid_argument("spawn: pose off-road");
    v.lane_hint = lp.lane_id;
    if (p.role == Role::cav)
      v.goal_x = is_intersection_kind(spec.kind) ? 40.0 : 400.0;
    w.vehicles.push_back(v);
  }
  if (spec.has_hazv &&
      (spec.kind == Kind::highway || spec.kind == Kind::highway_hard))
    w.vehicles.back().t_brk = sp.uniform(2.0, 4.0);

  for (std::size_t i = 0; i < w.vehicles.size(); ++i)
    for (std::size_t j = i + 1; j < w.vehicles.size(); ++j) {
      const Vehicle &a = w.vehicles[i], &b = w.vehicles[j];
      double d = std::hypot(a.state.x - b.state.x, a.state.y - b.state.y);
      if (d < std::max(a.kind.length, b.kind.length) + 2.0)
        throw std::invalid_argument("spawn: overlapping poses");
    }
  return w;
}

namespace {

// metres travelled along the heading before entering a box, up to 100 m
double distance_to_box(const World& w, const Vehicle& v) {
  for (int m = 0; m <= 100; ++m) {
    double x = v.state.x + m * std::cos(v.state.psi);
    double y = v.state.y + m * std::sin(v.state.psi);
    if (in_intersection(w.net, x, y)) return double(m);
  }
  return 1e18;
}

double front_bumper_gap(const World& w, const Vehicle& v) {
  auto fr = neighbor_query(w.net, w.refs(), v.id, world::Relation::front_same);
  if (!fr) return 1e18;
  return fr->ds - (v.kind.length + w.vehicle(fr->id).kind.length) / 2.0;
}

}  // namespace

Pedals hazv_policy(const World& w, int id, Rng& rng) {
  const Vehicle& v = w.vehicle(id);
  switch (w.spec.kind) {
    case Kind::intersection:
      return {rng.uniform(0.65, 0.85) + rng.uniform(-0.02, 0.02), 0.0};
    case Kind::intersection_normal: {
      double d = distance_to_box(w, v);
      double stop_envelope = v.state.v * v.state.v / 6.0 + 4.0;
      if (d <= stop_envelope) return {0.0, 0.5};
      return {rng.uniform(0.3, 0.5), 0.0};
    }
    case Kind::highway:
    case Kind::highway_hard: {
      double now = w.t * w.dt;
      if (v.t_brk >= 0 && now >= v.t_brk) {
        if (v.state.v <= 0.0) return {0.0, 0.0};
        return {0.0, rng.uniform(0.9, 1.0)};
      }
      return {rng.uniform(0.3, 0.5), 0.0};
    }
    case Kind::highway_normal: {
      if (front_bumper_gap(w, v) < 2.0 * v.state.v) return {0.0, 0.5};
      return {rng.uniform(0.3, 0.5), 0.0};
    }
  }
  return {};
}

Pedals ucv_policy(const World& w, int id, Rng& rng) {
  const Vehicle& v = w.vehicle(id);
  if (front_bumper_gap(w, v) < 2.0 * v.state.v) return {0.0, 0.5};
  return {rng.uniform(0.3, 0.7), 0.0};
}

double reward(const World& w, int i, double mu_self, double mu_other) {
  double r = 0.0;
  for (const Vehicle& v : w.vehicles) {
    if (v.role != Role::cav) continue;
    r += (v.id == i ? mu_self : mu_other) * std::abs(v.state.v) * w.dt;
  }
  return r;
}

double cost(const World& w, int i) {
  const Vehicle& ego = w.vehicle(i);
  auto bundle = comms::build_observation(w.net, w.views(), i, false);

  std::map<int, const Vehicle*> cands;
  for (const Vehicle& v : w.vehicles)
    if (v.role == Role::cav && v.id != i) cands[v.id] = &v;
  for (const auto& o : bundle.detected)
    if (!cands.count(o.id)) cands[o.id] = &w.vehicle(o.id);

  auto ahead = [&](const VehicleState& s) {
    return std::pair{s.x + w.dt * s.v * std::cos(s.psi), s.y + w.dt * s.v * std::sin(s.psi)};
  };
  auto [ex1, ey1] = ahead(ego.state);

  double c = kCostCap;
  for (const auto& [vid, v] : cands) {
    double d0 = std::hypot(v->state.x - ego.state.x, v->state.y - ego.state.y);
    auto [vx1, vy1] = ahead(v->state);
    double d1 = std::hypot(vx1 - ex1, vy1 - ey1);
    c = std::min({c, d0, d1});
  }
  return std::max(0.0, c);
}

namespace {

struct Rect {
  double cx, cy, ux, uy, hl, hw;  // centre, heading unit vector, half extents
};

Rect rect_of(const Vehicle& v) {
  return {v.state.x,          v.state.y,         std::cos(v.state.psi),
          std::sin(v.state.psi), v.kind.length / 2, v.kind.width / 2};
}

bool rects_overlap(const Rect& a, const Rect& b) {
  double axes[4][2] = {{a.ux, a.uy}, {-a.uy, a.ux}, {b.ux, b.uy}, {-b.uy, b.ux}};
  for (auto& ax : axes) {
    double ra = a.hl * std::abs(ax[0] * a.ux + ax[1] * a.uy) +
                a.hw * std::abs(-ax[0] * a.uy + ax[1] * a.ux);
    double rb = b.hl * std::abs(ax[0] * b.ux + ax[1] * b.uy) +
                b.hw * std::abs(-ax[0] * b.uy + ax[1] * b.ux);
    double d = std::abs(ax[0] * (b.cx - a.cx) + ax[1] * (b.cy - a.cy));
    if (d > ra + rb) return false;
  }
  return true;
}

}  // namespace

namespace {

// corridor membership with the first and last segments extended, so driving
// off the end of the map is route completion, not a crash
bool within_extended_corridor(const world::Lane& ln, double x, double y) {
  std::size_t n = ln.centerline.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const auto& a = ln.centerline[i];
    const auto& b = ln.centerline[i + 1];
    double ex = b[0] - a[0], ey = b[1] - a[1];
    double len = std::hypot(ex, ey);
    double t = ((x - a[0]) * ex + (y - a[1]) * ey) / (len * len);
    double slack = 1000.0 / len;
    t = std::clamp(t, i == 0 ? -slack : 0.0, i + 2 == n ? 1.0 + slack : 1.0);
    double px = a[0] + t * ex, py = a[1] + t * ey;
    if (std::hypot(x - px, y - py) <= ln.width / 2 + 1.0) return true;
  }
  return false;
}

bool off_road_lateral(const World& w, double x, double y) {
  if (in_intersection(w.net, x, y)) return false;
  for (const world::Lane& ln : w.net.lanes)
    if (within_extended_corridor(ln, x, y)) return false;
  return true;
}

}  // namespace

std::vector<bool> detect_collision(const World& w) {
  std::size_t n = w.vehicles.size();
  std::vector<bool> flags(n, false);
  std::vector<Rect> rects;
  for (const Vehicle& v : w.vehicles) rects.push_back(rect_of(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rects_overlap(rects[i], rects[j])) {
        flags[i] = true;
        flags[j] = true;
      }
  for (std::size_t i = 0; i < n; ++i)
    if (off_road_lateral(w, w.vehicles[i].state.x, w.vehicles[i].state.y)) flags[i] = true;
  return flags;
}

std::vector<shield::VehicleSnapshot> known_snapshots(const World& w,
                                                     const comms::ObservationBundle& b) {
  std::map<int, shield::VehicleSnapshot> snaps;
  auto add = [&](int vid, double x, double y, double vel, double psi, double accel) {
    if (snaps.count(vid)) return;
    shield::VehicleSnapshot s;
    s.id = vid;
    s.state = {x, y, vel, psi};
    s.accel = accel;
    s.kind = &w.vehicle(vid).kind;
    s.lane = w.vehicle(vid).lane_hint;
    snaps[vid] = s;
  };
  add(b.ego.id, b.ego.x, b.ego.y, b.ego.v, b.ego.psi, b.ego.accel);
  for (const auto& o : b.shared) add(o.id, o.x, o.y, o.v, o.psi, o.accel);
  for (const auto& o : b.infra) add(o.id, o.x, o.y, o.v, o.psi, 0.0);
  for (const auto& o : b.detected) add(o.id, o.x, o.y, o.v, o.psi, 0.0);

  std::vector<shield::VehicleSnapshot> out;
  for (auto& [vid, s] : snaps) out.push_back(s);
  return out;
}

shield::AgentShieldResult agent_shield(const World& w, int id) {
  auto bundle = comms::build_observation(w.net, w.views(), id, w.spec.comm_enabled, w.t);
  return shield::check_agent(w.net, known_snapshots(w, bundle), id, w.shield_cfg);
}

StepOutcome step_world(World& w, const std::vector<shield::Action>& cav_actions, Rng& rng) {
  if (int(cav_actions.size()) != w.spec.n_cav)
    throw std::invalid_argument("step_world: one action per CAV required");

  std::vector<ControlInput> controls(w.vehicles.size());
  for (Vehicle& v : w.vehicles) {
    if (v.role == Role::cav) {
      shield::Action a = cav_actions[std::size_t(v.id)];
      if (w.spec.shield_enabled) {
        auto res = agent_shield(w, v.id);
        if (res.safe_set.emergency || !res.checks[int(a)].safe)
          controls[std::size_t(v.id)] = res.emergency;
        else
          controls[std::size_t(v.id)] = res.checks[int(a)].control;
      } else {
        try {
          controls[std::size_t(v.id)] =
              shield::nominal_control(v.state, a, w.net, v.lane_hint, v.kind);
        } catch (const std::invalid_argument&) {
          controls[std::size_t(v.id)] = {0.0, 0.0};  // past the map end, coast
        }
      }
    } else {
      Pedals p = v.role == Role::hazv ? hazv_policy(w, v.id, rng) : ucv_policy(w, v.id, rng);
      double accel = dyn::pedal_to_accel(p.throttle, p.brake, v.state.v, v.kind);
      double steer = 0.0;
      try {
        steer = shield::nominal_control(v.state, shield::Action::keep_lane_speed, w.net,
                                        v.lane_hint, v.kind)
                    .steer;
      } catch (const std::invalid_argument&) {
      }
      controls[std::size_t(v.id)] = {accel, steer};
    }
  }

  for (Vehicle& v : w.vehicles) {
    double v0 = v.state.v;
    v.state = dyn::step_bicycle(v.state, controls[std::size_t(v.id)], w.dt, v.kind);
    v.accel = (v.state.v - v0) / w.dt;
    world::LanePosition lp = project_with_hint(w.net, v.state.x, v.state.y, v.lane_hint);
    if (lp.valid()) v.lane_hint = lp.lane_id;
  }
  w.t += 1;

  StepOutcome out;
  out.collisions = detect_collision(w);
  bool any_hit = false;
  for (std::size_t i = 0; i < w.vehicles.size(); ++i) {
    if (out.collisions[i]) w.vehicles[i].collided = true;
    any_hit = any_hit || out.collisions[i];
  }
  bool all_goals = true;
  for (Vehicle& v : w.vehicles) {
    if (v.role != Role::cav) continue;
    if (v.state.x >= v.goal_x) v.goal_reached = true;
    all_goals = all_goals && v.goal_reached;
  }
  for (int i = 0; i < w.spec.n_cav; ++i) {
    out.rewards.push_back(reward(w, i));
    out.costs.push_back(cost(w, i));
  }
  if (any_hit) {
    out.done = true;
    out.reason = DoneReason::collision;
  } else if (all_goals) {
    out.done = true;
    out.reason = DoneReason::all_goals;
  } else if (w.t >= w.spec.episode_horizon) {
    out.done = true;
    out.reason = DoneReason::horizon;
  }
  return out;
}

}  // namespace cav::scen
