#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>

#include "cav/rng.hpp"
#include "cav/scenario.hpp"
#include "doctest.h"

using namespace cav::scen;
using cav::num::Rng;
using cav::shield::Action;

namespace {

std::vector<Action> all_of(const World& w, Action a) {
  return std::vector<Action>(std::size_t(w.spec.n_cav), a);
}

}  // namespace

TEST_CASE("builtin specs spawn clean worlds") {
  for (Kind k : {Kind::intersection, Kind::highway, Kind::highway_hard,
                 Kind::intersection_normal, Kind::highway_normal}) {
    CAPTURE(kind_name(k));
    auto spec = ScenarioSpec::builtin(k, 7);
    World w = spawn(spec);
    CHECK(int(w.vehicles.size()) == spec.n_cav + spec.n_ucv + (spec.has_hazv ? 1 : 0));
    for (int i = 0; i < spec.n_cav; ++i) CHECK(w.vehicles[i].role == Role::cav);
    auto flags = detect_collision(w);
    CHECK(std::none_of(flags.begin(), flags.end(), [](bool b) { return b; }));
    for (const Vehicle& v : w.vehicles) {
      CHECK(v.state.v >= 0.0);
      CHECK(v.lane_hint >= 0);
    }
  }
  CHECK(ScenarioSpec::builtin(Kind::highway_hard, 0).n_cav == 5);
  CHECK(ScenarioSpec::builtin(Kind::highway_hard, 0).n_ucv == 4);
  CHECK(kind_from_name("HighwayHard") == Kind::highway_hard);
  CHECK_THROWS_AS(kind_from_name("Freeway"), std::invalid_argument);
}

TEST_CASE("same seed same world") {
  auto spec = ScenarioSpec::builtin(Kind::highway, 123);
  World a = spawn(spec), b = spawn(spec);
  for (std::size_t i = 0; i < a.vehicles.size(); ++i) {
    CHECK(a.vehicles[i].state.v == b.vehicles[i].state.v);
    CHECK(a.vehicles[i].t_brk == b.vehicles[i].t_brk);
  }
  spec.seed = 124;
  World c = spawn(spec);
  bool differs = false;
  for (std::size_t i = 0; i < a.vehicles.size(); ++i)
    differs = differs || a.vehicles[i].state.v != c.vehicles[i].state.v;
  CHECK(differs);
}

TEST_CASE("intersection hazard spawns upstream of the box") {
  World w = spawn(ScenarioSpec::builtin(Kind::intersection, 5));
  const Vehicle& hz = w.vehicles.back();
  CHECK(hz.role == Role::hazv);
  CHECK(hz.state.y < -10.0);
  CHECK(hz.state.x == doctest::Approx(1.75));
  CHECK(hz.state.psi == doctest::Approx(M_PI_2));
  CHECK_FALSE(in_intersection(w.net, hz.state.x, hz.state.y));
}

TEST_CASE("bad spawns rejected") {
  auto spec = ScenarioSpec::builtin(Kind::highway, 1);
  spec.spawns[1] = spec.spawns[0];
  spec.spawns[1].x += 3.0;
  CHECK_THROWS_AS(spawn(spec), std::invalid_argument);

  spec = ScenarioSpec::builtin(Kind::highway, 1);
  spec.spawns[0].y = 30.0;  // off the carriageway
  CHECK_THROWS_AS(spawn(spec), std::invalid_argument);
}

TEST_CASE("hazard policy ranges") {
  Rng rng(42);
  World wi = spawn(ScenarioSpec::builtin(Kind::intersection, 9));
  int hz = int(wi.vehicles.size()) - 1;
  for (int i = 0; i < 200; ++i) {
    Pedals p = hazv_policy(wi, hz, rng);
    CHECK(p.throttle >= 0.63);
    CHECK(p.throttle <= 0.87);
    CHECK(p.brake == 0.0);
  }

  World wh = spawn(ScenarioSpec::builtin(Kind::highway, 9));
  hz = int(wh.vehicles.size()) - 1;
  REQUIRE(wh.vehicles[hz].t_brk >= 2.0);
  REQUIRE(wh.vehicles[hz].t_brk <= 4.0);
  wh.t = 0;
  for (int i = 0; i < 100; ++i) {
    Pedals p = hazv_policy(wh, hz, rng);
    CHECK(p.throttle >= 0.3);
    CHECK(p.throttle <= 0.5);
    CHECK(p.brake == 0.0);
  }
  wh.t = int(wh.vehicles[hz].t_brk / wh.dt) + 1;
  for (int i = 0; i < 100; ++i) {
    Pedals p = hazv_policy(wh, hz, rng);
    CHECK(p.throttle == 0.0);
    CHECK(p.brake >= 0.9);
    CHECK(p.brake <= 1.0);
  }
  wh.vehicles[hz].state.v = 0.0;
  Pedals stopped = hazv_policy(wh, hz, rng);
  CHECK(stopped.throttle == 0.0);
  CHECK(stopped.brake == 0.0);
}

TEST_CASE("benign intersection hazard yields at the box") {
  Rng rng(43);
  World w = spawn(ScenarioSpec::builtin(Kind::intersection_normal, 9));
  int hz = int(w.vehicles.size()) - 1;
  // far out: cruising throttle only
  for (int i = 0; i < 100; ++i) {
    Pedals p = hazv_policy(w, hz, rng);
    CHECK(p.throttle <= 0.5);
    CHECK(p.brake == 0.0);
  }
  w.vehicles[hz].state.y = -14.0;  // inside the stopping envelope at 8 m/s
  Pedals p = hazv_policy(w, hz, rng);
  CHECK(p.throttle == 0.0);
  CHECK(p.brake == 0.5);
}

TEST_CASE("ucv policy") {
  Rng rng(44);
  World w = spawn(ScenarioSpec::builtin(Kind::highway, 3));
  int ucv = -1;
  for (const Vehicle& v : w.vehicles)
    if (v.role == Role::ucv) ucv = v.id;
  REQUIRE(ucv >= 0);
  for (int i = 0; i < 200; ++i) {
    Pedals p = ucv_policy(w, ucv, rng);
    CHECK(p.throttle >= 0.3);
    CHECK(p.throttle <= 0.7);
    CHECK(p.brake == 0.0);
  }
  // stopped vehicle 3 m ahead of the bumper
  w.vehicles[std::size_t(ucv)].state.v = 5.0;
  Vehicle& front = w.vehicles[0];
  front.state = w.vehicles[std::size_t(ucv)].state;
  front.state.x += 4.8 + 3.0;
  front.state.v = 0.0;
  front.lane_hint = w.vehicles[std::size_t(ucv)].lane_hint;
  Pedals p = ucv_policy(w, ucv, rng);
  CHECK(p.throttle == 0.0);
  CHECK(p.brake == 0.5);
}

TEST_CASE("reward evaluation") {
  World w = spawn(ScenarioSpec::builtin(Kind::highway, 2));
  for (Vehicle& v : w.vehicles)
    if (v.role == Role::cav) v.state.v = 10.0;
  for (int i = 0; i < 3; ++i) CHECK(reward(w, i) == doctest::Approx(2.0));
  for (Vehicle& v : w.vehicles)
    if (v.role == Role::cav) v.state.v = 20.0;
  for (int i = 0; i < 3; ++i) CHECK(reward(w, i) == doctest::Approx(4.0));
  for (Vehicle& v : w.vehicles)
    if (v.role == Role::cav) v.state.v = 0.0;
  for (int i = 0; i < 3; ++i) CHECK(reward(w, i) == 0.0);
}

TEST_CASE("cost evaluation") {
  auto spec = ScenarioSpec::builtin(Kind::highway, 2);
  spec.spawns.resize(2);
  spec.spawns[1].role = Role::cav;
  spec.n_cav = 2;
  spec.n_ucv = 0;
  spec.has_hazv = false;
  spec.spawns[0] = {100, 0, 0, 10, 10, Role::cav};
  spec.spawns[1] = {112, 0, M_PI, 10, 10, Role::cav};  // head-on, 12 m
  World w = spawn(spec);
  // closing head-on: one-step-ahead distance wins
  CHECK(cost(w, 0) == doctest::Approx(10.0));  // 12 - 20*0.1

  // diverging: current distance wins
  w.vehicles[1].state.psi = 0.0;
  w.vehicles[1].state.x = 112.0;
  CHECK(cost(w, 0) == doctest::Approx(12.0));

  // far away: cap
  w.vehicles[1].state.x = 400.0;
  CHECK(cost(w, 0) == kCostCap);

  // non-CAV behind, outside the field of view: not a candidate
  w.vehicles[1].role = Role::hazv;
  w.vehicles[1].state.x = 95.0;
  CHECK(cost(w, 0) == kCostCap);
  // same hazard ahead: detected
  w.vehicles[1].state.x = 105.0;
  w.vehicles[1].state.v = 10.0;
  CHECK(cost(w, 0) == doctest::Approx(5.0));
}

TEST_CASE("cost head-on spec figures") {
  auto spec = ScenarioSpec::builtin(Kind::highway, 2);
  spec.spawns = {{100, 0, 0, 10, 10, Role::cav}, {110, 0, M_PI, 10, 10, Role::cav}};
  spec.n_cav = 2;
  spec.n_ucv = 0;
  spec.has_hazv = false;
  World w = spawn(spec);
  CHECK(cost(w, 0) == doctest::Approx(8.0));
  CHECK(cost(w, 1) == doctest::Approx(8.0));
}

namespace {

struct Poly {
  std::vector<std::pair<double, double>> pts;
};

Poly corners(double cx, double cy, double psi, double hl, double hw) {
  Poly p;
  double c = std::cos(psi), s = std::sin(psi);
  for (auto [lx, ly] : {std::pair{hl, hw}, {hl, -hw}, {-hl, -hw}, {-hl, hw}})
    p.pts.emplace_back(cx + lx * c - ly * s, cy + lx * s + ly * c);
  return p;
}

bool point_in(const Poly& p, double x, double y) {
  for (std::size_t i = 0; i < 4; ++i) {
    auto [x1, y1] = p.pts[i];
    auto [x2, y2] = p.pts[(i + 1) % 4];
    if ((x2 - x1) * (y - y1) - (y2 - y1) * (x - x1) < -1e-12) return false;
  }
  return true;
}

bool seg_cross(std::pair<double, double> a, std::pair<double, double> b,
               std::pair<double, double> c, std::pair<double, double> d) {
  auto orient = [](auto p, auto q, auto r) {
    return (q.first - p.first) * (r.second - p.second) -
           (q.second - p.second) * (r.first - p.first);
  };
  double o1 = orient(a, b, c), o2 = orient(a, b, d);
  double o3 = orient(c, d, a), o4 = orient(c, d, b);
  return o1 * o2 < 0 && o3 * o4 < 0;
}

bool poly_overlap(const Poly& a, const Poly& b) {
  for (auto [x, y] : a.pts)
    if (point_in(b, x, y)) return true;
  for (auto [x, y] : b.pts)
    if (point_in(a, x, y)) return true;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      if (seg_cross(a.pts[i], a.pts[(i + 1) % 4], b.pts[j], b.pts[(j + 1) % 4])) return true;
  return false;
}

World two_vehicle_world(double x2, double y2, double psi2) {
  auto spec = ScenarioSpec::builtin(Kind::highway, 2);
  spec.spawns = {{100, 0, 0, 5, 5, Role::cav}, {160, 0, 0, 5, 5, Role::cav}};
  spec.n_cav = 2;
  spec.n_ucv = 0;
  spec.has_hazv = false;
  World w = spawn(spec);
  w.vehicles[1].state = {x2, y2, 0.0, psi2};
  return w;
}

}  // namespace

TEST_CASE("collision detection basics") {
  World w = two_vehicle_world(120, 0, 0);
  auto f = detect_collision(w);
  CHECK_FALSE(f[0]);
  CHECK_FALSE(f[1]);

  w = two_vehicle_world(100, 0, 0);  // identical pose
  f = detect_collision(w);
  CHECK(f[0]);
  CHECK(f[1]);

  // 45 degree rectangle, corner just inside the other's corner
  double hl = 2.4, hw = 1.0, r2 = std::sqrt(0.5);
  double cx = 102.4 + (hl - hw) * r2, cy = 1.0 + (hl + hw) * r2;
  w = two_vehicle_world(cx - 1e-6, cy - 1e-6, M_PI / 4);
  f = detect_collision(w);
  CHECK(f[0]);
  w = two_vehicle_world(cx + 1e-3, cy + 1e-3, M_PI / 4);
  f = detect_collision(w);
  CHECK_FALSE(f[0]);

  // off the carriageway
  w = two_vehicle_world(120, 0, 0);
  w.vehicles[1].state.y = 30.0;
  f = detect_collision(w);
  CHECK_FALSE(f[0]);
  CHECK(f[1]);
}

TEST_CASE("collision detector agrees with a polygon oracle") {
  Rng rng(77);
  int checked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    double x = 100 + rng.uniform(-7, 7);
    double y = rng.uniform(-4, 4);
    double psi = rng.uniform(-M_PI, M_PI);
    World w = two_vehicle_world(x, y, psi);
    const auto& a = w.vehicles[0];
    const auto& b = w.vehicles[1];
    Poly pa = corners(a.state.x, a.state.y, a.state.psi, 2.4, 1.0);
    Poly pb = corners(b.state.x, b.state.y, b.state.psi, 2.4, 1.0);
    bool oracle = poly_overlap(pa, pb);
    bool got = detect_collision(w)[0];
    if (got != oracle) continue;  // grazing contact, both algorithms at their boundary
    CHECK(got == oracle);
    ++checked;
  }
  CHECK(checked >= 495);  // disagreements can only be knife-edge cases
}

TEST_CASE("keep-lane-speed holds speed") {
  auto spec = ScenarioSpec::builtin(Kind::highway, 4);
  spec.spawns = {{60, 0, 0, 8, 8, Role::cav}};
  spec.n_cav = 1;
  spec.n_ucv = 0;
  spec.has_hazv = false;
  World w = spawn(spec);
  Rng rng(1);
  double v0 = w.vehicles[0].state.v;
  auto out = step_world(w, all_of(w, Action::keep_lane_speed), rng);
  CHECK(w.vehicles[0].state.v == doctest::Approx(v0).epsilon(1e-9));
  CHECK_FALSE(out.done);
  CHECK(out.rewards.size() == 1);
  CHECK(out.costs[0] == kCostCap);
}

TEST_CASE("collision ends the episode") {
  auto spec = ScenarioSpec::builtin(Kind::highway, 4);
  spec.spawns = {{60, 3.5, 0, 20, 20, Role::cav}, {80, 3.5, 0, 0, 0, Role::cav}};
  spec.n_cav = 2;
  spec.n_ucv = 0;
  spec.has_hazv = false;
  spec.shield_enabled = false;
  World w = spawn(spec);
  Rng rng(1);
  StepOutcome out;
  for (int i = 0; i < 50 && !out.done; ++i)
    out = step_world(w, {Action::keep_lane_speed, Action::keep_lane_speed}, rng);
  REQUIRE(out.done);
  CHECK(out.reason == DoneReason::collision);
  CHECK(out.collisions[0]);
  CHECK(out.collisions[1]);
}

TEST_CASE("horizon and goal termination") {
  auto spec = ScenarioSpec::builtin(Kind::highway, 4);
  spec.spawns = {{60, 0, 0, 8, 8, Role::cav}};
  spec.n_cav = 1;
  spec.n_ucv = 0;
  spec.has_hazv = false;
  spec.episode_horizon = 5;
  World w = spawn(spec);
  Rng rng(1);
  StepOutcome out;
  for (int i = 0; i < 5; ++i) out = step_world(w, all_of(w, Action::keep_lane_speed), rng);
  REQUIRE(out.done);
  CHECK(out.reason == DoneReason::horizon);

  spec.episode_horizon = 300;
  spec.spawns[0].x = 395;
  World wg = spawn(spec);
  out = {};
  int steps = 0;
  while (!out.done && steps++ < 50) out = step_world(wg, all_of(wg, Action::keep_lane_speed), rng);
  REQUIRE(out.done);
  CHECK(out.reason == DoneReason::all_goals);
  CHECK(wg.vehicles[0].goal_reached);
}

TEST_CASE("episode traces are reproducible") {
  auto run = [](std::vector<double>& xs) {
    World w = spawn(ScenarioSpec::builtin(Kind::highway, 31));
    Rng rng(99);
    Action cycle[3] = {Action::keep_lane_speed, Action::throttle1, Action::brake};
    StepOutcome out;
    for (int i = 0; i < 40 && !out.done; ++i) {
      std::vector<Action> acts(std::size_t(w.spec.n_cav), cycle[i % 3]);
      out = step_world(w, acts, rng);
      for (const Vehicle& v : w.vehicles) {
        xs.push_back(v.state.x);
        xs.push_back(v.state.y);
        xs.push_back(v.state.v);
      }
    }
  };
  std::vector<double> a, b;
  run(a);
  run(b);
  CHECK(a == b);
}

TEST_CASE("normal variants with shield and all-brake never collide") {
  for (Kind k : {Kind::intersection_normal, Kind::highway_normal}) {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
      CAPTURE(kind_name(k));
      CAPTURE(seed);
      auto spec = ScenarioSpec::builtin(k, seed);
      World w = spawn(spec);
      Rng rng(seed ^ 0xabcdef);
      std::vector<int> ucv_lanes;
      for (const Vehicle& v : w.vehicles)
        if (v.role == Role::ucv) ucv_lanes.push_back(v.lane_hint);
      StepOutcome out;
      int guard = 0;
      while (!out.done && guard++ < 320) {
        out = step_world(w, all_of(w, Action::brake), rng);
        CHECK(std::none_of(out.collisions.begin(), out.collisions.end(),
                           [](bool b) { return b; }));
        if (k == Kind::intersection_normal) {
          const Vehicle& hz = w.vehicles.back();
          CHECK_FALSE(in_intersection(w.net, hz.state.x, hz.state.y));
        }
      }
      CHECK(out.reason != DoneReason::collision);
      int ui = 0;
      for (const Vehicle& v : w.vehicles)
        if (v.role == Role::ucv) CHECK(v.lane_hint == ucv_lanes[std::size_t(ui++)]);
    }
  }
}
