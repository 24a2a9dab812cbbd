#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>

#include "cav/rng.hpp"
#include "cav/shield.hpp"
#include "doctest.h"

using namespace cav::shield;
using cav::dyn::VehicleKind;
using cav::dyn::VehicleState;
using cav::num::Rng;

static const VehicleKind kSedan = VehicleKind::sedan();

namespace {

VehicleKind handcalc_kind() {
  VehicleKind k = kSedan;
  k.accel_min = -6.0;
  return k;
}

ShieldConfig handcalc_cfg() {
  ShieldConfig c;
  c.c1 = 0.5;
  c.c2 = 1.0;
  c.D = 2.0;
  return c;
}

}  // namespace

TEST_CASE("safety distances") {
  auto cfg = handcalc_cfg();
  auto k = handcalc_kind();
  CHECK(safety_following_distance(0, 0, cfg, k, k) == cfg.D);
  CHECK(safety_following_distance(20, 10, cfg, k, k) == doctest::Approx(37.0));
  CHECK(safety_following_distance(0, 20, cfg, k, k) == cfg.D);  // floored
  CHECK(safety_leading_distance(0, 0, cfg, k, k) == cfg.D);
  CHECK(safety_leading_distance(5, 15, cfg, k, k) == doctest::Approx(7.5 + 200.0 / 12 + 2));
  CHECK(safety_leading_distance(20, 0, cfg, k, k) == cfg.D);
  // role swap symmetry
  CHECK(safety_leading_distance(10, 20, cfg, k, k) ==
        doctest::Approx(safety_following_distance(20, 10, cfg, k, k)));
}

TEST_CASE("barrier values") {
  auto cfg = handcalc_cfg();
  auto k = handcalc_kind();

  TargetObs front{37.0 + k.length, 10.0, 0.0, &k, true};
  auto b = barrier_values(20.0, k, front, cfg);
  CHECK(b.h == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(b.dhdot_da == doctest::Approx(-(0.5 + 20.0 / 6.0)));
  CHECK(b.hdot_unc == doctest::Approx(-10.0));

  TargetObs still{cfg.D + 5.0 + k.length, 0.0, 0.0, &k, true};
  b = barrier_values(0.0, k, still, cfg);
  CHECK(b.h == doctest::Approx(5.0));
  CHECK(b.hdot_unc == doctest::Approx(0.0));

  // front barrier loses value as the ego accelerates
  TargetObs mover{30.0 + k.length, 8.0, 0.0, &k, true};
  b = barrier_values(12.0, k, mover, cfg);
  CHECK(b.dhdot_da < 0.0);

  // rear barrier gains value as the ego accelerates
  TargetObs rear{-(20.0 + k.length), 15.0, 0.0, &k, false};
  b = barrier_values(5.0, k, rear, cfg);
  CHECK(b.dhdot_da > 0.0);
  CHECK(b.h == doctest::Approx(20.0 - (7.5 + 200.0 / 12 + 2)));
}

TEST_CASE("cbf_qp interval arithmetic") {
  ShieldConfig cfg;
  cfg.gamma_cbf = 1.0;
  auto r = cbf_qp({}, 1.5, -8, 4, cfg);
  REQUIRE(r.has_value());
  CHECK(*r == 1.5);

  // h = 10, relative speed 0, dhdot/da = -1 -> a <= 10
  std::vector<Barrier> bs = {{10.0, 0.0, -1.0}};
  r = cbf_qp(bs, 2.0, -8, 12, cfg);
  REQUIRE(r.has_value());
  CHECK(*r == 2.0);

  // requires a <= -9 with floor at -8
  bs = {{-9.0 / 1.0, 0.0, -1.0}};  // -gamma h = 9 -> a <= -9
  CHECK_FALSE(cbf_qp(bs, 0.0, -8, 4, cfg).has_value());

  // constraint with no accel sensitivity, already violated
  bs = {{-1.0, 0.0, 0.0}};
  CHECK_FALSE(cbf_qp(bs, 0.0, -8, 4, cfg).has_value());
  bs = {{1.0, 0.0, 0.0}};
  CHECK(cbf_qp(bs, 0.0, -8, 4, cfg).has_value());
}

TEST_CASE("cbf_qp agrees with a brute-force grid") {
  ShieldConfig cfg;
  Rng rng(2101);
  const double lo = -8.0, hi = 4.0;
  int feasible_count = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    int nb = rng.uniform_int(4);
    std::vector<Barrier> bs;
    for (int i = 0; i < nb; ++i) {
      Barrier b;
      b.h = rng.uniform(-5, 20);
      b.hdot_unc = rng.uniform(-10, 10);
      b.dhdot_da = rng.uniform() < 0.15 ? 0.0 : rng.uniform(-3, 3);
      bs.push_back(b);
    }
    double a_nom = rng.uniform(lo, hi);
    auto got = cbf_qp(bs, a_nom, lo, hi, cfg);

    bool grid_feasible = false;
    double grid_best = 0.0, best_cost = 1e18;
    for (int gi = 0; gi <= 1200; ++gi) {
      double a = lo + 0.01 * gi;
      bool ok = true;
      for (const Barrier& b : bs)
        if (b.hdot_unc + b.dhdot_da * a < -cfg.gamma_cbf * b.h) ok = false;
      if (!ok) continue;
      grid_feasible = true;
      double cost = std::abs(a - a_nom);
      if (cost < best_cost) {
        best_cost = cost;
        grid_best = a;
      }
    }
    REQUIRE(got.has_value() == grid_feasible);
    if (got) {
      CHECK(std::abs(*got - grid_best) <= 0.02);
      ++feasible_count;
    }
  }
  CHECK(feasible_count > 200);  // the draw exercises both outcomes
}

namespace {

std::vector<VehicleSnapshot> two_car_scene(double gap_centers, double v_ego, double v_front,
                                           double front_accel) {
  std::vector<VehicleSnapshot> vs;
  vs.push_back({0, {100.0, 0.0, v_ego, 0.0}, 0.0, &kSedan, 0});
  vs.push_back({1, {100.0 + gap_centers, 0.0, v_front, 0.0}, front_accel, &kSedan, 0});
  return vs;
}

}  // namespace

TEST_CASE("empty road leaves every action safe") {
  auto net = cav::world::RoadNetwork::highway();
  std::vector<VehicleSnapshot> vs = {{0, {100.0, 3.5, 10.0, 0.0}, 0.0, &kSedan, 1}};
  auto res = check_agent(net, vs, 0, ShieldConfig{});
  CHECK(res.safe_set.actions.size() == kNumActions);
  CHECK_FALSE(res.safe_set.emergency);

  // rightmost lane: change-right is no-such-lane
  vs[0].state.y = 0.0;
  vs[0].lane = 0;
  res = check_agent(net, vs, 0, ShieldConfig{});
  CHECK(res.safe_set.actions.size() == kNumActions - 1);
  CHECK_FALSE(res.safe_set.mask()[int(Action::change_right)]);
}

TEST_CASE("relevant targets per action") {
  auto net = cav::world::RoadNetwork::highway();
  std::vector<VehicleSnapshot> vs;
  vs.push_back({0, {100, 0, 10, 0}, 0.0, &kSedan, 0});
  CHECK(relevant_targets(net, vs, 0, Action::keep_lane_speed).empty());

  vs.push_back({1, {120, 0, 10, 0}, 0.0, &kSedan, 0});    // front same
  vs.push_back({2, {115, 3.5, 10, 0}, 0.0, &kSedan, 1});  // front target
  vs.push_back({3, {90, 3.5, 10, 0}, 0.0, &kSedan, 1});   // rear target
  vs.push_back({4, {130, 7, 10, 0}, 0.0, &kSedan, 2});    // front other side
  vs.push_back({5, {80, 7, 10, 0}, 0.0, &kSedan, 2});     // rear other side
  auto ts = relevant_targets(net, vs, 0, Action::change_left);
  CHECK(ts.size() == 5);
  ts = relevant_targets(net, vs, 0, Action::keep_lane_speed);
  CHECK(ts.size() == 1);  // front same only, nothing behind
}

TEST_CASE("wall ahead forces emergency or brake-only") {
  auto net = cav::world::RoadNetwork::highway();
  ShieldConfig cfg;

  // fast approach: nothing is safe
  auto vs = two_car_scene(3.0 + kSedan.length, 10.0, 0.0, 0.0);
  auto res = check_agent(net, vs, 0, cfg);
  CHECK(res.safe_set.emergency);
  CHECK(res.emergency.accel < -7.0);

  // slow approach: braking is still admissible
  vs = two_car_scene(3.0 + kSedan.length, 2.0, 0.0, 0.0);
  res = check_agent(net, vs, 0, cfg);
  REQUIRE(res.safe_set.actions.size() == 1);
  CHECK(res.safe_set.actions[0] == Action::brake);
  CHECK(res.checks[int(Action::brake)].control.accel ==
        doctest::Approx(-3.7176470588).epsilon(1e-6));
}

TEST_CASE("brake is safe whenever any action is safe in front-conflict scenes") {
  auto net = cav::world::RoadNetwork::highway();
  ShieldConfig cfg;
  Rng rng(33);
  int nontrivial = 0;
  for (int trial = 0; trial < 300; ++trial) {
    auto vs = two_car_scene(rng.uniform(5, 80), rng.uniform(0, 28), rng.uniform(0, 28),
                            rng.uniform(-8, 0));
    auto res = check_agent(net, vs, 0, cfg);
    if (!res.safe_set.actions.empty())
      CHECK(res.safe_set.mask()[int(Action::brake)]);
    if (res.safe_set.emergency || res.safe_set.actions.size() < kNumActions) ++nontrivial;
  }
  CHECK(nontrivial > 30);
}

TEST_CASE("safe set independent of snapshot enumeration order") {
  auto net = cav::world::RoadNetwork::highway();
  auto vs = two_car_scene(25.0, 15.0, 8.0, -2.0);
  vs.push_back({2, {80.0, 3.5, 12.0, 0.0}, 0.0, &kSedan, 1});
  auto a = check_agent(net, vs, 0, ShieldConfig{});
  std::reverse(vs.begin(), vs.end());
  auto b = check_agent(net, vs, 0, ShieldConfig{});
  CHECK(a.safe_set.actions == b.safe_set.actions);
  CHECK(a.safe_set.emergency == b.safe_set.emergency);
  for (int i = 0; i < kNumActions; ++i) {
    CHECK(a.checks[i].safe == b.checks[i].safe);
    CHECK(a.checks[i].control.accel == b.checks[i].control.accel);
  }
}

TEST_CASE("crossing hazard becomes a front target at the intersection") {
  auto net = cav::world::RoadNetwork::intersection_map();
  std::vector<VehicleSnapshot> vs;
  // eastbound ego approaching the box
  vs.push_back({0, {-40.0, -1.75, 8.0, 0.0}, 0.0, &kSedan, 0});
  // northbound hazard closing on the box at speed
  vs.push_back({1, {1.75, -45.0, 10.0, M_PI_2}, 0.0, &kSedan, 8});
  auto ts = relevant_targets(net, vs, 0, Action::keep_lane_speed);
  REQUIRE(ts.size() == 1);
  CHECK(ts[0].front);
  CHECK(ts[0].v == 0.0);                     // stopped virtual target
  CHECK(ts[0].ds_centers == doctest::Approx(41.75));  // conflict point distance

  // hazard already cleared the conflict: no target
  vs[1].state = {1.75, 20.0, 10.0, M_PI_2};
  ts = relevant_targets(net, vs, 0, Action::keep_lane_speed);
  CHECK(ts.empty());

  // hazard far in time: no overlap
  vs[1].state = {1.75, -200.0, 2.0, M_PI_2};
  ts = relevant_targets(net, vs, 0, Action::keep_lane_speed);
  CHECK(ts.empty());
}

namespace {

struct InvarianceOutcome {
  double h_min = 1e18;
  bool infeasible_t0 = false;
};

InvarianceOutcome run_invariance(double gap_centers, double v_e, double v_f, double af,
                                 const ShieldConfig& cfg) {
  auto net = cav::world::RoadNetwork::highway();
  const double dt = 0.1;
  VehicleState ego{50.0, 0.0, v_e, 0.0};
  VehicleState front{50.0 + gap_centers, 0.0, v_f, 0.0};
  double ego_accel = 0.0, front_accel = af;

  InvarianceOutcome out;
  for (int step = 0; step <= cfg.horizon_check; ++step) {
    TargetObs obs{front.x - ego.x, front.v, front_accel, &kSedan, true};
    Barrier b = barrier_values(ego.v, kSedan, obs, cfg);
    out.h_min = std::min(out.h_min, b.h);
    if (step == 0 && !cbf_qp({b}, 0.0, kSedan.accel_min, kSedan.accel_max, cfg))
      out.infeasible_t0 = true;
    if (step == cfg.horizon_check) break;

    std::vector<VehicleSnapshot> vs = {{0, ego, ego_accel, &kSedan, 0},
                                       {1, front, front_accel, &kSedan, 0}};
    auto res = check_agent(net, vs, 0, cfg);
    // adversarial choice: the largest admissible acceleration
    double a_cmd = res.emergency.accel;
    bool found = false;
    for (Action a :
         {Action::keep_lane_speed, Action::brake, Action::throttle1, Action::throttle2,
          Action::throttle3}) {
      const auto& c = res.checks[int(a)];
      if (c.safe && (!found || c.control.accel > a_cmd)) {
        a_cmd = c.control.accel;
        found = true;
      }
    }
    double ev = ego.v;
    ego = cav::dyn::step_bicycle(ego, {a_cmd, 0.0}, dt, kSedan);
    ego_accel = (ego.v - ev) / dt;
    double fv = front.v;
    front = cav::dyn::step_bicycle(front, {af, 0.0}, dt, kSedan);
    front_accel = (front.v - fv) / dt;
  }
  return out;
}

}  // namespace

TEST_CASE("forward invariance under adversarial front braking") {
  ShieldConfig cfg;
  Rng rng(4242);
  int tested = 0, violations = 0;
  while (tested < 250) {
    double gap = rng.uniform(6, 90);
    double v_e = rng.uniform(0, 28);
    double v_f = rng.uniform(0, 28);
    double af = rng.uniform(-8, 4);
    TargetObs obs{gap, v_f, af, &kSedan, true};
    if (barrier_values(v_e, kSedan, obs, cfg).h < 1.0) continue;
    ++tested;
    auto out = run_invariance(gap, v_e, v_f, af, cfg);
    if (out.h_min < -0.5 && !out.infeasible_t0) ++violations;
  }
  CHECK(violations == 0);
}
