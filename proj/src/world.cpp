#include "cav/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace cav::world {

namespace {

constexpr double kCorridorTol = 1.0;  // extra margin beyond width/2
constexpr double kLookahead = 120.0;

struct Proj {
  double s = 0.0;
  double d = 0.0;     // signed lateral
  double dist = 0.0;  // distance to the polyline
};

Proj project_on_lane(const Lane& ln, double x, double y) {
  Proj best;
  best.dist = 1e18;
  for (std::size_t i = 0; i + 1 < ln.centerline.size(); ++i) {
    const auto& a = ln.centerline[i];
    const auto& b = ln.centerline[i + 1];
    double ex = b[0] - a[0], ey = b[1] - a[1];
    double len2 = ex * ex + ey * ey;
    double t = ((x - a[0]) * ex + (y - a[1]) * ey) / len2;
    t = std::clamp(t, 0.0, 1.0);
    double px = a[0] + t * ex, py = a[1] + t * ey;
    double dx = x - px, dy = y - py;
    double dist = std::hypot(dx, dy);
    if (dist < best.dist) {
      double cross = ex * (y - a[1]) - ey * (x - a[0]);
      best.dist = dist;
      best.d = cross >= 0.0 ? dist : -dist;
      best.s = ln.cum_s[i] + t * std::sqrt(len2);
    }
  }
  return best;
}

bool point_in_polygon(const std::vector<Point>& poly, double x, double y) {
  bool in = false;
  std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    if ((poly[i][1] > y) != (poly[j][1] > y) &&
        x < (poly[j][0] - poly[i][0]) * (y - poly[i][1]) / (poly[j][1] - poly[i][1]) +
                poly[i][0])
      in = !in;
  }
  return in;
}

int neighbor_of(const Lane& ln, int side) {
  return side > 0 ? ln.left_neighbor : ln.right_neighbor;
}

}  // namespace

const Lane& RoadNetwork::lane(int id) const {
  if (id < 0 || std::size_t(id) >= lanes.size())
    throw std::out_of_range("no lane with id " + std::to_string(id));
  return lanes[id];
}

void RoadNetwork::finalize() {
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    Lane& ln = lanes[i];
    if (ln.id != int(i)) throw std::invalid_argument("lane ids must equal their index");
    if (ln.centerline.size() < 2)
      throw std::invalid_argument("lane " + std::to_string(ln.id) + ": centerline too short");
    if (!(ln.width > 0))
      throw std::invalid_argument("lane " + std::to_string(ln.id) + ": bad width");
    ln.cum_s.assign(ln.centerline.size(), 0.0);
    for (std::size_t p = 0; p + 1 < ln.centerline.size(); ++p) {
      double dx = ln.centerline[p + 1][0] - ln.centerline[p][0];
      double dy = ln.centerline[p + 1][1] - ln.centerline[p][1];
      double seg = std::hypot(dx, dy);
      if (seg <= 0.0)
        throw std::invalid_argument("lane " + std::to_string(ln.id) +
                                    ": repeated centerline point");
      ln.cum_s[p + 1] = ln.cum_s[p] + seg;
    }
  }
  auto check_ref = [&](int id, const char* what) {
    if (id != -1 && (id < 0 || std::size_t(id) >= lanes.size()))
      throw std::invalid_argument(std::string("unresolvable ") + what + " id " +
                                  std::to_string(id));
  };
  for (const Lane& ln : lanes) {
    check_ref(ln.left_neighbor, "left_neighbor");
    check_ref(ln.right_neighbor, "right_neighbor");
    for (int s : ln.successors) check_ref(s, "successor");
    if (ln.left_neighbor != -1 && lanes[ln.left_neighbor].right_neighbor != ln.id)
      throw std::invalid_argument("asymmetric neighbors at lane " + std::to_string(ln.id));
    if (ln.right_neighbor != -1 && lanes[ln.right_neighbor].left_neighbor != ln.id)
      throw std::invalid_argument("asymmetric neighbors at lane " + std::to_string(ln.id));
  }
  for (const Intersection& box : intersections) {
    if (box.polygon.size() < 3) throw std::invalid_argument("intersection polygon too small");
    for (int id : box.entry_lanes) check_ref(id, "entry lane");
    for (int id : box.exit_lanes) check_ref(id, "exit lane");
  }
}

RoadNetwork RoadNetwork::highway() {
  RoadNetwork net;
  for (int i = 0; i < 3; ++i) {
    Lane ln;
    ln.id = i;
    ln.width = 3.5;
    double y = 3.5 * i;
    ln.centerline = {{0.0, y}, {500.0, y}};
    ln.left_neighbor = i < 2 ? i + 1 : -1;  // +y is the drivers' left
    ln.right_neighbor = i > 0 ? i - 1 : -1;
    net.lanes.push_back(std::move(ln));
  }
  net.finalize();
  return net;
}

RoadNetwork RoadNetwork::intersection_map() {
  // Two perpendicular 2-lane-per-direction roads through a 20 m box at the
  // origin, right-hand traffic. Per direction: two approach lanes ending at
  // the box edge, each continuing into a through lane that crosses the box.
  RoadNetwork net;
  constexpr double kArm = 250.0, kBox = 10.0;
  constexpr double kInner = 1.75, kOuter = 5.25;

  struct Dir {
    double hx, hy;  // heading unit vector
    double rx, ry;  // drivers' right-hand unit vector
  };
  // east, west, north, south
  const Dir dirs[4] = {{1, 0, 0, -1}, {-1, 0, 0, 1}, {0, 1, 1, 0}, {0, -1, -1, 0}};

  auto mk = [&](const Dir& d, double offset, double s0, double s1) {
    // points at arclength s along the travel direction, shifted to the right
    Point a{d.hx * s0 + d.rx * offset, d.hy * s0 + d.ry * offset};
    Point b{d.hx * s1 + d.rx * offset, d.hy * s1 + d.ry * offset};
    Lane ln;
    ln.width = 3.5;
    ln.centerline = {a, b};
    return ln;
  };

  for (int di = 0; di < 4; ++di) {
    const Dir& d = dirs[di];
    int base = di * 4;
    Lane ai = mk(d, kInner, -kArm, -kBox);  // approach, inner (left) lane
    Lane ao = mk(d, kOuter, -kArm, -kBox);  // approach, outer (right) lane
    Lane ti = mk(d, kInner, -kBox, kArm);   // through + exit
    Lane to = mk(d, kOuter, -kBox, kArm);
    ai.id = base;
    ao.id = base + 1;
    ti.id = base + 2;
    to.id = base + 3;
    ai.right_neighbor = ao.id;
    ao.left_neighbor = ai.id;
    ti.right_neighbor = to.id;
    to.left_neighbor = ti.id;
    ai.successors = {ti.id};
    ao.successors = {to.id};
    net.lanes.push_back(ai);
    net.lanes.push_back(ao);
    net.lanes.push_back(ti);
    net.lanes.push_back(to);
  }

  Intersection box;
  box.polygon = {{-kBox, -kBox}, {kBox, -kBox}, {kBox, kBox}, {-kBox, kBox}};
  for (int di = 0; di < 4; ++di) {
    box.entry_lanes.push_back(di * 4);
    box.entry_lanes.push_back(di * 4 + 1);
    box.exit_lanes.push_back(di * 4 + 2);
    box.exit_lanes.push_back(di * 4 + 3);
  }
  net.intersections.push_back(std::move(box));
  net.finalize();
  return net;
}

std::string RoadNetwork::to_json() const {
  nlohmann::json j;
  j["lanes"] = nlohmann::json::array();
  for (const Lane& ln : lanes) {
    nlohmann::json jl;
    jl["id"] = ln.id;
    jl["width"] = ln.width;
    jl["centerline"] = nlohmann::json::array();
    for (const auto& p : ln.centerline) jl["centerline"].push_back({p[0], p[1]});
    jl["left"] = ln.left_neighbor;
    jl["right"] = ln.right_neighbor;
    jl["successors"] = ln.successors;
    j["lanes"].push_back(jl);
  }
  j["intersections"] = nlohmann::json::array();
  for (const Intersection& box : intersections) {
    nlohmann::json jb;
    jb["polygon"] = nlohmann::json::array();
    for (const auto& p : box.polygon) jb["polygon"].push_back({p[0], p[1]});
    jb["entry_lanes"] = box.entry_lanes;
    jb["exit_lanes"] = box.exit_lanes;
    j["intersections"].push_back(jb);
  }
  return j.dump(2);
}

RoadNetwork RoadNetwork::load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open map file " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("map file " + path + ": " + e.what());
  }
  RoadNetwork net;
  try {
    for (const auto& jl : j.at("lanes")) {
      Lane ln;
      ln.id = jl.at("id").get<int>();
      ln.width = jl.at("width").get<double>();
      for (const auto& p : jl.at("centerline"))
        ln.centerline.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      ln.left_neighbor = jl.value("left", -1);
      ln.right_neighbor = jl.value("right", -1);
      if (jl.contains("successors"))
        ln.successors = jl.at("successors").get<std::vector<int>>();
      net.lanes.push_back(std::move(ln));
    }
    for (const auto& jb : j.value("intersections", nlohmann::json::array())) {
      Intersection box;
      for (const auto& p : jb.at("polygon"))
        box.polygon.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      if (jb.contains("entry_lanes"))
        box.entry_lanes = jb.at("entry_lanes").get<std::vector<int>>();
      if (jb.contains("exit_lanes"))
        box.exit_lanes = jb.at("exit_lanes").get<std::vector<int>>();
      net.intersections.push_back(std::move(box));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("map file " + path + ": " + e.what());
  }
  net.finalize();
  return net;
}

LanePosition project_to_lane(const RoadNetwork& net, double x, double y) {
  LanePosition best;
  double best_dist = 1e18;
  for (const Lane& ln : net.lanes) {
    Proj p = project_on_lane(ln, x, y);
    if (p.dist > ln.width / 2 + kCorridorTol) continue;
    if (p.dist < best_dist) {
      best_dist = p.dist;
      best = {ln.id, p.s, p.d};
    }
  }
  return best;
}

LanePosition project_with_hint(const RoadNetwork& net, double x, double y, int hint_lane) {
  if (hint_lane < 0 || std::size_t(hint_lane) >= net.lanes.size())
    return project_to_lane(net, x, y);
  std::vector<int> cands{hint_lane};
  const Lane& h = net.lane(hint_lane);
  if (h.left_neighbor != -1) cands.push_back(h.left_neighbor);
  if (h.right_neighbor != -1) cands.push_back(h.right_neighbor);
  for (int s : h.successors) {
    cands.push_back(s);
    const Lane& sl = net.lane(s);
    if (sl.left_neighbor != -1) cands.push_back(sl.left_neighbor);
    if (sl.right_neighbor != -1) cands.push_back(sl.right_neighbor);
  }
  LanePosition best;
  double best_dist = 1e18;
  for (int id : cands) {
    Proj p = project_on_lane(net.lane(id), x, y);
    if (p.dist > net.lane(id).width / 2 + kCorridorTol) continue;
    if (p.dist < best_dist) {
      best_dist = p.dist;
      best = {id, p.s, p.d};
    }
  }
  return best.valid() ? best : project_to_lane(net, x, y);
}

LanePosition nearest_lane(const RoadNetwork& net, double x, double y) {
  LanePosition best;
  double best_dist = 1e18;
  for (const Lane& ln : net.lanes) {
    Proj p = project_on_lane(ln, x, y);
    if (p.dist < best_dist) {
      best_dist = p.dist;
      best = {ln.id, p.s, p.d};
    }
  }
  return best;
}

bool in_intersection(const RoadNetwork& net, double x, double y) {
  return containing_intersection(net, x, y) >= 0;
}

int containing_intersection(const RoadNetwork& net, double x, double y) {
  for (std::size_t i = 0; i < net.intersections.size(); ++i)
    if (point_in_polygon(net.intersections[i].polygon, x, y)) return int(i);
  return -1;
}

bool on_road(const RoadNetwork& net, double x, double y) {
  if (project_to_lane(net, x, y).valid()) return true;
  return in_intersection(net, x, y);
}

LanePoint lane_point(const Lane& ln, double s) {
  s = std::clamp(s, 0.0, ln.length());
  std::size_t i = 0;
  while (i + 2 < ln.centerline.size() && s > ln.cum_s[i + 1]) ++i;
  const auto& a = ln.centerline[i];
  const auto& b = ln.centerline[i + 1];
  double seg = ln.cum_s[i + 1] - ln.cum_s[i];
  double t = (s - ln.cum_s[i]) / seg;
  return {a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]),
          std::atan2(b[1] - a[1], b[0] - a[0])};
}

Chain build_chain(const RoadNetwork& net, int base_lane, double reach) {
  Chain c;
  std::set<int> seen;
  // predecessors, nearest first
  double off = 0.0;
  int cur = base_lane;
  std::vector<Chain::Link> preds;
  while (off > -reach) {
    int pred = -1;
    for (const Lane& ln : net.lanes) {
      if (seen.count(ln.id) || ln.id == cur) continue;
      for (int s : ln.successors)
        if (s == cur && (pred == -1 || ln.id < pred)) pred = ln.id;
    }
    if (pred == -1) break;
    off -= net.lane(pred).length();
    preds.push_back({pred, off});
    seen.insert(pred);
    cur = pred;
  }
  for (auto it = preds.rbegin(); it != preds.rend(); ++it) c.links.push_back(*it);

  c.links.push_back({base_lane, 0.0});
  seen.insert(base_lane);
  off = net.lane(base_lane).length();
  cur = base_lane;
  while (off < reach) {
    const auto& succ = net.lane(cur).successors;
    int next = -1;
    for (int s : succ)
      if (!seen.count(s) && (next == -1 || s < next)) next = s;
    if (next == -1) break;
    c.links.push_back({next, off});
    seen.insert(next);
    off += net.lane(next).length();
    cur = next;
  }
  return c;
}

namespace {

// nearest link regardless of corridor eligibility
ChainCoord chain_coord_any(const RoadNetwork& net, const Chain& c, double x, double y) {
  ChainCoord best;
  double best_dist = 1e18;
  for (const auto& link : c.links) {
    Proj p = project_on_lane(net.lane(link.lane_id), x, y);
    if (p.dist < best_dist) {
      best_dist = p.dist;
      best = {link.offset + p.s, p.d, link.lane_id};
    }
  }
  return best;
}

}  // namespace

std::optional<ChainCoord> chain_coord(const RoadNetwork& net, const Chain& c, double x,
                                      double y) {
  ChainCoord best;
  double best_dist = 1e18;
  for (const auto& link : c.links) {
    const Lane& ln = net.lane(link.lane_id);
    Proj p = project_on_lane(ln, x, y);
    if (p.dist > ln.width / 2 + kCorridorTol) continue;
    if (p.dist < best_dist) {
      best_dist = p.dist;
      best = {link.offset + p.s, p.d, link.lane_id};
    }
  }
  if (best.lane_id == -1) return std::nullopt;
  return best;
}

LanePoint chain_point(const RoadNetwork& net, const Chain& c, double s) {
  for (std::size_t i = 0; i < c.links.size(); ++i) {
    const Lane& ln = net.lane(c.links[i].lane_id);
    double local = s - c.links[i].offset;
    if (local <= ln.length() || i + 1 == c.links.size())
      return lane_point(ln, local);
  }
  return lane_point(net.lane(c.links.back().lane_id), s - c.links.back().offset);
}

std::optional<std::pair<double, double>> chain_crossing(const RoadNetwork& net,
                                                        const Chain& a, const Chain& b) {
  std::optional<std::pair<double, double>> best;
  for (const auto& la : a.links) {
    const Lane& lna = net.lane(la.lane_id);
    for (const auto& lb : b.links) {
      const Lane& lnb = net.lane(lb.lane_id);
      for (std::size_t i = 0; i + 1 < lna.centerline.size(); ++i) {
        for (std::size_t j = 0; j + 1 < lnb.centerline.size(); ++j) {
          const auto &p = lna.centerline[i], &p2 = lna.centerline[i + 1];
          const auto &q = lnb.centerline[j], &q2 = lnb.centerline[j + 1];
          double rx = p2[0] - p[0], ry = p2[1] - p[1];
          double sx = q2[0] - q[0], sy = q2[1] - q[1];
          double denom = rx * sy - ry * sx;
          double r_len = std::hypot(rx, ry), s_len = std::hypot(sx, sy);
          if (std::abs(denom) < 1e-9 * r_len * s_len) continue;  // parallel
          double qpx = q[0] - p[0], qpy = q[1] - p[1];
          double t = (qpx * sy - qpy * sx) / denom;
          double u = (qpx * ry - qpy * rx) / denom;
          if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) continue;
          double sa = la.offset + lna.cum_s[i] + t * r_len;
          double sb = lb.offset + lnb.cum_s[j] + u * s_len;
          if (!best || sa < best->first) best = {{sa, sb}};
        }
      }
    }
  }
  return best;
}

std::optional<Neighbor> neighbor_query(const RoadNetwork& net,
                                       const std::vector<VehicleRef>& vehicles, int ego_id,
                                       Relation rel, int side) {
  const VehicleRef* ego = nullptr;
  for (const auto& v : vehicles)
    if (v.id == ego_id) ego = &v;
  if (!ego) throw std::invalid_argument("neighbor_query: unknown ego id");

  int ego_lane = ego->lane;
  if (ego_lane < 0) {
    LanePosition lp = project_to_lane(net, ego->x, ego->y);
    if (!lp.valid()) return std::nullopt;
    ego_lane = lp.lane_id;
  }

  int base = ego_lane;
  bool front = rel == Relation::front_same || rel == Relation::front_target ||
               rel == Relation::front_other;
  if (rel == Relation::front_target || rel == Relation::rear_target) {
    base = neighbor_of(net.lane(ego_lane), side);
    if (base == -1) return std::nullopt;
  } else if (rel == Relation::front_other || rel == Relation::rear_other) {
    int target = neighbor_of(net.lane(ego_lane), side);
    if (target == -1) return std::nullopt;
    base = neighbor_of(net.lane(target), side);
    if (base == -1) return std::nullopt;
  }

  Chain chain = build_chain(net, base);
  double s_ego = chain_coord_any(net, chain, ego->x, ego->y).s;

  std::optional<Neighbor> best;
  for (const auto& v : vehicles) {
    if (v.id == ego_id) continue;
    auto coord = chain_coord(net, chain, v.x, v.y);
    if (!coord) continue;
    double ds = coord->s - s_ego;
    if (front) {
      if (ds <= 1e-9 || ds > kLookahead) continue;
      if (!best || ds < best->ds || (ds == best->ds && v.id < best->id)) best = {v.id, ds};
    } else {
      if (ds >= -1e-9 || ds < -kLookahead) continue;
      if (!best || ds > best->ds || (ds == best->ds && v.id < best->id)) best = {v.id, ds};
    }
  }
  return best;
}

std::optional<LanePoint> waypoint_for_action(const RoadNetwork& net, double x, double y,
                                             double v, int lane_hint, LaneKeepAction a) {
  LanePosition lp = project_with_hint(net, x, y, lane_hint);
  if (!lp.valid()) return std::nullopt;
  int base = lp.lane_id;
  if (a != LaneKeepAction::keep) {
    base = neighbor_of(net.lane(lp.lane_id), a == LaneKeepAction::change_left ? 1 : -1);
    if (base == -1) return std::nullopt;
  }
  Chain chain = build_chain(net, base);
  double s0 = chain_coord_any(net, chain, x, y).s;
  double preview = std::max(8.0, 1.5 * v);
  return chain_point(net, chain, s0 + preview);
}

}  // namespace cav::world
