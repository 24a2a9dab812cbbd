#include "cav/comms.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "cav/dynamics.hpp"

namespace cav::comms {

namespace {

double dist(double ax, double ay, double bx, double by) {
  return std::hypot(bx - ax, by - ay);
}

}  // namespace

int SceneGraph::ego_node_index() const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].kind == NodeKind::vehicle && nodes[i].ref_id == ego_id) return int(i);
  return -1;
}

bool SceneGraph::has_edge(int a, int b) const {
  auto e = std::minmax(a, b);
  return std::find(edges.begin(), edges.end(), std::make_pair(e.first, e.second)) !=
         edges.end();
}

bool in_infra_zone(const world::RoadNetwork& net, double x, double y) {
  if (net.intersections.empty()) return true;
  if (in_intersection(net, x, y)) return true;
  world::LanePosition lp = project_to_lane(net, x, y);
  if (!lp.valid()) return false;
  for (const world::Intersection& box : net.intersections)
    for (int id : box.entry_lanes)
      if (id == lp.lane_id) {
        const world::Lane& ln = net.lane(id);
        if (ln.cum_s.back() - lp.s <= kInfraApproach) return true;
      }
  return false;
}

ObservationBundle build_observation(const world::RoadNetwork& net,
                                    const std::vector<AgentView>& vehicles, int ego_id,
                                    bool comm_enabled, int timestep) {
  const AgentView* ego = nullptr;
  for (const AgentView& v : vehicles)
    if (v.id == ego_id) ego = &v;
  if (!ego) throw std::invalid_argument("build_observation: unknown ego id");

  ObservationBundle b;
  b.ego = *ego;
  b.timestep = timestep;
  for (const AgentView& v : vehicles) {
    if (v.id == ego_id) continue;
    double d = dist(ego->x, ego->y, v.x, v.y);
    if (comm_enabled && v.is_cav && d <= kCommRange)
      b.shared.push_back({v.id, v.x, v.y, v.v, v.psi, v.accel, true, v.is_cav});
    if (comm_enabled && in_infra_zone(net, v.x, v.y))
      b.infra.push_back({v.id, v.x, v.y, v.v, v.psi, 0.0, false, v.is_cav});
    double fwd = std::cos(ego->psi) * (v.x - ego->x) + std::sin(ego->psi) * (v.y - ego->y);
    if (d <= kSensingRange && fwd >= 0.0)
      b.detected.push_back({v.id, v.x, v.y, v.v, v.psi, 0.0, false, v.is_cav});
  }
  return b;
}

SceneGraph build_scene_graph(const ObservationBundle& bundle, const world::RoadNetwork& net) {
  // union of sources, richer fields win: shared > infra > detected
  std::map<int, SourceObs> known;
  const AgentView& e = bundle.ego;
  known[e.id] = {e.id, e.x, e.y, e.v, e.psi, e.accel, true, e.is_cav};
  auto merge = [&known](const std::vector<SourceObs>& src) {
    for (const SourceObs& o : src)
      if (!known.count(o.id)) known[o.id] = o;
  };
  merge(bundle.shared);
  merge(bundle.infra);
  merge(bundle.detected);

  SceneGraph g;
  g.ego_id = e.id;
  g.timestep = bundle.timestep;

  struct Host {
    bool intersection = false;
    int ref = -1;
  };
  std::vector<Host> hosts;
  std::vector<const SourceObs*> order;
  for (const auto& [id, o] : known) order.push_back(&o);  // map is id-sorted

  for (const SourceObs* o : order) {
    GraphNode n;
    n.kind = NodeKind::vehicle;
    n.ref_id = o->id;
    n.f = {(o->x - e.x) / kPosNorm,
           (o->y - e.y) / kPosNorm,
           o->v / kSpeedNorm,
           dyn::wrap_angle(o->psi - e.psi),
           o->accel,
           o->id == e.id ? 1.0 : 0.0,
           o->is_cav ? 1.0 : 0.0,
           double(int(NodeKind::vehicle))};
    g.nodes.push_back(n);
    Host h;
    int box = containing_intersection(net, o->x, o->y);
    if (box >= 0) {
      h.intersection = true;
      h.ref = box;
    } else {
      h.ref = nearest_lane(net, o->x, o->y).lane_id;
    }
    hosts.push_back(h);
  }

  // road / intersection nodes for every host, id-sorted
  std::vector<int> lane_ids, box_ids;
  for (const Host& h : hosts)
    (h.intersection ? box_ids : lane_ids).push_back(h.ref);
  auto uniq = [](std::vector<int>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq(lane_ids);
  uniq(box_ids);

  std::map<int, int> lane_node, box_node;
  for (int id : lane_ids) {
    GraphNode n;
    n.kind = NodeKind::road;
    n.ref_id = id;
    n.f[kFeatureDim - 1] = double(int(NodeKind::road));
    lane_node[id] = int(g.nodes.size());
    g.nodes.push_back(n);
  }
  for (int id : box_ids) {
    GraphNode n;
    n.kind = NodeKind::intersection;
    n.ref_id = id;
    n.f[kFeatureDim - 1] = double(int(NodeKind::intersection));
    box_node[id] = int(g.nodes.size());
    g.nodes.push_back(n);
  }

  auto add_edge = [&g](int a, int b) {
    auto pr = std::minmax(a, b);
    g.edges.emplace_back(pr.first, pr.second);
  };
  for (std::size_t i = 0; i < order.size(); ++i)
    add_edge(int(i), hosts[i].intersection ? box_node[hosts[i].ref] : lane_node[hosts[i].ref]);
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t j = i + 1; j < order.size(); ++j)
      if (dist(order[i]->x, order[i]->y, order[j]->x, order[j]->y) <= kCommRange)
        add_edge(int(i), int(j));
  for (const auto& [bid, bnode] : box_node) {
    const world::Intersection& box = net.intersections[bid];
    auto connect = [&](const std::vector<int>& ids) {
      for (int lid : ids)
        if (lane_node.count(lid)) add_edge(lane_node[lid], bnode);
    };
    connect(box.entry_lanes);
    connect(box.exit_lanes);
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  return g;
}

}  // namespace cav::comms
