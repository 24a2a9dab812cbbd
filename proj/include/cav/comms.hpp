#pragma once

#include <array>
#include <vector>

#include "cav/world.hpp"

namespace cav::comms {

inline constexpr int kFeatureDim = 8;
inline constexpr double kCommRange = 100.0;      // m, V2V
inline constexpr double kSensingRange = 50.0;    // m, own perception
inline constexpr double kInfraApproach = 80.0;   // m upstream of the box
inline constexpr double kPosNorm = 100.0;
inline constexpr double kSpeedNorm = 30.0;

// ground-truth view of one vehicle handed to the communication layer
struct AgentView {
  int id = -1;
  double x = 0, y = 0, v = 0, psi = 0;
  double accel = 0;
  bool is_cav = false;
  int lane = -1;
};

struct SourceObs {
  int id = -1;
  double x = 0, y = 0, v = 0, psi = 0;
  double accel = 0;
  bool has_accel = false;
  bool is_cav = false;
};

struct ObservationBundle {
  AgentView ego;
  std::vector<SourceObs> shared;    // V2V, carries accel
  std::vector<SourceObs> infra;     // roadside radar broadcast
  std::vector<SourceObs> detected;  // own sensing
  int timestep = 0;
};

enum class NodeKind { vehicle = 0, road = 1, intersection = 2 };

struct GraphNode {
  NodeKind kind = NodeKind::vehicle;
  int ref_id = -1;  // vehicle id, lane id, or intersection index
  std::array<double, kFeatureDim> f{};
};

struct SceneGraph {
  std::vector<GraphNode> nodes;
  std::vector<std::pair<int, int>> edges;  // undirected (lo, hi) node indices
  int ego_id = -1;
  int timestep = 0;

  int ego_node_index() const;
  bool has_edge(int a, int b) const;
};

// True inside the roadside radar footprint: the box plus the last
// kInfraApproach metres of every entry lane. A network without
// intersections is covered end to end.
bool in_infra_zone(const world::RoadNetwork& net, double x, double y);

ObservationBundle build_observation(const world::RoadNetwork& net,
                                    const std::vector<AgentView>& vehicles, int ego_id,
                                    bool comm_enabled, int timestep = 0);

SceneGraph build_scene_graph(const ObservationBundle& bundle, const world::RoadNetwork& net);

}  // namespace cav::comms
