#pragma once
#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cav::world {

using Point = std::array<double, 2>;

struct Lane {
  int id = -1;
  std::vector<Point> centerline;
  double width = 3.5;
  int left_neighbor = -1;
  int right_neighbor = -1;
  std::vector<int> successors;

  std::vector<double> cum_s;  // filled by RoadNetwork::finalize
  double length() const { return cum_s.empty() ? 0.0 : cum_s.back(); }
};

struct Intersection {
  std::vector<Point> polygon;  // convex, counter-clockwise
  std::vector<int> entry_lanes;
  std::vector<int> exit_lanes;
};

struct RoadNetwork {
  std::vector<Lane> lanes;
  std::vector<Intersection> intersections;

  const Lane& lane(int id) const;
  void finalize();  // arclengths + structural validation, throws on bad maps

  static RoadNetwork highway();           // straight 3-lane, 500 m
  static RoadNetwork intersection_map();  // two 2-lane roads crossing a 20 m box
  static RoadNetwork load_json(const std::string& path);
  std::string to_json() const;
};

struct LanePosition {
  int lane_id = -1;
  double s = 0.0;
  double d = 0.0;  // left positive
  bool valid() const { return lane_id >= 0; }
};

struct LanePoint {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

// Nearest eligible lane (|d| <= width/2 + 1 m), ties to the lower id;
// invalid result = off-road.
LanePosition project_to_lane(const RoadNetwork& net, double x, double y);

// Same but restricted to hint, its neighbors and successors, falling back to
// the global search. Keeps lane identity stable where corridors overlap
// (inside the intersection box).
LanePosition project_with_hint(const RoadNetwork& net, double x, double y, int hint_lane);

// Globally nearest lane, no corridor eligibility; always valid on a non-empty
// network.
LanePosition nearest_lane(const RoadNetwork& net, double x, double y);

bool on_road(const RoadNetwork& net, double x, double y);
bool in_intersection(const RoadNetwork& net, double x, double y);
int containing_intersection(const RoadNetwork& net, double x, double y);  // -1 if none

LanePoint lane_point(const Lane& lane, double s);  // s clamped to [0, length]

// A lane plus its predecessors/successors laid out on one longitudinal axis;
// s = 0 at the base lane's start.
struct Chain {
  struct Link {
    int lane_id;
    double offset;
  };
  std::vector<Link> links;
};

Chain build_chain(const RoadNetwork& net, int base_lane, double reach = 300.0);

struct ChainCoord {
  double s = 0.0;
  double d = 0.0;
  int lane_id = -1;
};

// Membership test: point inside some link's corridor.
std::optional<ChainCoord> chain_coord(const RoadNetwork& net, const Chain& c, double x,
                                      double y);
LanePoint chain_point(const RoadNetwork& net, const Chain& c, double s);

// First transversal crossing between two chains: (s on a, s on b).
std::optional<std::pair<double, double>> chain_crossing(const RoadNetwork& net,
                                                        const Chain& a, const Chain& b);

struct VehicleRef {
  int id = -1;
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;
  double psi = 0.0;
  int lane = -1;  // current lane hint
};

enum class Relation {
  front_same,
  rear_same,
  front_target,
  rear_target,
  front_other,
  rear_other,
};

struct Neighbor {
  int id = -1;
  double ds = 0.0;  // chain gap, centers, positive = ahead
};

// side: +1 left, -1 right (lane-change relations), 0 otherwise. Lookahead
// 120 m in both directions.
std::optional<Neighbor> neighbor_query(const RoadNetwork& net,
                                       const std::vector<VehicleRef>& vehicles, int ego_id,
                                       Relation rel, int side = 0);

enum class LaneKeepAction { keep, change_left, change_right };

// Preview point max(8, 1.5 v) ahead on the current or neighbor chain.
// nullopt = no such lane.
std::optional<LanePoint> waypoint_for_action(const RoadNetwork& net, double x, double y,
                                             double v, int lane_hint, LaneKeepAction a);

}  // namespace cav::world
