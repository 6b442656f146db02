#pragma once

// Directed road graph with polyline edges, a uniform-grid spatial index and
// shortest paths.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "drivesense/geo.hpp"

namespace drivesense::net {

using NodeId = std::int64_t;
using EdgeId = std::int64_t;

enum class RoadClass { Highway, Arterial, Local };
std::string_view to_string(RoadClass c);
RoadClass road_class_from_string(std::string_view s);

struct Node {
  NodeId id = 0;
  LatLon pos;
};

struct Edge {
  EdgeId id = 0;
  NodeId from = 0;
  NodeId to = 0;
  std::vector<LatLon> polyline;
  double length_m = 0.0;
  RoadClass road_class = RoadClass::Local;
  double speed_limit_kph = 50.0;
};

/// Position of a point relative to one edge.
struct EdgeProjection {
  double distance_m = 0.0;
  double offset_m = 0.0;   // along the edge, in [0, length_m]
  double lateral_m = 0.0;  // + left of the direction of travel
};

class RoadNetwork {
 public:
  RoadNetwork() = default;
  /// Validates and indexes. Throws EmptyNetwork / InvariantViolation.
  RoadNetwork(std::vector<Node> nodes, std::vector<Edge> edges);

  static RoadNetwork from_json(const nlohmann::json& j);
  static RoadNetwork parse(std::string_view text);
  nlohmann::json to_json() const;

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }  // sorted by id

  std::size_t node_index(NodeId id) const;
  std::size_t edge_index(EdgeId id) const;
  bool has_node(NodeId id) const { return node_idx_.count(id) > 0; }
  bool has_edge(EdgeId id) const { return edge_idx_.count(id) > 0; }
  const Node& node(NodeId id) const { return nodes_[node_index(id)]; }
  const Edge& edge(EdgeId id) const { return edges_[edge_index(id)]; }

  /// Outgoing / incoming edge indices, ascending by edge id.
  const std::vector<std::size_t>& out_edges(std::size_t node_idx) const { return out_[node_idx]; }
  const std::vector<std::size_t>& in_edges(std::size_t node_idx) const { return in_[node_idx]; }

  const LocalProjection& projection() const { return proj_; }
  const std::vector<Vec2>& edge_xy(std::size_t edge_idx) const { return xy_[edge_idx]; }

  /// Weakly connected component of each node index.
  std::size_t component_of(std::size_t node_idx) const { return component_[node_idx]; }
  std::size_t component_count() const { return n_components_; }

  EdgeProjection project(std::size_t edge_idx, Vec2 p) const;
  EdgeProjection project(std::size_t edge_idx, LatLon p) const { return project(edge_idx, proj_.to_xy(p)); }
  /// Point at offset_m along the edge.
  LatLon point_at(std::size_t edge_idx, double offset_m) const;
  /// Direction of travel (unit vector, local plane) at offset_m.
  Vec2 heading_at(std::size_t edge_idx, double offset_m) const;

 private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::unordered_map<NodeId, std::size_t> node_idx_;
  std::unordered_map<EdgeId, std::size_t> edge_idx_;
  std::vector<std::vector<std::size_t>> out_, in_;
  LocalProjection proj_;
  std::vector<std::vector<Vec2>> xy_;
  std::vector<std::vector<double>> cum_;  // projected cumulative lengths
  std::vector<std::size_t> component_;
  std::size_t n_components_ = 0;
};

/// Polyline length by summed haversine segments.
double polyline_length_m(std::span<const LatLon> pts);

struct EdgeDistance {
  std::size_t edge_idx = 0;
  EdgeId edge_id = 0;
  double distance_m = 0.0;
};

/// Uniform grid over the network bounding box in the local plane.
class SpatialIndex {
 public:
  SpatialIndex(const RoadNetwork& net, double cell_m = 250.0);

  /// The k nearest edges by point-to-polyline distance, ties by lower id.
  std::vector<EdgeDistance> nearest_edges(LatLon p, std::size_t k) const;
  /// Nearest edges no farther than radius_m, at most k of them.
  std::vector<EdgeDistance> nearest_within(LatLon p, std::size_t k, double radius_m) const;

  /// Edge indices listed in the cell containing p (empty outside the grid).
  std::vector<std::size_t> cell_edges(LatLon p) const;
  double cell_m() const { return cell_m_; }
  std::size_t cols() const { return cols_; }
  std::size_t rows() const { return rows_; }
  const RoadNetwork& network() const { return *net_; }

 private:
  const RoadNetwork* net_;
  double cell_m_;
  Vec2 min_{};
  std::size_t cols_ = 0, rows_ = 0;
  std::vector<std::vector<std::size_t>> cells_;
};

/// Exhaustive scan; the oracle the index must agree with.
std::vector<EdgeDistance> nearest_edges_exhaustive(const RoadNetwork& net, LatLon p, std::size_t k);

struct Path {
  std::vector<EdgeId> edges;
  double length_m = 0.0;
};

/// Minimal-length path; among equal lengths the lexicographically smallest
/// edge-id sequence. Throws Unreachable.
Path shortest_path(const RoadNetwork& net, NodeId from, NodeId to);

/// Network distance from every node to `to` (infinity if unreachable),
/// indexed by node index.
std::vector<double> distances_to(const RoadNetwork& net, NodeId to);
/// Network distance from `from` to every node, stopping beyond max_m.
std::vector<double> distances_from(const RoadNetwork& net, std::size_t from_idx, double max_m);

}  // namespace drivesense::net
