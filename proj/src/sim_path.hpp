#pragma once

// Route resolution and drivable path geometry shared by the script generator
// and the synthesizer.

#include <optional>
#include <vector>

#include "drivesense/geo.hpp"
#include "drivesense/road_network.hpp"
#include "drivesense/sim.hpp"

namespace drivesense::sim::detail {

inline constexpr double kTurnRadiusM = 10.0;
inline constexpr double kMaxLateralMps2 = 2.0;
inline constexpr double kCruiseFactor = 0.9;

struct ResolvedRoute {
  std::vector<net::NodeId> nodes;        // after loop expansion
  std::vector<std::size_t> edges;        // edge indices, nodes.size() - 1 of them
  std::vector<std::size_t> from_script;  // script route index -> expanded index
  std::optional<std::size_t> lost_at;    // expanded index where the loops start
  std::optional<std::size_t> lost_injection;
};

/// Explicit node list or shortest path, then block loops for getting_lost.
ResolvedRoute resolve_route(const DriveScript& script, const net::RoadNetwork& net);

/// Script route before expansion (shortest path when only endpoints are given).
std::vector<net::NodeId> base_route(const DriveScript& script, const net::RoadNetwork& net);

struct Piece {
  double s0 = 0.0;
  double len = 0.0;
  Vec2 p0;
  double heading0 = 0.0;  // rad, counter-clockwise from east
  double kappa = 0.0;     // signed curvature, + left
  double vmax = 0.0;      // m/s
};

class DrivePath {
 public:
  DrivePath(const net::RoadNetwork& net, const ResolvedRoute& route, double start_offset_m,
            std::optional<double> end_offset_m);

  double length() const { return length_; }
  const std::vector<Piece>& pieces() const { return pieces_; }
  const Piece& piece_at(double s) const;
  Vec2 position(double s) const;
  double heading(double s) const;
  double curvature(double s) const { return piece_at(s).kappa; }

  /// Per expanded route node: s of the node (arc midpoint on turns) and the
  /// turn arc, if any. First and last node are not on the path.
  double node_s(std::size_t i) const { return node_s_[i]; }
  std::optional<std::pair<double, double>> node_arc(std::size_t i) const { return node_arc_[i]; }
  /// s span of route edge j.
  double edge_s0(std::size_t j) const { return edge_s0_[j]; }
  double edge_s1(std::size_t j) const { return edge_s1_[j]; }
  double turn_speed() const;

 private:
  std::vector<Piece> pieces_;
  std::vector<double> node_s_;
  std::vector<std::optional<std::pair<double, double>>> node_arc_;
  std::vector<double> edge_s0_, edge_s1_;
  double length_ = 0.0;
};

}  // namespace drivesense::sim::detail
