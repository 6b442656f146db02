#pragma once

// HMM map matching, detour / getting-lost analysis and lane deviation.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drivesense/records.hpp"
#include "drivesense/road_network.hpp"

namespace drivesense::net {

/// Positional standard deviation used for emissions.
double sigma_for(FixQuality q);

struct MatchParams {
  std::size_t k = 8;
  double radius_m = 200.0;
  double beta_m = 5.0;           // transition scale
  double prune_log = 50.0;       // drop candidates this far below the best emission
  double route_bound_m = 500.0;  // minimum Dijkstra horizon between fixes
};

struct Assignment {
  std::size_t fix_index = 0;  // index into the input fixes
  EdgeId edge_id = 0;
  double offset_m = 0.0;
  double lateral_m = 0.0;
  std::size_t seq_index = 0;  // position of edge_id in MatchedPath::edge_sequence
};

struct MatchedPath {
  std::vector<Assignment> assignments;
  std::vector<EdgeId> edge_sequence;
  std::vector<std::size_t> off_network;  // fix indices with no edge within radius
};

/// Viterbi over the k nearest edges of every positioned fix. Fixes without
/// candidates are flagged off-network and split the chain.
/// Throws NoCandidates when fewer than 2 fixes are positioned or none match.
MatchedPath match_trajectory(std::span<const GnssFix> fixes, const SpatialIndex& index,
                             const MatchParams& params = {});

std::string to_json_line(const Assignment& a);

/// Sum of full edge lengths along the sequence.
double driven_length_m(const MatchedPath& m, const RoadNetwork& net);

struct Detour {
  double driven_m = 0.0;
  double shortest_m = 0.0;
  double ratio = 1.0;
};

/// Driven length over the shortest path between the first edge's tail and
/// the last edge's head. Throws DegenerateTrip when they coincide.
Detour detour_ratio(const MatchedPath& m, const RoadNetwork& net);

struct GettingLostEvent {
  double t = 0.0;
  EdgeId first_wrong_edge = 0;
  LatLon location;
  Detour detour;
};

struct LostParams {
  double ratio_threshold = 1.6;
  double turn_snap_s = 4.0;  // max distance to a turn midpoint used for refinement
  double slack_m = 1.0;      // an edge is off every shortest path when it costs more than this
};

/// Flags the trip when the detour ratio exceeds the threshold; the event sits
/// where the driven route first leaves every shortest path to the destination,
/// snapped to the nearest turn midpoint when one is close.
std::optional<GettingLostEvent> detect_getting_lost(const MatchedPath& m, std::span<const GnssFix> fixes,
                                                    const RoadNetwork& net,
                                                    std::span<const double> turn_midpoints = {},
                                                    const LostParams& params = {});

struct LateralPoint {
  double t = 0.0;
  double lateral_m = 0.0;
};

struct LaneDeviationEvent {
  double t_start = 0.0;
  double t_end = 0.0;
  double peak_m = 0.0;
};

struct LaneDeviationReport {
  std::vector<LateralPoint> series;
  bool reliable = true;  // false when any fix lacks an RTK solution
  std::vector<LaneDeviationEvent> events;
};

struct LaneParams {
  double half_lane_m = 1.8;
  double min_duration_s = 1.0;
};

LaneDeviationReport lane_deviation(const MatchedPath& m, std::span<const GnssFix> fixes,
                                   const LaneParams& params = {});

}  // namespace drivesense::net
