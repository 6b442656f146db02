#include <algorithm>
#include <random>

#include "drivesense/error.hpp"
#include "drivesense/sim.hpp"

namespace drivesense::sim {

net::RoadNetwork gen_network(const GridSpec& spec) {
  if (spec.rows < 2 || spec.cols < 2) throw Error(ErrorCode::InvalidScript, "grid needs at least 2 rows and 2 cols");
  if (!(spec.spacing_m > 0.0)) throw Error(ErrorCode::InvalidScript, "grid spacing must be > 0");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  const LatLon origin{40.0 + jitter(rng), -83.0 + jitter(rng)};
  const LocalProjection proj(origin);

  std::vector<net::Node> nodes;
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      nodes.push_back({r * spec.cols + c, proj.to_latlon({c * spec.spacing_m, r * spec.spacing_m})});
    }
  }
  const auto is_highway = [&](int r) {
    return std::find(spec.highway_rows.begin(), spec.highway_rows.end(), r) != spec.highway_rows.end();
  };

  std::vector<net::Edge> edges;
  const auto street = [&](net::NodeId a, net::NodeId b, bool highway) {
    for (auto [from, to] : {std::pair{a, b}, std::pair{b, a}}) {
      net::Edge e;
      e.id = static_cast<net::EdgeId>(edges.size());
      e.from = from;
      e.to = to;
      e.polyline = {nodes[static_cast<std::size_t>(from)].pos, nodes[static_cast<std::size_t>(to)].pos};
      e.length_m = net::polyline_length_m(e.polyline);
      e.road_class = highway ? net::RoadClass::Highway : net::RoadClass::Local;
      e.speed_limit_kph = highway ? 100.0 : 40.0;
      edges.push_back(std::move(e));
    }
  };
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c + 1 < spec.cols; ++c) street(r * spec.cols + c, r * spec.cols + c + 1, is_highway(r));
  }
  for (int c = 0; c < spec.cols; ++c) {
    for (int r = 0; r + 1 < spec.rows; ++r) street(r * spec.cols + c, (r + 1) * spec.cols + c, false);
  }
  return net::RoadNetwork(std::move(nodes), std::move(edges));
}

}  // namespace drivesense::sim
