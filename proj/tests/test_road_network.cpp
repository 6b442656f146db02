#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "drivesense/error.hpp"
#include "drivesense/road_network.hpp"
#include "drivesense/sim.hpp"
#include "oracles.hpp"

using namespace drivesense;
using namespace drivesense::net;

using namespace oracle;

TEST_CASE("haversine reference values") {
  CHECK(haversine({10.0, 20.0}, {10.0, 20.0}) == 0.0);
  const double quarter_degree = 2.0 * std::numbers::pi * kEarthRadiusM / 360.0;
  CHECK(haversine({0, 0}, {0, 1}) == doctest::Approx(quarter_degree).epsilon(1e-9));
  CHECK(haversine({0, 0}, {0, 1}) == doctest::Approx(111195.0).epsilon(1e-5));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lat(-80, 80), lon(-180, 180);
  for (int i = 0; i < 1000; ++i) {
    const LatLon a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)};
    REQUIRE(haversine(a, b) == doctest::Approx(haversine(b, a)).epsilon(1e-12));
    REQUIRE(haversine(a, b) > 0.0);
  }
}

TEST_CASE("network validation") {
  std::vector<Node> nodes = {{1, at(0, 0)}, {2, at(100, 0)}};
  auto e = straight(10, 1, 2, nodes);
  e.length_m = net::polyline_length_m(e.polyline);
  CHECK_NOTHROW(RoadNetwork(nodes, {e}));

  auto off = e;
  off.length_m *= 1.002;
  CHECK_THROWS_WITH_AS(RoadNetwork(nodes, {off}), doctest::Contains("InvariantViolation"), Error);
  auto dangling = e;
  dangling.to = 99;
  CHECK_THROWS_AS(RoadNetwork(nodes, {dangling}), Error);
  auto short_poly = e;
  short_poly.polyline.pop_back();
  CHECK_THROWS_AS(RoadNetwork(nodes, {short_poly}), Error);
  CHECK_THROWS_WITH_AS(RoadNetwork(nodes, {}), doctest::Contains("EmptyNetwork"), Error);
}

TEST_CASE("components and json round trip") {
  std::vector<Node> nodes = {{1, at(0, 0)}, {2, at(100, 0)}, {3, at(500, 500)}, {4, at(600, 500)}};
  const RoadNetwork net(nodes, {straight(1, 1, 2, nodes), straight(2, 4, 3, nodes)});
  CHECK(net.component_count() == 2);
  CHECK(net.component_of(net.node_index(1)) == net.component_of(net.node_index(2)));
  CHECK(net.component_of(net.node_index(1)) != net.component_of(net.node_index(3)));

  const auto again = RoadNetwork::parse(net.to_json().dump());
  CHECK(again.to_json() == net.to_json());
  CHECK_THROWS_AS(RoadNetwork::parse("{\"nodes\":[]}"), Error);
  CHECK_THROWS_AS(RoadNetwork::parse("not json"), Error);
}

TEST_CASE("generated grid") {
  sim::GridSpec spec;
  spec.rows = 2;
  spec.cols = 2;
  spec.spacing_m = 100.0;
  const auto net = sim::gen_network(spec);
  CHECK(net.nodes().size() == 4);
  CHECK(net.edges().size() == 8);
  for (const auto& e : net.edges()) CHECK(std::fabs(e.length_m - 100.0) < 0.1);
  CHECK(sim::gen_network(spec).to_json().dump() == net.to_json().dump());
}

TEST_CASE("projection onto an edge") {
  std::vector<Node> nodes = {{1, at(0, 0)}, {2, at(100, 0)}};
  const RoadNetwork net(nodes, {straight(7, 1, 2, nodes), straight(8, 2, 1, nodes)});
  const auto p = net.project(0, at(30, 2));
  CHECK(p.distance_m == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(p.offset_m == doctest::Approx(30.0).epsilon(1e-3));
  CHECK(p.lateral_m == doctest::Approx(2.0).epsilon(1e-6));  // left of eastbound
  const auto q = net.project(1, at(30, 2));
  CHECK(q.offset_m == doctest::Approx(70.0).epsilon(1e-3));
  CHECK(q.lateral_m == doctest::Approx(-2.0).epsilon(1e-6));
  CHECK(haversine(net.point_at(0, 30.0), at(30, 0)) < 0.05);
  CHECK(net.project(0, at(-50, 0)).offset_m == 0.0);
}

TEST_CASE("single-edge index lists the edge in every overlapping cell") {
  std::vector<Node> nodes = {{1, at(0, 0)}, {2, at(1000, 600)}};
  const RoadNetwork net(nodes, {straight(3, 1, 2, nodes)});
  const SpatialIndex idx(net, 100.0);
  for (double x = 5; x < 1000; x += 50) {
    for (double y = 5; y < 600; y += 50) CHECK(idx.cell_edges(at(x, y)) == std::vector<std::size_t>{0});
  }
  CHECK(idx.cell_edges(at(-5000, 0)).empty());
  const auto far = idx.nearest_edges(at(-5000, 0), 1);
  REQUIRE(far.size() == 1);
  CHECK(far[0].edge_id == 3);
}

TEST_CASE("point on an edge and equidistant ties") {
  std::vector<Node> nodes = {{1, at(0, 0)}, {2, at(100, 0)}, {3, at(0, 10)}, {4, at(100, 10)}};
  const RoadNetwork net(nodes, {straight(9, 3, 4, nodes), straight(4, 1, 2, nodes), straight(6, 1, 2, nodes)});
  const SpatialIndex idx(net);
  auto on = idx.nearest_edges(at(50, 0), 3);
  CHECK(on[0].edge_id == 4);
  CHECK(on[1].edge_id == 6);
  CHECK(on[0].distance_m < 1e-9);
  auto above = idx.nearest_edges(at(50, -3), 3);
  REQUIRE(above.size() == 3);
  CHECK(above[0].distance_m == above[1].distance_m);
  CHECK(above[0].edge_id == 4);
  CHECK(above[2].edge_id == 9);
}

TEST_CASE("grid index equals exhaustive scan") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    sim::GridSpec spec;
    spec.rows = 3 + trial % 5;
    spec.cols = 4 + trial % 3;
    spec.spacing_m = 150.0 + 20.0 * trial;
    spec.seed = static_cast<std::uint64_t>(trial);
    const auto net = sim::gen_network(spec);
    const SpatialIndex idx(net, 70.0 + 40.0 * trial);
    std::uniform_real_distribution<double> x(-300, spec.cols * spec.spacing_m + 300);
    std::uniform_real_distribution<double> y(-300, spec.rows * spec.spacing_m + 300);
    const LocalProjection& proj = net.projection();
    const auto base = proj.to_xy(net.nodes().front().pos);
    for (int q = 0; q < 100; ++q) {
      const LatLon p = proj.to_latlon({base.x + x(rng), base.y + y(rng)});
      const std::size_t k = 1 + rng() % 8;
      const auto got = idx.nearest_edges(p, k);
      const auto want = nearest_edges_exhaustive(net, p, k);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        REQUIRE(got[i].edge_id == want[i].edge_id);
        REQUIRE(got[i].distance_m == want[i].distance_m);
      }
    }
  }
}

TEST_CASE("shortest path examples") {
  std::vector<Node> nodes = {{1, at(0, 0)}, {2, at(100, 0)}, {3, at(200, 0)}};
  auto direct = straight(1, 1, 3, nodes);
  direct.polyline.insert(direct.polyline.begin() + 1, at(100, 111.8034));  // 300 m detour
  const RoadNetwork net(nodes, {direct, straight(2, 1, 2, nodes), straight(3, 2, 3, nodes)});
  const auto p = shortest_path(net, 1, 3);
  CHECK(p.edges == std::vector<EdgeId>{2, 3});
  CHECK(p.length_m == doctest::Approx(200.0).epsilon(1e-3));
  CHECK(net.edge(1).length_m == doctest::Approx(300.0).epsilon(1e-3));

  const auto self = shortest_path(net, 2, 2);
  CHECK(self.edges.empty());
  CHECK(self.length_m == 0.0);
  CHECK_THROWS_WITH_AS(shortest_path(net, 3, 1), doctest::Contains("Unreachable"), Error);
}

TEST_CASE("shortest path equals exhaustive enumeration") {
  std::mt19937_64 rng(2024);
  int compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 6);
    const auto net = random_graph(rng, n, n + static_cast<int>(rng() % (2 * n)));
    for (const auto& a : net.nodes()) {
      for (const auto& b : net.nodes()) {
        const auto want = enumerate_paths(net, a.id, b.id);
        if (!want.found) {
          REQUIRE_THROWS_AS(shortest_path(net, a.id, b.id), Error);
          continue;
        }
        const auto got = shortest_path(net, a.id, b.id);
        REQUIRE(got.edges == want.edges);
        REQUIRE(got.length_m == doctest::Approx(want.length).epsilon(1e-12));
        ++compared;
      }
    }
  }
  CHECK(compared > 1000);
}

TEST_CASE("shortest path lengths obey the triangle inequality") {
  sim::GridSpec spec;
  spec.rows = 6;
  spec.cols = 7;
  spec.highway_rows = {2};
  const auto net = sim::gen_network(spec);
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(net.nodes().size()) - 1);
  for (int i = 0; i < 300; ++i) {
    const NodeId a = pick(rng), b = pick(rng), c = pick(rng);
    const double ab = shortest_path(net, a, b).length_m;
    const double bc = shortest_path(net, b, c).length_m;
    const double ac = shortest_path(net, a, c).length_m;
    REQUIRE(ac <= ab + bc + 1e-6);
  }
}
