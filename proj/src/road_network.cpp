#include "drivesense/road_network.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>

#include <nlohmann/json.hpp>

#include "drivesense/error.hpp"

namespace drivesense::net {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::string_view to_string(RoadClass c) {
  switch (c) {
    case RoadClass::Highway: return "highway";
    case RoadClass::Arterial: return "arterial";
    case RoadClass::Local: return "local";
  }
  return "local";
}

RoadClass road_class_from_string(std::string_view s) {
  if (s == "highway") return RoadClass::Highway;
  if (s == "arterial") return RoadClass::Arterial;
  if (s == "local") return RoadClass::Local;
  throw Error(ErrorCode::MalformedField, "road_class '" + std::string(s) + "'");
}

double polyline_length_m(std::span<const LatLon> pts) {
  double len = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) len += haversine(pts[i - 1], pts[i]);
  return len;
}

RoadNetwork::RoadNetwork(std::vector<Node> nodes, std::vector<Edge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  if (nodes_.empty() || edges_.empty()) throw Error(ErrorCode::EmptyNetwork, "network has no nodes or no edges");
  std::sort(nodes_.begin(), nodes_.end(), [](const Node& a, const Node& b) { return a.id < b.id; });
  std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!node_idx_.emplace(nodes_[i].id, i).second) {
      throw Error(ErrorCode::InvariantViolation, "duplicate node id " + std::to_string(nodes_[i].id));
    }
  }
  double min_lat = kInf, max_lat = -kInf, min_lon = kInf, max_lon = -kInf;
  for (const auto& n : nodes_) {
    min_lat = std::min(min_lat, n.pos.lat);
    max_lat = std::max(max_lat, n.pos.lat);
    min_lon = std::min(min_lon, n.pos.lon);
    max_lon = std::max(max_lon, n.pos.lon);
  }
  proj_ = LocalProjection({(min_lat + max_lat) / 2.0, (min_lon + max_lon) / 2.0});

  out_.assign(nodes_.size(), {});
  in_.assign(nodes_.size(), {});
  xy_.resize(edges_.size());
  cum_.resize(edges_.size());
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    auto& e = edges_[i];
    const std::string where = "edge " + std::to_string(e.id);
    if (!edge_idx_.emplace(e.id, i).second) throw Error(ErrorCode::InvariantViolation, "duplicate " + where);
    if (!has_node(e.from) || !has_node(e.to)) {
      throw Error(ErrorCode::InvariantViolation, where + " references an unknown node");
    }
    if (e.polyline.size() < 2) throw Error(ErrorCode::InvariantViolation, where + " polyline needs >= 2 points");
    const double measured = polyline_length_m(e.polyline);
    if (e.length_m <= 0.0) {
      e.length_m = measured;
    } else if (std::fabs(e.length_m - measured) > 1e-3 * measured + 1e-6) {
      throw Error(ErrorCode::InvariantViolation, where + " length_m disagrees with its polyline by more than 0.1%");
    }
    out_[node_index(e.from)].push_back(i);
    in_[node_index(e.to)].push_back(i);
    auto& xy = xy_[i];
    auto& cum = cum_[i];
    for (const auto& p : e.polyline) xy.push_back(proj_.to_xy(p));
    cum.push_back(0.0);
    for (std::size_t k = 1; k < xy.size(); ++k) cum.push_back(cum.back() + (xy[k] - xy[k - 1]).norm());
  }

  // Weakly connected components by union-find.
  std::vector<std::size_t> parent(nodes_.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : edges_) parent[find(node_index(e.from))] = find(node_index(e.to));
  std::unordered_map<std::size_t, std::size_t> label;
  component_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto [it, fresh] = label.emplace(find(i), label.size());
    component_[i] = it->second;
  }
  n_components_ = label.size();
}

std::size_t RoadNetwork::node_index(NodeId id) const {
  auto it = node_idx_.find(id);
  if (it == node_idx_.end()) throw Error(ErrorCode::InvariantViolation, "unknown node " + std::to_string(id));
  return it->second;
}

std::size_t RoadNetwork::edge_index(EdgeId id) const {
  auto it = edge_idx_.find(id);
  if (it == edge_idx_.end()) throw Error(ErrorCode::InvariantViolation, "unknown edge " + std::to_string(id));
  return it->second;
}

EdgeProjection RoadNetwork::project(std::size_t edge_idx, Vec2 p) const {
  const auto& xy = xy_[edge_idx];
  const auto& cum = cum_[edge_idx];
  EdgeProjection best;
  best.distance_m = kInf;
  for (std::size_t i = 0; i + 1 < xy.size(); ++i) {
    const SegmentProjection sp = project_on_segment(p, xy[i], xy[i + 1]);
    if (sp.distance < best.distance_m) {
      best.distance_m = sp.distance;
      best.offset_m = cum[i] + sp.t * (cum[i + 1] - cum[i]);
      best.lateral_m = sp.signed_lateral;
    }
  }
  const double proj_len = cum.back();
  const double len = edges_[edge_idx].length_m;
  if (proj_len > 0.0) best.offset_m = std::clamp(best.offset_m * len / proj_len, 0.0, len);
  return best;
}

LatLon RoadNetwork::point_at(std::size_t edge_idx, double offset_m) const {
  const auto& xy = xy_[edge_idx];
  const auto& cum = cum_[edge_idx];
  const double len = edges_[edge_idx].length_m;
  const double s = len > 0.0 ? std::clamp(offset_m, 0.0, len) * cum.back() / len : 0.0;
  std::size_t i = 0;
  while (i + 2 < xy.size() && cum[i + 1] < s) ++i;
  const double seg = cum[i + 1] - cum[i];
  const double t = seg > 0.0 ? std::clamp((s - cum[i]) / seg, 0.0, 1.0) : 0.0;
  return proj_.to_latlon(xy[i] + (xy[i + 1] - xy[i]) * t);
}

Vec2 RoadNetwork::heading_at(std::size_t edge_idx, double offset_m) const {
  const auto& xy = xy_[edge_idx];
  const auto& cum = cum_[edge_idx];
  const double len = edges_[edge_idx].length_m;
  const double s = len > 0.0 ? std::clamp(offset_m, 0.0, len) * cum.back() / len : 0.0;
  std::size_t i = 0;
  while (i + 2 < xy.size() && cum[i + 1] < s) ++i;
  const Vec2 d = xy[i + 1] - xy[i];
  const double n = d.norm();
  return n > 0.0 ? d * (1.0 / n) : Vec2{1.0, 0.0};
}

RoadNetwork RoadNetwork::from_json(const nlohmann::json& j) {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  try {
    for (const auto& n : j.at("nodes")) nodes.push_back({n.at("id").get<NodeId>(), {n.at("lat").get<double>(), n.at("lon").get<double>()}});
    for (const auto& e : j.at("edges")) {
      Edge x;
      x.id = e.at("id").get<EdgeId>();
      x.from = e.at("from").get<NodeId>();
      x.to = e.at("to").get<NodeId>();
      for (const auto& p : e.at("polyline")) x.polyline.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      x.length_m = e.value("length_m", 0.0);
      x.road_class = road_class_from_string(e.value("road_class", std::string("local")));
      x.speed_limit_kph = e.value("speed_limit_kph", 50.0);
      edges.push_back(std::move(x));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::MalformedField, std::string("network json: ") + ex.what());
  }
  return RoadNetwork(std::move(nodes), std::move(edges));
}

RoadNetwork RoadNetwork::parse(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::MalformedField, std::string("network json: ") + ex.what());
  }
  return from_json(j);
}

nlohmann::json RoadNetwork::to_json() const {
  nlohmann::ordered_json j;
  auto& nodes = j["nodes"] = nlohmann::ordered_json::array();
  for (const auto& n : nodes_) nodes.push_back({{"id", n.id}, {"lat", n.pos.lat}, {"lon", n.pos.lon}});
  auto& edges = j["edges"] = nlohmann::ordered_json::array();
  for (const auto& e : edges_) {
    auto poly = nlohmann::ordered_json::array();
    for (const auto& p : e.polyline) poly.push_back({p.lat, p.lon});
    edges.push_back({{"id", e.id},
                     {"from", e.from},
                     {"to", e.to},
                     {"polyline", poly},
                     {"length_m", e.length_m},
                     {"road_class", std::string(to_string(e.road_class))},
                     {"speed_limit_kph", e.speed_limit_kph}});
  }
  return nlohmann::json(j);
}

// ---- Spatial index -----------------------------------------------------------

SpatialIndex::SpatialIndex(const RoadNetwork& net, double cell_m) : net_(&net), cell_m_(cell_m) {
  if (!(cell_m > 0.0)) throw std::invalid_argument("cell_m must be > 0");
  if (net.edges().empty()) throw Error(ErrorCode::EmptyNetwork, "cannot index an empty network");
  Vec2 lo{kInf, kInf}, hi{-kInf, -kInf};
  for (std::size_t i = 0; i < net.edges().size(); ++i) {
    for (const auto& p : net.edge_xy(i)) {
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
    }
  }
  min_ = lo;
  cols_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((hi.x - lo.x) / cell_m)));
  rows_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((hi.y - lo.y) / cell_m)));
  // Grow so the max corner is strictly inside.
  if (min_.x + static_cast<double>(cols_) * cell_m <= hi.x) ++cols_;
  if (min_.y + static_cast<double>(rows_) * cell_m <= hi.y) ++rows_;
  cells_.assign(cols_ * rows_, {});
  for (std::size_t i = 0; i < net.edges().size(); ++i) {
    Vec2 a{kInf, kInf}, b{-kInf, -kInf};
    for (const auto& p : net.edge_xy(i)) {
      a = {std::min(a.x, p.x), std::min(a.y, p.y)};
      b = {std::max(b.x, p.x), std::max(b.y, p.y)};
    }
    const auto c0 = static_cast<std::size_t>((a.x - min_.x) / cell_m);
    const auto c1 = std::min(cols_ - 1, static_cast<std::size_t>((b.x - min_.x) / cell_m));
    const auto r0 = static_cast<std::size_t>((a.y - min_.y) / cell_m);
    const auto r1 = std::min(rows_ - 1, static_cast<std::size_t>((b.y - min_.y) / cell_m));
    for (std::size_t r = r0; r <= r1; ++r) {
      for (std::size_t c = c0; c <= c1; ++c) cells_[r * cols_ + c].push_back(i);
    }
  }
}

std::vector<std::size_t> SpatialIndex::cell_edges(LatLon p) const {
  const Vec2 xy = net_->projection().to_xy(p);
  const double fx = (xy.x - min_.x) / cell_m_, fy = (xy.y - min_.y) / cell_m_;
  if (fx < 0.0 || fy < 0.0 || fx >= static_cast<double>(cols_) || fy >= static_cast<double>(rows_)) return {};
  return cells_[static_cast<std::size_t>(fy) * cols_ + static_cast<std::size_t>(fx)];
}

namespace {

bool closer(const EdgeDistance& a, const EdgeDistance& b) {
  return a.distance_m != b.distance_m ? a.distance_m < b.distance_m : a.edge_id < b.edge_id;
}

}  // namespace

std::vector<EdgeDistance> nearest_edges_exhaustive(const RoadNetwork& net, LatLon p, std::size_t k) {
  if (net.edges().empty()) throw Error(ErrorCode::EmptyNetwork, "empty network");
  const Vec2 xy = net.projection().to_xy(p);
  std::vector<EdgeDistance> all;
  all.reserve(net.edges().size());
  for (std::size_t i = 0; i < net.edges().size(); ++i) {
    all.push_back({i, net.edges()[i].id, net.project(i, xy).distance_m});
  }
  const std::size_t n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), closer);
  all.resize(n);
  return all;
}

std::vector<EdgeDistance> SpatialIndex::nearest_within(LatLon p, std::size_t k, double radius_m) const {
  if (k == 0) return {};
  const Vec2 xy = net_->projection().to_xy(p);
  const double fx = (xy.x - min_.x) / cell_m_, fy = (xy.y - min_.y) / cell_m_;
  std::vector<EdgeDistance> found;
  if (fx < 0.0 || fy < 0.0 || fx >= static_cast<double>(cols_) || fy >= static_cast<double>(rows_)) {
    found = nearest_edges_exhaustive(*net_, p, k);
  } else {
    const auto cx = static_cast<long>(fx), cy = static_cast<long>(fy);
    std::vector<std::size_t> seen;
    const long max_r = static_cast<long>(std::max(cols_, rows_));
    for (long r = 0; r <= max_r; ++r) {
      for (long y = cy - r; y <= cy + r; ++y) {
        if (y < 0 || y >= static_cast<long>(rows_)) continue;
        const bool edge_row = (y == cy - r || y == cy + r);
        for (long x = cx - r; x <= cx + r; x += (edge_row ? 1 : 2 * r)) {
          if (x >= 0 && x < static_cast<long>(cols_)) {
            for (std::size_t e : cells_[static_cast<std::size_t>(y) * cols_ + static_cast<std::size_t>(x)]) {
              if (std::find(seen.begin(), seen.end(), e) != seen.end()) continue;
              seen.push_back(e);
              found.push_back({e, net_->edges()[e].id, net_->project(e, xy).distance_m});
            }
          }
          if (r == 0) break;
        }
      }
      // Unvisited cells are at least r cells away.
      const double guaranteed = static_cast<double>(r) * cell_m_;
      std::sort(found.begin(), found.end(), closer);
      if (found.size() >= k && found[k - 1].distance_m < guaranteed) break;
      if (guaranteed > radius_m) break;
    }
    if (found.size() > k) found.resize(k);
  }
  std::erase_if(found, [radius_m](const EdgeDistance& d) { return d.distance_m > radius_m; });
  return found;
}

std::vector<EdgeDistance> SpatialIndex::nearest_edges(LatLon p, std::size_t k) const {
  return nearest_within(p, k, kInf);
}

// ---- Shortest paths ------------------------------------------------------------

namespace {

template <class Next>
std::vector<double> dijkstra(const RoadNetwork& net, std::size_t src, double max_m, Next&& next) {
  std::vector<double> dist(net.nodes().size(), kInf);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[src] = 0.0;
  pq.push({0.0, src});
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u] || d > max_m) continue;
    next(u, [&](std::size_t v, double w) {
      const double nd = d + w;
      if (nd < dist[v]) {
        dist[v] = nd;
        pq.push({nd, v});
      }
    });
  }
  return dist;
}

}  // namespace

std::vector<double> distances_to(const RoadNetwork& net, NodeId to) {
  return dijkstra(net, net.node_index(to), kInf, [&net](std::size_t u, auto relax) {
    for (std::size_t e : net.in_edges(u)) relax(net.node_index(net.edges()[e].from), net.edges()[e].length_m);
  });
}

std::vector<double> distances_from(const RoadNetwork& net, std::size_t from_idx, double max_m) {
  return dijkstra(net, from_idx, max_m, [&net](std::size_t u, auto relax) {
    for (std::size_t e : net.out_edges(u)) relax(net.node_index(net.edges()[e].to), net.edges()[e].length_m);
  });
}

Path shortest_path(const RoadNetwork& net, NodeId from, NodeId to) {
  const std::size_t src = net.node_index(from);
  net.node_index(to);
  Path path;
  if (from == to) return path;
  const auto dist = distances_to(net, to);
  if (!std::isfinite(dist[src])) {
    throw Error(ErrorCode::Unreachable, "no path from node " + std::to_string(from) + " to " + std::to_string(to));
  }
  // Greedy walk along tight edges picks the lexicographically smallest
  // edge-id sequence among minimal paths.
  std::size_t u = src;
  const std::size_t dst = net.node_index(to);
  const double eps = 1e-9 * std::max(1.0, dist[src]);
  while (u != dst) {
    bool moved = false;
    for (std::size_t e : net.out_edges(u)) {
      const auto& edge = net.edges()[e];
      const std::size_t v = net.node_index(edge.to);
      if (std::fabs(edge.length_m + dist[v] - dist[u]) <= eps && dist[v] < dist[u] + eps && v != u) {
        path.edges.push_back(edge.id);
        path.length_m += edge.length_m;
        u = v;
        moved = true;
        break;
      }
    }
    if (!moved || path.edges.size() > net.edges().size()) {
      throw Error(ErrorCode::Unreachable, "shortest path reconstruction failed");
    }
  }
  return path;
}

}  // namespace drivesense::net
