#include "sim_path.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "drivesense/error.hpp"

namespace drivesense::sim::detail {

namespace {

std::size_t edge_between(const net::RoadNetwork& net, net::NodeId u, net::NodeId v) {
  for (std::size_t e : net.out_edges(net.node_index(u))) {
    if (net.edges()[e].to == v) return e;
  }
  throw Error(ErrorCode::InvalidScript,
              "route has no edge from node " + std::to_string(u) + " to node " + std::to_string(v));
}

double cruise_mps(const net::Edge& e) { return e.speed_limit_kph / 3.6 * kCruiseFactor; }

// Point at offset (network length units) along an edge's projected polyline,
// plus the index of the first polyline vertex beyond it.
std::pair<Vec2, std::size_t> along(const net::RoadNetwork& net, std::size_t e, double offset) {
  const auto& xy = net.edge_xy(e);
  double proj_len = 0.0;
  for (std::size_t i = 1; i < xy.size(); ++i) proj_len += (xy[i] - xy[i - 1]).norm();
  double want = offset * proj_len / net.edges()[e].length_m;
  for (std::size_t i = 1; i < xy.size(); ++i) {
    const double seg = (xy[i] - xy[i - 1]).norm();
    if (want <= seg || i + 1 == xy.size()) {
      const double f = seg > 0.0 ? std::clamp(want / seg, 0.0, 1.0) : 0.0;
      return {xy[i - 1] + (xy[i] - xy[i - 1]) * f, i};
    }
    want -= seg;
  }
  return {xy.back(), xy.size()};
}

double wrap_pi(double a) {
  while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
  while (a < -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

}  // namespace

std::vector<net::NodeId> base_route(const DriveScript& script, const net::RoadNetwork& net) {
  std::vector<net::NodeId> nodes = script.route;
  if (nodes.empty()) {
    if (!script.route_from || !script.route_to) {
      throw Error(ErrorCode::InvalidScript, "script needs route or route_from/route_to");
    }
    if (!net.has_node(*script.route_from) || !net.has_node(*script.route_to)) {
      throw Error(ErrorCode::InvalidScript, "route endpoint not in network");
    }
    nodes.push_back(*script.route_from);
    for (net::EdgeId e : net::shortest_path(net, *script.route_from, *script.route_to).edges) {
      nodes.push_back(net.edge(e).to);
    }
  }
  if (nodes.size() < 2) throw Error(ErrorCode::InvalidScript, "route needs at least two nodes");
  for (auto n : nodes) {
    if (!net.has_node(n)) throw Error(ErrorCode::InvalidScript, "route node " + std::to_string(n) + " not in network");
  }
  return nodes;
}

ResolvedRoute resolve_route(const DriveScript& script, const net::RoadNetwork& net) {
  ResolvedRoute r;
  const auto base = base_route(script, net);
  r.from_script.resize(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) r.from_script[i] = i;

  std::optional<std::size_t> lost;
  for (std::size_t k = 0; k < script.injections.size(); ++k) {
    const auto& inj = script.injections[k];
    if (inj.kind != InjectionKind::GettingLost) continue;
    if (lost) throw Error(ErrorCode::InvalidScript, "at most one getting_lost injection per script");
    if (!inj.node_index || *inj.node_index == 0 || *inj.node_index + 1 >= base.size()) {
      throw Error(ErrorCode::ScriptEventOutsideDrive, "getting_lost needs an interior route node");
    }
    lost = k;
  }

  r.nodes = base;
  if (lost) {
    const auto& inj = script.injections[*lost];
    const std::size_t i = *inj.node_index;
    const net::NodeId x = base[i], prev = base[i - 1], next = base[i + 1];
    const auto to_dest = net::distances_to(net, base.back());
    const auto d = [&](net::NodeId n) { return to_dest[net.node_index(n)]; };
    std::optional<std::array<net::NodeId, 3>> cycle;
    bool cycle_turns = false;
    for (std::size_t ea : net.out_edges(net.node_index(x))) {
      const auto& e1 = net.edges()[ea];
      const net::NodeId a = e1.to;
      if (a == prev || a == x || !(e1.length_m + d(a) > d(x) + 1.0)) continue;
      for (std::size_t eb : net.out_edges(net.node_index(a))) {
        const net::NodeId b = net.edges()[eb].to;
        if (b == x || b == a) continue;
        for (std::size_t ec : net.out_edges(net.node_index(b))) {
          const net::NodeId c = net.edges()[ec].to;
          if (c == a || c == b || c == x || c == next) continue;
          const bool closes = std::any_of(net.out_edges(net.node_index(c)).begin(),
                                          net.out_edges(net.node_index(c)).end(),
                                          [&](std::size_t e) { return net.edges()[e].to == x; });
          if (!closes) continue;
          // Prefer leaving X with a turn: its arc midpoint is a sharp reference time.
          const Vec2 din = net.projection().to_xy(net.node(x).pos) - net.projection().to_xy(net.node(prev).pos);
          const Vec2 dout = net.projection().to_xy(net.node(a).pos) - net.projection().to_xy(net.node(x).pos);
          const bool turns = std::fabs(din.cross(dout)) > 1e-3 * din.norm() * dout.norm();
          if (!cycle || (turns && !cycle_turns)) {
            cycle = std::array<net::NodeId, 3>{a, b, c};
            cycle_turns = turns;
          }
        }
      }
    }
    if (!cycle) {
      throw Error(ErrorCode::InvalidScript, "no block loop away from the destination at node " + std::to_string(x));
    }
    const int loops = inj.loops > 0 ? inj.loops : 2;
    std::vector<net::NodeId> expanded(base.begin(), base.begin() + static_cast<std::ptrdiff_t>(i) + 1);
    for (int l = 0; l < loops; ++l) {
      for (auto n : *cycle) expanded.push_back(n);
      expanded.push_back(x);
    }
    expanded.insert(expanded.end(), base.begin() + static_cast<std::ptrdiff_t>(i) + 1, base.end());
    for (std::size_t j = i + 1; j < base.size(); ++j) r.from_script[j] = j + 4 * static_cast<std::size_t>(loops);
    r.nodes = std::move(expanded);
    r.lost_at = i;
    r.lost_injection = lost;
  }
  for (std::size_t i = 1; i < r.nodes.size(); ++i) r.edges.push_back(edge_between(net, r.nodes[i - 1], r.nodes[i]));
  return r;
}

double DrivePath::turn_speed() const { return std::sqrt(kMaxLateralMps2 * kTurnRadiusM); }

DrivePath::DrivePath(const net::RoadNetwork& net, const ResolvedRoute& route, double start_offset_m,
                     std::optional<double> end_offset_m) {
  struct Vertex {
    Vec2 p;
    std::optional<std::size_t> node;  // expanded route index
  };
  std::vector<Vertex> v;
  std::vector<std::size_t> seg_edge;  // edge index of segment v[k] -> v[k+1]
  const auto& edges = route.edges;
  const std::size_t n_edges = edges.size();
  const double first_len = net.edges()[edges.front()].length_m;
  const double last_len = net.edges()[edges.back()].length_m;
  const double end_off = end_offset_m.value_or(last_len / 2.0);
  if (!(start_offset_m >= 0.0 && start_offset_m < first_len) || !(end_off > 0.0 && end_off <= last_len) ||
      (n_edges == 1 && !(end_off > start_offset_m + 1.0))) {
    throw Error(ErrorCode::InvalidScript, "start/end offsets outside their edges");
  }

  for (std::size_t j = 0; j < n_edges; ++j) {
    const std::size_t e = edges[j];
    const auto& xy = net.edge_xy(e);
    std::size_t first_inner = 1;
    if (j == 0) {
      auto [p, idx] = along(net, e, start_offset_m);
      v.push_back({p, std::nullopt});
      first_inner = idx;
    }
    std::size_t last_inner = xy.size() - 1;  // exclusive
    std::optional<Vec2> end_point;
    if (j + 1 == n_edges) {
      auto [p, idx] = along(net, e, end_off);
      end_point = p;
      last_inner = std::min(last_inner, idx);
    }
    for (std::size_t k = first_inner; k < last_inner; ++k) {
      seg_edge.push_back(e);
      v.push_back({xy[k], std::nullopt});
    }
    seg_edge.push_back(e);
    if (end_point) {
      v.push_back({*end_point, std::nullopt});
    } else {
      v.push_back({xy.back(), j + 1});
    }
  }

  const double r = kTurnRadiusM;
  std::vector<double> tangent(v.size(), 0.0), turn(v.size(), 0.0);
  for (std::size_t k = 1; k + 1 < v.size(); ++k) {
    const Vec2 din = v[k].p - v[k - 1].p;
    const Vec2 dout = v[k + 1].p - v[k].p;
    if (din.norm() < 1e-9 || dout.norm() < 1e-9) throw Error(ErrorCode::InvalidScript, "degenerate path segment");
    const double th = std::atan2(din.cross(dout), din.dot(dout));
    if (std::fabs(th) < 1e-4) continue;
    if (std::fabs(th) > 170.0 * std::numbers::pi / 180.0) {
      throw Error(ErrorCode::InvalidScript,
                  "U-turn at " + (v[k].node ? "node " + std::to_string(route.nodes[*v[k].node]) : "a bend"));
    }
    turn[k] = th;
    tangent[k] = r * std::tan(std::fabs(th) / 2.0);
  }
  for (std::size_t k = 0; k + 1 < v.size(); ++k) {
    if (tangent[k] + tangent[k + 1] > (v[k + 1].p - v[k].p).norm() - 1.0) {
      throw Error(ErrorCode::InvalidScript, "path segment too short for its turns");
    }
  }

  node_s_.assign(route.nodes.size(), 0.0);
  node_arc_.assign(route.nodes.size(), std::nullopt);
  double s = 0.0;
  Vec2 cur = v.front().p;
  auto add_line = [&](Vec2 to, double vmax) {
    const Vec2 d = to - cur;
    const double len = d.norm();
    if (len < 1e-9) return;
    pieces_.push_back({s, len, cur, std::atan2(d.y, d.x), 0.0, vmax});
    s += len;
    cur = to;
  };
  const double vturn = turn_speed();
  for (std::size_t k = 1; k < v.size(); ++k) {
    const auto& e_in = net.edges()[seg_edge[k - 1]];
    const Vec2 din = (v[k].p - v[k - 1].p) * (1.0 / (v[k].p - v[k - 1].p).norm());
    if (turn[k] == 0.0) {
      add_line(v[k].p, cruise_mps(e_in));
      if (v[k].node) node_s_[*v[k].node] = s;
      continue;
    }
    const auto& e_out = net.edges()[seg_edge[k]];
    const Vec2 dout = (v[k + 1].p - v[k].p) * (1.0 / (v[k + 1].p - v[k].p).norm());
    add_line(v[k].p - din * tangent[k], cruise_mps(e_in));
    const double arc_len = r * std::fabs(turn[k]);
    const double vmax = std::min({vturn, cruise_mps(e_in), cruise_mps(e_out)});
    pieces_.push_back({s, arc_len, cur, std::atan2(din.y, din.x), (turn[k] > 0 ? 1.0 : -1.0) / r, vmax});
    if (v[k].node) {
      node_s_[*v[k].node] = s + arc_len / 2.0;
      node_arc_[*v[k].node] = std::make_pair(s, arc_len);
    }
    s += arc_len;
    cur = v[k].p + dout * tangent[k];
  }
  length_ = s;
  node_s_.front() = -start_offset_m;
  node_s_.back() = length_ + (last_len - end_off);
  edge_s0_.resize(n_edges);
  edge_s1_.resize(n_edges);
  for (std::size_t j = 0; j < n_edges; ++j) {
    edge_s0_[j] = std::max(0.0, node_s_[j]);
    edge_s1_[j] = std::min(length_, node_s_[j + 1]);
  }
}

const Piece& DrivePath::piece_at(double s) const {
  auto it = std::upper_bound(pieces_.begin(), pieces_.end(), s, [](double x, const Piece& p) { return x < p.s0; });
  if (it == pieces_.begin()) return pieces_.front();
  return *(it - 1);
}

Vec2 DrivePath::position(double s) const {
  const Piece& p = piece_at(s);
  const double ds = std::clamp(s - p.s0, 0.0, p.len + (s > length_ ? s - length_ : 0.0));
  if (p.kappa == 0.0) return p.p0 + Vec2{std::cos(p.heading0), std::sin(p.heading0)} * ds;
  const double h = p.heading0 + p.kappa * ds;
  return p.p0 + Vec2{(std::sin(h) - std::sin(p.heading0)) / p.kappa, -(std::cos(h) - std::cos(p.heading0)) / p.kappa};
}

double DrivePath::heading(double s) const {
  const Piece& p = piece_at(s);
  return wrap_pi(p.heading0 + p.kappa * std::clamp(s - p.s0, 0.0, p.len));
}

}  // namespace drivesense::sim::detail
