#include "drivesense/map_match.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "drivesense/error.hpp"
#include "text_util.hpp"

namespace drivesense::net {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Candidate {
  std::size_t edge_idx = 0;
  EdgeProjection pr;
  double emission = 0.0;
};

struct Layer {
  std::size_t fix_index = 0;
  Vec2 xy;
  std::vector<Candidate> cands;
  std::vector<double> score;
  std::vector<std::size_t> back;
};

// Bounded single-source distances, recomputed when a longer horizon is needed.
class RouteCache {
 public:
  explicit RouteCache(const RoadNetwork& net) : net_(net) {}

  double between(std::size_t from_node, std::size_t to_node, double bound) {
    if (from_node == to_node) return 0.0;
    auto& entry = cache_[from_node];
    if (entry.first < bound) entry = {bound, distances_from(net_, from_node, bound)};
    const double d = entry.second[to_node];
    return d <= entry.first ? d : kInf;
  }

 private:
  const RoadNetwork& net_;
  std::unordered_map<std::size_t, std::pair<double, std::vector<double>>> cache_;
};

}  // namespace

double sigma_for(FixQuality q) {
  switch (q) {
    case FixQuality::Dgps: return 1.0;
    case FixQuality::RtkFloat: return 0.5;
    case FixQuality::RtkFixed: return 0.03;
    default: return 4.9;
  }
}

MatchedPath match_trajectory(std::span<const GnssFix> fixes, const SpatialIndex& index, const MatchParams& params) {
  const RoadNetwork& net = index.network();
  MatchedPath out;
  std::size_t positioned = 0;
  for (const auto& f : fixes) positioned += (f.position && f.quality != FixQuality::NoFix);
  if (positioned < 2) throw Error(ErrorCode::NoCandidates, "need at least 2 positioned fixes");

  RouteCache routes(net);
  std::vector<std::vector<Layer>> chains(1);

  for (std::size_t i = 0; i < fixes.size(); ++i) {
    const auto& f = fixes[i];
    if (!f.position || f.quality == FixQuality::NoFix) continue;
    Layer layer;
    layer.fix_index = i;
    layer.xy = net.projection().to_xy(*f.position);
    const double sigma = sigma_for(f.quality);
    double best = -kInf;
    for (const auto& ed : index.nearest_within(*f.position, params.k, params.radius_m)) {
      Candidate c{ed.edge_idx, net.project(ed.edge_idx, layer.xy), 0.0};
      c.emission = -(c.pr.distance_m * c.pr.distance_m) / (2.0 * sigma * sigma);
      best = std::max(best, c.emission);
      layer.cands.push_back(c);
    }
    std::erase_if(layer.cands, [&](const Candidate& c) { return c.emission < best - params.prune_log; });
    if (layer.cands.empty()) {
      out.off_network.push_back(i);
      if (!chains.back().empty()) chains.emplace_back();
      continue;
    }

    auto& chain = chains.back();
    layer.score.assign(layer.cands.size(), -kInf);
    layer.back.assign(layer.cands.size(), 0);
    if (!chain.empty()) {
      const Layer& prev = chain.back();
      const double d_gc = (layer.xy - prev.xy).norm();
      const double bound = std::max(params.route_bound_m, 2.0 * d_gc + 200.0);
      for (std::size_t b = 0; b < layer.cands.size(); ++b) {
        const Candidate& cb = layer.cands[b];
        const Edge& eb = net.edges()[cb.edge_idx];
        for (std::size_t a = 0; a < prev.cands.size(); ++a) {
          if (prev.score[a] == -kInf) continue;
          const Candidate& ca = prev.cands[a];
          double d_net;
          if (ca.edge_idx == cb.edge_idx) {
            d_net = cb.pr.offset_m - ca.pr.offset_m;
          } else {
            const Edge& ea = net.edges()[ca.edge_idx];
            const double link = routes.between(net.node_index(ea.to), net.node_index(eb.from), bound);
            if (!std::isfinite(link)) continue;
            d_net = (ea.length_m - ca.pr.offset_m) + link + cb.pr.offset_m;
          }
          const double s = prev.score[a] - std::fabs(d_net - d_gc) / params.beta_m;
          if (s > layer.score[b]) {
            layer.score[b] = s;
            layer.back[b] = a;
          }
        }
        if (layer.score[b] != -kInf) layer.score[b] += cb.emission;
      }
      const bool reachable =
          std::any_of(layer.score.begin(), layer.score.end(), [](double s) { return s != -kInf; });
      if (!reachable) chains.emplace_back();
    }
    if (chains.back().empty()) {
      for (std::size_t b = 0; b < layer.cands.size(); ++b) layer.score[b] = layer.cands[b].emission;
    }
    chains.back().push_back(std::move(layer));
  }

  std::vector<std::pair<std::size_t, const Candidate*>> picks;
  for (const auto& chain : chains) {
    if (chain.empty()) continue;
    std::vector<const Candidate*> rev;
    std::size_t best = 0;
    const auto& last = chain.back().score;
    for (std::size_t b = 1; b < last.size(); ++b) {
      if (last[b] > last[best]) best = b;
    }
    for (std::size_t l = chain.size(); l-- > 0;) {
      rev.push_back(&chain[l].cands[best]);
      best = chain[l].back[best];
    }
    for (std::size_t l = 0; l < chain.size(); ++l) picks.emplace_back(chain[l].fix_index, rev[chain.size() - 1 - l]);
  }
  if (picks.empty()) throw Error(ErrorCode::NoCandidates, "no fix lies within radius of any edge");

  for (const auto& [fix_index, c] : picks) {
    const Edge& e = net.edges()[c->edge_idx];
    if (out.edge_sequence.empty()) {
      out.edge_sequence.push_back(e.id);
    } else if (out.edge_sequence.back() != e.id) {
      const Edge& prev = net.edge(out.edge_sequence.back());
      try {
        for (EdgeId x : shortest_path(net, prev.to, e.from).edges) out.edge_sequence.push_back(x);
      } catch (const Error&) {
        // Separate chains on disconnected pieces stay unconnected.
      }
      out.edge_sequence.push_back(e.id);
    }
    out.assignments.push_back({fix_index, e.id, c->pr.offset_m, c->pr.lateral_m, out.edge_sequence.size() - 1});
  }
  return out;
}

std::string to_json_line(const Assignment& a) {
  std::string s = "{\"fix_index\":" + std::to_string(a.fix_index) + ",\"edge_id\":" + std::to_string(a.edge_id) +
                  ",\"offset_m\":";
  detail::append_fixed(s, a.offset_m, 3);
  s += ",\"lateral_m\":";
  detail::append_fixed(s, a.lateral_m, 3);
  s += '}';
  return s;
}

double driven_length_m(const MatchedPath& m, const RoadNetwork& net) {
  double len = 0.0;
  for (EdgeId e : m.edge_sequence) len += net.edge(e).length_m;
  return len;
}

Detour detour_ratio(const MatchedPath& m, const RoadNetwork& net) {
  if (m.edge_sequence.empty()) throw Error(ErrorCode::NoCandidates, "matched path has no edges");
  Detour d;
  d.driven_m = driven_length_m(m, net);
  const NodeId start = net.edge(m.edge_sequence.front()).from;
  const NodeId end = net.edge(m.edge_sequence.back()).to;
  if (start == end) {
    throw Error(ErrorCode::DegenerateTrip, "trip starts and ends at node " + std::to_string(start) +
                                               "; loop length " + detail::fixed(d.driven_m, 1) + " m");
  }
  d.shortest_m = shortest_path(net, start, end).length_m;
  d.ratio = d.driven_m / d.shortest_m;
  return d;
}

std::optional<GettingLostEvent> detect_getting_lost(const MatchedPath& m, std::span<const GnssFix> fixes,
                                                    const RoadNetwork& net, std::span<const double> turn_midpoints,
                                                    const LostParams& params) {
  Detour detour;
  try {
    detour = detour_ratio(m, net);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DegenerateTrip || e.code() == ErrorCode::Unreachable) return std::nullopt;
    throw;
  }
  if (!(detour.ratio > params.ratio_threshold)) return std::nullopt;

  const auto& seq = m.edge_sequence;
  const auto to_dest = distances_to(net, net.edge(seq.back()).to);
  std::size_t k = seq.size();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const Edge& e = net.edge(seq[i]);
    const double du = to_dest[net.node_index(e.from)];
    const double dv = to_dest[net.node_index(e.to)];
    if (e.length_m + dv > du + params.slack_m) {
      k = i;
      break;
    }
  }
  if (k == seq.size()) return std::nullopt;

  GettingLostEvent ev;
  ev.detour = detour;
  ev.first_wrong_edge = seq[k];
  ev.location = net.node(net.edge(seq[k]).from).pos;

  const Assignment* before = nullptr;
  const Assignment* after = nullptr;
  for (const auto& a : m.assignments) {
    if (a.seq_index < k) before = &a;
    if (a.seq_index >= k && !after) after = &a;
  }
  if (after && before) {
    double d_before = net.edge(seq[before->seq_index]).length_m - before->offset_m;
    for (std::size_t i = before->seq_index + 1; i < k; ++i) d_before += net.edge(seq[i]).length_m;
    double d_after = after->offset_m;
    for (std::size_t i = k; i < after->seq_index; ++i) d_after += net.edge(seq[i]).length_m;
    const double ta = fixes[before->fix_index].t, tb = fixes[after->fix_index].t;
    const double sum = d_before + d_after;
    ev.t = sum > 0.0 ? ta + (tb - ta) * d_before / sum : ta;
  } else if (after) {
    ev.t = fixes[after->fix_index].t;
  } else {
    ev.t = fixes[m.assignments.back().fix_index].t;
  }

  double best = params.turn_snap_s;
  const double estimate = ev.t;
  for (double t : turn_midpoints) {
    if (std::fabs(t - estimate) <= best) {
      best = std::fabs(t - estimate);
      ev.t = t;
    }
  }
  return ev;
}

LaneDeviationReport lane_deviation(const MatchedPath& m, std::span<const GnssFix> fixes, const LaneParams& params) {
  LaneDeviationReport rep;
  for (const auto& a : m.assignments) {
    rep.series.push_back({fixes[a.fix_index].t, a.lateral_m});
    const auto q = fixes[a.fix_index].quality;
    if (q != FixQuality::RtkFixed && q != FixQuality::RtkFloat) rep.reliable = false;
  }
  if (!rep.reliable || rep.series.empty()) return rep;

  std::vector<double> gaps;
  for (std::size_t i = 1; i < rep.series.size(); ++i) gaps.push_back(rep.series[i].t - rep.series[i - 1].t);
  double hold = 0.0;
  if (!gaps.empty()) {
    std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2), gaps.end());
    hold = gaps[gaps.size() / 2];
  }

  const auto& s = rep.series;
  for (std::size_t i = 0; i < s.size();) {
    if (std::fabs(s[i].lateral_m) <= params.half_lane_m) {
      ++i;
      continue;
    }
    LaneDeviationEvent ev{s[i].t, 0.0, s[i].lateral_m};
    std::size_t j = i;
    while (j < s.size() && std::fabs(s[j].lateral_m) > params.half_lane_m) {
      if (std::fabs(s[j].lateral_m) > std::fabs(ev.peak_m)) ev.peak_m = s[j].lateral_m;
      ++j;
    }
    ev.t_end = j < s.size() ? s[j].t : s[j - 1].t + hold;
    if (ev.t_end - ev.t_start >= params.min_duration_s - 1e-9) rep.events.push_back(ev);
    i = j;
  }
  return rep;
}

}  // namespace drivesense::net
