#include "drivesense/vision.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "drivesense/error.hpp"
#include "drivesense/geo.hpp"

namespace drivesense::vision {

std::string_view to_string(EpisodeKind k) {
  switch (k) {
    case EpisodeKind::EyesClosedEpisode: return "eyes_closed";
    case EpisodeKind::YawnEpisode: return "yawn";
    case EpisodeKind::DistractionEpisode: return "distraction";
    case EpisodeKind::PhoneUseEpisode: return "phone_use";
    case EpisodeKind::SmokingEpisode: return "smoking";
    case EpisodeKind::LaneCrossingEvent: return "lane_crossing";
    case EpisodeKind::NearCollisionEvent: return "near_collision";
    case EpisodeKind::StopSignEncounter: return "stop_sign_encounter";
    case EpisodeKind::TrafficLightEncounter: return "traffic_light_encounter";
    case EpisodeKind::PedestrianEncounter: return "pedestrian_encounter";
  }
  return "lane_crossing";
}

EpisodeKind episode_kind_from_string(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(EpisodeKind::PedestrianEncounter); ++i) {
    const auto k = static_cast<EpisodeKind>(i);
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::UnknownKind, "episode kind '" + std::string(s) + "'");
}

namespace {

double wrap_deg(double a) {
  a = std::fmod(a + 180.0, 360.0);
  if (a < 0.0) a += 360.0;
  return a - 180.0;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

// Boolean samples under sample-and-hold; the last sample holds for the
// median spacing.
struct HeldSeries {
  std::vector<double> t;
  std::vector<char> on;
  std::vector<double> hold;
  std::vector<double> on_prefix;  // on-time before sample i

  void finish() {
    const std::size_t n = t.size();
    hold.assign(n, 0.0);
    std::vector<double> gaps;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      hold[i] = t[i + 1] - t[i];
      gaps.push_back(hold[i]);
    }
    if (n > 0) hold[n - 1] = median_of(gaps);
    on_prefix.assign(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) on_prefix[i + 1] = on_prefix[i] + (on[i] ? hold[i] : 0.0);
  }

  double end() const { return t.empty() ? 0.0 : t.back() + hold.back(); }

  // On-time within [start of series, x].
  double on_before(double x) const {
    if (t.empty() || x <= t.front()) return 0.0;
    const auto it = std::upper_bound(t.begin(), t.end(), x);
    const std::size_t k = static_cast<std::size_t>(it - t.begin()) - 1;
    return on_prefix[k] + (on[k] ? std::min(x - t[k], hold[k]) : 0.0);
  }
  double covered_before(double x) const {
    if (t.empty() || x <= t.front()) return 0.0;
    return std::min(x, end()) - t.front();
  }
};

struct Run {
  double t_start = 0.0;
  double t_end = 0.0;
  std::size_t first = 0;
  std::size_t last = 0;
};

std::vector<Run> on_runs(const HeldSeries& s, double merge_gap_s) {
  std::vector<Run> runs;
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    if (!s.on[i]) continue;
    const double end = s.t[i] + s.hold[i];
    if (!runs.empty() && (runs.back().last + 1 == i || s.t[i] - runs.back().t_end < merge_gap_s)) {
      runs.back().t_end = end;
      runs.back().last = i;
    } else {
      runs.push_back({s.t[i], end, i, i});
    }
  }
  return runs;
}

template <class Kind, class Pred>
HeldSeries held_series(std::span<const VisionEvent> events, Pred pred) {
  HeldSeries s;
  for (const auto& e : events) {
    const auto* k = std::get_if<Kind>(&e.kind);
    if (!k) continue;
    if (!s.t.empty() && e.t <= s.t.back()) continue;
    s.t.push_back(e.t);
    s.on.push_back(pred(*k) ? 1 : 0);
  }
  s.finish();
  return s;
}

HeldSeries eye_series(std::span<const VisionEvent> events) {
  return held_series<vision_kind::EyeState>(events, [](const vision_kind::EyeState& k) { return k.closed; });
}

}  // namespace

std::vector<PerclosPoint> perclos(std::span<const VisionEvent> events, double window_s) {
  if (!(window_s > 0.0)) throw std::invalid_argument("window_s must be > 0");
  const HeldSeries s = eye_series(events);
  if (s.t.empty()) throw Error(ErrorCode::EmptyStream, "no eye-state samples");
  std::vector<PerclosPoint> out;
  out.reserve(s.t.size());
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    const double end = s.t[i] + s.hold[i];
    const double start = end - window_s;
    const double covered = s.covered_before(end) - s.covered_before(start);
    const double closed = s.on_before(end) - s.on_before(start);
    const double f = covered > 0.0 ? std::clamp(closed / covered, 0.0, 1.0) : (s.on[i] ? 1.0 : 0.0);
    out.push_back({s.t[i], f});
  }
  return out;
}

double mounting_yaw_deg(std::span<const VisionEvent> events, double calib_s) {
  std::vector<double> yaws;
  double t0 = std::numeric_limits<double>::quiet_NaN();
  for (const auto& e : events) {
    const auto* hp = std::get_if<vision_kind::HeadPose>(&e.kind);
    if (!hp) continue;
    if (std::isnan(t0)) t0 = e.t;
    if (e.t > t0 + calib_s) break;
    yaws.push_back(hp->yaw_deg);
  }
  if (yaws.empty()) return 0.0;
  double sx = 0.0, sy = 0.0;
  for (double y : yaws) {
    sx += std::cos(deg2rad(y));
    sy += std::sin(deg2rad(y));
  }
  const double center = rad2deg(std::atan2(sy, sx));
  std::vector<double> dev;
  dev.reserve(yaws.size());
  for (double y : yaws) dev.push_back(wrap_deg(y - center));
  return wrap_deg(center + median_of(std::move(dev)));
}

std::vector<EpisodicEvent> detect_distraction(std::span<const VisionEvent> events, const DistractionParams& p) {
  const double mount = p.mounting_yaw_deg.value_or(mounting_yaw_deg(events, p.calib_s));
  HeldSeries s;
  std::vector<double> excursion;
  for (const auto& e : events) {
    const auto* hp = std::get_if<vision_kind::HeadPose>(&e.kind);
    if (!hp) continue;
    if (!s.t.empty() && e.t <= s.t.back()) continue;
    const double x = wrap_deg(hp->yaw_deg - mount);
    s.t.push_back(e.t);
    s.on.push_back(std::fabs(x) > p.yaw_thresh_deg ? 1 : 0);
    excursion.push_back(x);
  }
  s.finish();
  std::vector<EpisodicEvent> out;
  for (const auto& r : on_runs(s, p.merge_gap_s)) {
    if (r.t_end - r.t_start < p.min_duration_s) continue;
    EpisodicEvent ep;
    ep.kind = EpisodeKind::DistractionEpisode;
    ep.t_start = r.t_start;
    ep.t_end = r.t_end;
    double peak = 0.0;
    for (std::size_t i = r.first; i <= r.last; ++i) {
      if (s.on[i]) ++ep.n_raw;
      if (std::fabs(excursion[i]) > std::fabs(peak)) peak = excursion[i];
    }
    ep.max_yaw_deg = peak;
    out.push_back(ep);
  }
  return out;
}

std::vector<EpisodicEvent> detect_eyes_closed(std::span<const VisionEvent> events, double min_duration_s) {
  const HeldSeries s = eye_series(events);
  std::vector<EpisodicEvent> out;
  for (const auto& r : on_runs(s, 0.0)) {
    if (r.t_end - r.t_start < min_duration_s) continue;
    EpisodicEvent ep;
    ep.kind = EpisodeKind::EyesClosedEpisode;
    ep.t_start = r.t_start;
    ep.t_end = r.t_end;
    ep.n_raw = r.last - r.first + 1;
    out.push_back(ep);
  }
  return out;
}

std::vector<EpisodicEvent> detect_yawning(std::span<const VisionEvent> events, double min_duration_s) {
  const HeldSeries mouth =
      held_series<vision_kind::Yawn>(events, [](const vision_kind::Yawn& k) { return k.mouth_open; });
  const HeldSeries eyes = eye_series(events);
  std::vector<EpisodicEvent> out;
  for (const auto& r : on_runs(mouth, 0.0)) {
    const double dur = r.t_end - r.t_start;
    if (dur < min_duration_s) continue;
    const double closed = eyes.on_before(r.t_end) - eyes.on_before(r.t_start);
    if (closed < 0.5 * dur) continue;
    EpisodicEvent ep;
    ep.kind = EpisodeKind::YawnEpisode;
    ep.t_start = r.t_start;
    ep.t_end = r.t_end;
    ep.n_raw = r.last - r.first + 1;
    out.push_back(ep);
  }
  return out;
}

namespace {

// Groups detections whose spacing is below `gap` (strictly) into episodes.
template <class Kind, class Extend>
void group_detections(std::span<const VisionEvent> events, EpisodeKind kind, double gap, bool gap_inclusive,
                      std::vector<EpisodicEvent>& out, Extend extend) {
  EpisodicEvent cur;
  bool open = false;
  for (const auto& e : events) {
    const auto* k = std::get_if<Kind>(&e.kind);
    if (!k) continue;
    const double since = e.t - cur.t_end;
    const bool joins = open && (gap_inclusive ? since <= gap : since < gap);
    if (!joins) {
      if (open) out.push_back(std::move(cur));
      cur = EpisodicEvent{};
      cur.kind = kind;
      cur.t_start = e.t;
      open = true;
    }
    cur.t_end = e.t;
    ++cur.n_raw;
    extend(cur, *k, e.t);
  }
  if (open) out.push_back(std::move(cur));
}

}  // namespace

std::vector<EpisodicEvent> episodic_counts(std::span<const VisionEvent> events, const EpisodeParams& p) {
  using namespace vision_kind;
  std::vector<EpisodicEvent> out;
  auto nothing = [](EpisodicEvent&, const auto&, double) {};
  group_detections<LaneCrossing>(events, EpisodeKind::LaneCrossingEvent, p.lane_merge_s, false, out, nothing);
  group_detections<PhoneUse>(events, EpisodeKind::PhoneUseEpisode, p.object_gap_s, false, out, nothing);
  group_detections<Smoking>(events, EpisodeKind::SmokingEpisode, p.object_gap_s, false, out, nothing);
  group_detections<StopSign>(events, EpisodeKind::StopSignEncounter, p.encounter_gap_s, true, out, nothing);
  group_detections<Pedestrian>(events, EpisodeKind::PedestrianEncounter, p.encounter_gap_s, true, out,
                               [](EpisodicEvent& ep, const Pedestrian& k, double) {
                                 ep.pedestrian_crossing = ep.pedestrian_crossing.value_or(false) || k.crossing;
                               });
  group_detections<TrafficLight>(events, EpisodeKind::TrafficLightEncounter, p.encounter_gap_s, true, out,
                                 [](EpisodicEvent& ep, const TrafficLight& k, double t) {
                                   if (!ep.light_runs.empty() && ep.light_runs.back().state == k.state) {
                                     ep.light_runs.back().t_last = t;
                                   } else {
                                     ep.light_runs.push_back({k.state, t, t});
                                   }
                                 });

  // Near collisions: only detections closer than the threshold count.
  EpisodicEvent cur;
  bool open = false;
  for (const auto& e : events) {
    const auto* k = std::get_if<NearCollision>(&e.kind);
    if (!k || !(k->distance_m < p.near_collision_m)) continue;
    if (!open || e.t - cur.t_end > p.near_collision_gap_s) {
      if (open) out.push_back(cur);
      cur = EpisodicEvent{};
      cur.kind = EpisodeKind::NearCollisionEvent;
      cur.t_start = e.t;
      cur.min_distance_m = k->distance_m;
      open = true;
    }
    cur.t_end = e.t;
    ++cur.n_raw;
    cur.min_distance_m = std::min(*cur.min_distance_m, k->distance_m);
  }
  if (open) out.push_back(cur);

  std::stable_sort(out.begin(), out.end(),
                   [](const EpisodicEvent& a, const EpisodicEvent& b) { return a.t_start < b.t_start; });
  return out;
}

std::vector<EpisodicEvent> all_episodes(std::span<const VisionEvent> events, const VisionParams& p) {
  std::vector<EpisodicEvent> out = episodic_counts(events, p.episodes);
  auto distraction = detect_distraction(events, p.distraction);
  auto yawns = detect_yawning(events, p.yawn_min_s);
  auto closed = detect_eyes_closed(events, p.eyes_closed_min_s);
  std::erase_if(closed, [&yawns](const EpisodicEvent& c) {
    return std::any_of(yawns.begin(), yawns.end(), [&c](const EpisodicEvent& y) {
      return c.t_start < y.t_end && y.t_start < c.t_end;
    });
  });
  for (auto* v : {&distraction, &yawns, &closed}) out.insert(out.end(), v->begin(), v->end());
  std::stable_sort(out.begin(), out.end(),
                   [](const EpisodicEvent& a, const EpisodicEvent& b) { return a.t_start < b.t_start; });
  return out;
}

std::string to_json_line(const EpisodicEvent& e) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(e.kind);
  j["t_start"] = std::round(e.t_start * 1000.0) / 1000.0;
  j["t_end"] = std::round(e.t_end * 1000.0) / 1000.0;
  j["n_raw"] = e.n_raw;
  if (e.max_yaw_deg) j["max_yaw_deg"] = std::round(*e.max_yaw_deg * 10.0) / 10.0;
  if (e.min_distance_m) j["min_distance_m"] = std::round(*e.min_distance_m * 100.0) / 100.0;
  if (!e.light_runs.empty()) {
    auto seq = nlohmann::json::array();
    for (const auto& r : e.light_runs) seq.push_back(std::string(drivesense::to_string(r.state)));
    j["light_state_sequence"] = seq;
  }
  if (e.pedestrian_crossing) j["pedestrian_crossing"] = *e.pedestrian_crossing;
  return j.dump();
}

}  // namespace drivesense::vision
