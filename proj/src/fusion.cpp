#include "drivesense/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "drivesense/calendar.hpp"
#include "drivesense/error.hpp"
#include "text_util.hpp"

namespace drivesense::fusion {

using motion::MotionEvent;
using motion::MotionKind;
using motion::SpeedSample;
using vision::EpisodeKind;
using vision::EpisodicEvent;
using vision_kind::Light;

namespace {

std::vector<const GnssFix*> positioned_track(std::span<const GnssFix> fixes) {
  const bool have_gga = std::any_of(fixes.begin(), fixes.end(), [](const GnssFix& f) {
    return f.sentence == SentenceKind::Gga && f.position;
  });
  std::vector<const GnssFix*> out;
  for (const auto& f : fixes) {
    if (!f.position || f.quality == FixQuality::NoFix) continue;
    if (have_gga && f.sentence != SentenceKind::Gga) continue;
    out.push_back(&f);
  }
  return out;
}

double speed_at(std::span<const SpeedSample> speed, double t) {
  if (speed.empty()) return 0.0;
  auto it = std::lower_bound(speed.begin(), speed.end(), t, [](const SpeedSample& s, double x) { return s.t < x; });
  if (it == speed.begin()) return speed.front().mps;
  if (it == speed.end()) return speed.back().mps;
  const auto& b = *it;
  const auto& a = *(it - 1);
  if (b.t == a.t) return b.mps;
  return a.mps + (b.mps - a.mps) * (t - a.t) / (b.t - a.t);
}

}  // namespace

// ---- trips -------------------------------------------------------------------

double path_length_m(std::span<const GnssFix> fixes, double t0, double t1) {
  double len = 0.0;
  const GnssFix* prev = nullptr;
  for (const GnssFix* f : positioned_track(fixes)) {
    if (f->t < t0 || f->t > t1) continue;
    if (prev) len += haversine(*prev->position, *f->position);
    prev = f;
  }
  return len;
}

std::vector<TripSpan> segment_trips(std::span<const GnssFix> fixes, std::span<const SpeedSample> speed,
                                    const SegmentParams& p) {
  std::vector<TripSpan> trips;
  bool in_trip = false;
  constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();
  double fast_since = kUnset, slow_since = kUnset;
  TripSpan cur;
  for (const auto& s : speed) {
    const double kph = s.mps * 3.6;
    if (!in_trip) {
      if (kph > p.start_kph) {
        if (std::isnan(fast_since)) fast_since = s.t;
        if (s.t - fast_since >= p.start_sustain_s) {
          in_trip = true;
          cur = {fast_since, s.t, 0.0};
          slow_since = kUnset;
        }
      } else {
        fast_since = kUnset;
      }
      continue;
    }
    cur.t_end = s.t;
    if (kph < p.stop_kph) {
      if (std::isnan(slow_since)) slow_since = s.t;
      if (s.t - slow_since >= p.stop_sustain_s) {
        cur.t_end = slow_since;
        trips.push_back(cur);
        in_trip = false;
        fast_since = kUnset;
      }
    } else {
      slow_since = kUnset;
    }
  }
  if (in_trip) trips.push_back(cur);
  for (auto& t : trips) t.distance_m = path_length_m(fixes, t.t_start, t.t_end);
  return trips;
}

// ---- detected events -----------------------------------------------------------

namespace {

constexpr std::pair<EventKind, std::string_view> kEventNames[] = {
    {EventKind::HarshAccel, "harsh_accel"},
    {EventKind::HarshBrake, "harsh_brake"},
    {EventKind::HarshCorner, "harsh_corner"},
    {EventKind::Pothole, "pothole"},
    {EventKind::EyesClosed, "eyes_closed"},
    {EventKind::Yawn, "yawn"},
    {EventKind::Distraction, "distraction"},
    {EventKind::PhoneUse, "phone_use"},
    {EventKind::Smoking, "smoking"},
    {EventKind::LaneCrossing, "lane_crossing"},
    {EventKind::NearCollision, "near_collision"},
    {EventKind::StopSignEncounter, "stop_sign_encounter"},
    {EventKind::TrafficLightEncounter, "traffic_light_encounter"},
    {EventKind::PedestrianEncounter, "pedestrian_encounter"},
    {EventKind::RedLightRun, "red_light_run"},
    {EventKind::StopSignViolation, "stop_sign_violation"},
    {EventKind::ReactionSample, "reaction_sample"},
    {EventKind::MissedStimulus, "missed_stimulus"},
    {EventKind::GettingLost, "getting_lost"},
    {EventKind::LaneDeviation, "lane_deviation"},
};

constexpr std::pair<StimulusKind, std::string_view> kStimulusNames[] = {
    {StimulusKind::LightToGreen, "light_to_green"},
    {StimulusKind::LightToRed, "light_to_red"},
    {StimulusKind::TaillightOn, "taillight_on"},
    {StimulusKind::Pothole, "pothole"},
};

bool is_go(StimulusKind k) { return k == StimulusKind::LightToGreen; }

}  // namespace

std::string_view to_string(EventKind k) {
  for (auto [kind, name] : kEventNames) {
    if (kind == k) return name;
  }
  return "unknown";
}

EventKind event_kind_from_string(std::string_view s) {
  for (auto [kind, name] : kEventNames) {
    if (name == s) return kind;
  }
  throw Error(ErrorCode::UnknownKind, "event kind '" + std::string(s) + "'");
}

std::string_view to_string(StimulusKind k) {
  for (auto [kind, name] : kStimulusNames) {
    if (kind == k) return name;
  }
  return "unknown";
}

StimulusKind stimulus_kind_from_string(std::string_view s) {
  for (auto [kind, name] : kStimulusNames) {
    if (name == s) return kind;
  }
  throw Error(ErrorCode::UnknownKind, "stimulus kind '" + std::string(s) + "'");
}

EventKind event_kind_of(MotionKind k) {
  switch (k) {
    case MotionKind::HarshAccel: return EventKind::HarshAccel;
    case MotionKind::HarshBrake: return EventKind::HarshBrake;
    case MotionKind::HarshCorner: return EventKind::HarshCorner;
    case MotionKind::Pothole: return EventKind::Pothole;
  }
  return EventKind::Pothole;
}

EventKind event_kind_of(EpisodeKind k) {
  switch (k) {
    case EpisodeKind::EyesClosedEpisode: return EventKind::EyesClosed;
    case EpisodeKind::YawnEpisode: return EventKind::Yawn;
    case EpisodeKind::DistractionEpisode: return EventKind::Distraction;
    case EpisodeKind::PhoneUseEpisode: return EventKind::PhoneUse;
    case EpisodeKind::SmokingEpisode: return EventKind::Smoking;
    case EpisodeKind::LaneCrossingEvent: return EventKind::LaneCrossing;
    case EpisodeKind::NearCollisionEvent: return EventKind::NearCollision;
    case EpisodeKind::StopSignEncounter: return EventKind::StopSignEncounter;
    case EpisodeKind::TrafficLightEncounter: return EventKind::TrafficLightEncounter;
    case EpisodeKind::PedestrianEncounter: return EventKind::PedestrianEncounter;
  }
  return EventKind::LaneCrossing;
}

std::string to_json_line(const DetectedEvent& e) {
  std::string s = "{\"kind\":\"";
  s += to_string(e.kind);
  s += "\",\"t\":";
  detail::append_fixed(s, e.t, 3);
  s += ",\"duration_s\":";
  detail::append_fixed(s, e.duration_s, 3);
  if (e.location) {
    s += ",\"lat\":";
    detail::append_fixed(s, e.location->lat, 7);
    s += ",\"lon\":";
    detail::append_fixed(s, e.location->lon, 7);
  }
  s += ",\"severity\":" + std::to_string(e.severity);
  s += ",\"value\":";
  detail::append_fixed(s, e.value, 3);
  if (e.stimulus) {
    s += ",\"stimulus\":\"";
    s += to_string(*e.stimulus);
    s += '"';
  }
  if (e.gaze_offroad) s += std::string(",\"gaze_offroad\":") + (*e.gaze_offroad ? "true" : "false");
  s += '}';
  return s;
}

DetectedEvent parse_detected_event(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    DetectedEvent e;
    e.kind = event_kind_from_string(j.at("kind").get<std::string>());
    e.t = j.at("t").get<double>();
    e.duration_s = j.at("duration_s").get<double>();
    if (j.contains("lat")) e.location = LatLon{j.at("lat").get<double>(), j.at("lon").get<double>()};
    e.severity = j.at("severity").get<int>();
    e.value = j.at("value").get<double>();
    if (j.contains("stimulus")) e.stimulus = stimulus_kind_from_string(j.at("stimulus").get<std::string>());
    if (j.contains("gaze_offroad")) e.gaze_offroad = j.at("gaze_offroad").get<bool>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::MalformedField, std::string("detected event: ") + ex.what());
  }
}

std::optional<LatLon> locate(std::span<const GnssFix> fixes, double t, double max_gap_s) {
  const GnssFix* best = nullptr;
  auto it = std::lower_bound(fixes.begin(), fixes.end(), t, [](const GnssFix& f, double x) { return f.t < x; });
  // Scan outward; fixes are time-sorted.
  for (auto fwd = it; fwd != fixes.end() && fwd->t - t <= max_gap_s; ++fwd) {
    if (fwd->position && fwd->quality != FixQuality::NoFix) {
      best = &*fwd;
      break;
    }
  }
  for (auto back = it; back != fixes.begin();) {
    --back;
    if (t - back->t > max_gap_s) break;
    if (back->position && back->quality != FixQuality::NoFix) {
      if (!best || t - back->t < best->t - t) best = &*back;
      break;
    }
  }
  if (!best) return std::nullopt;
  return best->position;
}

// ---- reaction time ---------------------------------------------------------------

std::vector<Stimulus> collect_stimuli(std::span<const EpisodicEvent> encounters,
                                      std::span<const VisionEvent> vision_events,
                                      std::span<const MotionEvent> potholes) {
  std::vector<Stimulus> out;
  for (const auto& e : encounters) {
    if (e.kind != EpisodeKind::TrafficLightEncounter) continue;
    for (std::size_t i = 1; i < e.light_runs.size(); ++i) {
      const auto& a = e.light_runs[i - 1];
      const auto& b = e.light_runs[i];
      if (a.state == Light::Red && b.state == Light::Green) out.push_back({StimulusKind::LightToGreen, b.t_first});
      if (a.state == Light::Green && b.state != Light::Green) out.push_back({StimulusKind::LightToRed, b.t_first});
    }
  }
  std::optional<bool> last_on;
  for (const auto& v : vision_events) {
    const auto* tl = std::get_if<vision_kind::FrontTaillight>(&v.kind);
    if (!tl) continue;
    if (tl->on && last_on == false) out.push_back({StimulusKind::TaillightOn, v.t});
    last_on = tl->on;
  }
  for (const auto& p : potholes) {
    if (p.kind == MotionKind::Pothole) out.push_back({StimulusKind::Pothole, p.t_peak});
  }
  std::stable_sort(out.begin(), out.end(), [](const Stimulus& a, const Stimulus& b) { return a.t < b.t; });
  return out;
}

ResponseChannels response_channels(std::span<const motion::VehicleFrameAccel> accel, std::span<const ObdReading> obd,
                                   const ReactionParams& p) {
  ResponseChannels r;
  const double thr = p.brake_onset_mps2;
  for (std::size_t i = 1; i < accel.size(); ++i) {
    const double a0 = accel[i - 1].a_long, a1 = accel[i].a_long;
    if (a0 >= thr && a1 < thr) {
      const double f = (a0 - thr) / (a0 - a1);
      r.brake_onsets.push_back(accel[i - 1].t + f * (accel[i].t - accel[i - 1].t));
    }
  }
  const ObdReading* prev = nullptr;
  const double pt = p.pedal_threshold_pct;
  for (const auto& o : obd) {
    if (o.quantity != ObdQuantity::PedalPct) continue;
    if (prev) {
      const double v0 = prev->value, v1 = o.value;
      const double f = v1 != v0 ? (v0 - pt) / (v0 - v1) : 0.0;
      const double t = prev->t + f * (o.t - prev->t);
      if (v0 > pt && v1 <= pt) r.pedal_releases.push_back(t);
      if (v0 <= pt && v1 > pt) r.pedal_presses.push_back(t);
    }
    prev = &o;
  }
  return r;
}

ReactionResult reaction_time(std::span<const Stimulus> stimuli, const ResponseChannels& responses,
                             const ReactionParams& p) {
  ReactionResult out;
  auto first_after = [&](const std::vector<double>& v, double t) -> std::optional<double> {
    auto it = std::upper_bound(v.begin(), v.end(), t);
    if (it != v.end() && *it - t <= p.max_window_s) return *it;
    return std::nullopt;
  };
  for (const auto& s : stimuli) {
    std::optional<double> resp;
    if (is_go(s.kind)) {
      resp = first_after(responses.pedal_presses, s.t);
    } else {
      const auto brake = first_after(responses.brake_onsets, s.t);
      const auto release = first_after(responses.pedal_releases, s.t);
      resp = brake;
      if (release && (!resp || *release < *resp)) resp = release;
    }
    if (resp && *resp > s.t) {
      out.samples.push_back({s.kind, s.t, *resp - s.t});
    } else {
      out.missed.push_back(s);
    }
  }
  return out;
}

// ---- signal compliance -------------------------------------------------------

double advance_m(std::span<const SpeedSample> speed, double t0, double t1) {
  if (!(t1 > t0) || speed.empty()) return 0.0;
  std::vector<std::pair<double, double>> pts{{t0, speed_at(speed, t0)}};
  for (const auto& s : speed) {
    if (s.t > t0 && s.t < t1) pts.emplace_back(s.t, s.mps);
  }
  pts.emplace_back(t1, speed_at(speed, t1));
  double d = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    d += 0.5 * (pts[i].second + pts[i - 1].second) * (pts[i].first - pts[i - 1].first);
  }
  return d;
}

std::vector<DetectedEvent> signal_compliance(std::span<const EpisodicEvent> encounters,
                                             std::span<const SpeedSample> speed, const ComplianceParams& p) {
  std::vector<DetectedEvent> out;
  for (const auto& e : encounters) {
    if (e.kind == EpisodeKind::TrafficLightEncounter && !e.light_runs.empty() &&
        e.light_runs.back().state == Light::Red) {
      const auto& red = e.light_runs.back();
      const double adv = advance_m(speed, std::max(red.t_first, red.t_last - p.red_window_s), red.t_last);
      if (adv > p.red_advance_m) {
        DetectedEvent d;
        d.kind = EventKind::RedLightRun;
        d.t = red.t_last;
        d.duration_s = red.t_last - red.t_first;
        d.value = adv;
        d.severity = adv < 2.0 * p.red_advance_m ? 2 : 3;
        out.push_back(d);
      }
    }
    if (e.kind == EpisodeKind::StopSignEncounter) {
      const double t1 = std::max(e.t_end, e.t_start + p.stop_window_s);
      if (speed.empty() || speed.back().t < e.t_start || speed.front().t > t1) continue;
      double min_kph = speed_at(speed, e.t_start) * 3.6;
      for (const auto& s : speed) {
        if (s.t >= e.t_start && s.t <= t1) min_kph = std::min(min_kph, s.mps * 3.6);
      }
      min_kph = std::min(min_kph, speed_at(speed, t1) * 3.6);
      if (min_kph >= p.stop_min_kph) {
        DetectedEvent d;
        d.kind = EventKind::StopSignViolation;
        d.t = e.t_end;
        d.duration_s = e.t_end - e.t_start;
        d.value = min_kph;
        d.severity = min_kph < 10.0 ? 1 : (min_kph < 20.0 ? 2 : 3);
        out.push_back(d);
      }
    }
  }
  return out;
}

// ---- braking pattern ---------------------------------------------------------

std::vector<AnnotatedBrake> braking_pattern(std::span<const MotionEvent> events,
                                            std::span<const EpisodicEvent> episodes, double lookback_s) {
  std::vector<AnnotatedBrake> out;
  for (const auto& b : events) {
    if (b.kind != MotionKind::HarshBrake) continue;
    AnnotatedBrake a{b, false};
    for (const auto& ep : episodes) {
      if (ep.kind != EpisodeKind::DistractionEpisode && ep.kind != EpisodeKind::EyesClosedEpisode) continue;
      if (ep.t_end >= b.t_start - lookback_s && ep.t_start <= b.t_start) {
        a.gaze_offroad = true;
        break;
      }
    }
    out.push_back(a);
  }
  return out;
}

// ---- weather and travel -------------------------------------------------------

std::string_view to_string(Weather w) {
  switch (w) {
    case Weather::Clear: return "clear";
    case Weather::Rain: return "rain";
    case Weather::SevereRain: return "severe_rain";
    case Weather::Fog: return "fog";
  }
  return "clear";
}

Weather weather_from_string(std::string_view s) {
  for (auto w : {Weather::Clear, Weather::Rain, Weather::SevereRain, Weather::Fog}) {
    if (to_string(w) == s) return w;
  }
  throw Error(ErrorCode::MalformedField, "weather condition '" + std::string(s) + "'");
}

std::vector<WeatherRecord> parse_weather(std::string_view text) {
  std::vector<WeatherRecord> out;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& r : j.at("records")) {
      WeatherRecord w;
      w.t_start = calendar::parse_iso8601(r.at("t_start").get<std::string>());
      w.t_end = calendar::parse_iso8601(r.at("t_end").get<std::string>());
      const auto& b = r.at("bbox");
      w.min_lat = b.at(0).get<double>();
      w.min_lon = b.at(1).get<double>();
      w.max_lat = b.at(2).get<double>();
      w.max_lon = b.at(3).get<double>();
      w.condition = weather_from_string(r.at("condition").get<std::string>());
      if (w.t_end <= w.t_start) throw Error(ErrorCode::InvariantViolation, "weather record with t_end <= t_start");
      out.push_back(w);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::MalformedField, std::string("weather json: ") + ex.what());
  }
  return out;
}

std::string weather_to_json(std::span<const WeatherRecord> records) {
  nlohmann::ordered_json j;
  auto& arr = j["records"] = nlohmann::ordered_json::array();
  for (const auto& w : records) {
    arr.push_back({{"t_start", calendar::format_iso8601(w.t_start)},
                   {"t_end", calendar::format_iso8601(w.t_end)},
                   {"bbox", {w.min_lat, w.min_lon, w.max_lat, w.max_lon}},
                   {"condition", std::string(to_string(w.condition))}});
  }
  return j.dump(2) + "\n";
}

TravelStats travel_pattern(const TripSpan& trip, std::span<const GnssFix> fixes, std::int64_t epoch_utc,
                           const net::MatchedPath* matched, const net::RoadNetwork* network,
                           std::span<const WeatherRecord> weather, const TravelParams& p) {
  std::vector<std::optional<net::EdgeId>> edge_of(fixes.size());
  if (matched) {
    for (const auto& a : matched->assignments) {
      if (a.fix_index < edge_of.size()) edge_of[a.fix_index] = a.edge_id;
    }
  }
  TravelStats st;
  const GnssFix* prev = nullptr;
  for (const GnssFix* f : positioned_track(fixes)) {
    if (f->t < trip.t_start || f->t > trip.t_end) continue;
    if (!prev) {
      prev = f;
      continue;
    }
    const double step = haversine(*prev->position, *f->position);
    st.distance_m += step;
    const auto idx = static_cast<std::size_t>(f - fixes.data());
    if (network && edge_of[idx] && network->has_edge(*edge_of[idx]) &&
        network->edge(*edge_of[idx]).road_class == net::RoadClass::Highway) {
      st.highway_m += step;
    }
    const double t_mid = 0.5 * (prev->t + f->t);
    const double unix_mid = static_cast<double>(epoch_utc) + t_mid;
    const double local = unix_mid + p.utc_offset_h * 3600.0;
    const double sod = local - 86400.0 * std::floor(local / 86400.0);
    if (p.night.contains(static_cast<int>(sod / 60.0))) st.night_m += step;
    const LatLon mid{0.5 * (prev->position->lat + f->position->lat), 0.5 * (prev->position->lon + f->position->lon)};
    for (const auto& w : weather) {
      if (w.condition != Weather::SevereRain && w.condition != Weather::Fog) continue;
      if (unix_mid < static_cast<double>(w.t_start) || unix_mid >= static_cast<double>(w.t_end)) continue;
      if (mid.lat < w.min_lat || mid.lat > w.max_lat || mid.lon < w.min_lon || mid.lon > w.max_lon) continue;
      st.severe_weather_m += step;
      break;
    }
    prev = f;
  }
  return st;
}

// ---- severity ----------------------------------------------------------------

int severity_of_motion(const MotionEvent& e, const motion::HarshThresholds& th) {
  double ratio = 0.0;
  switch (e.kind) {
    case MotionKind::HarshAccel: ratio = std::fabs(e.peak) / std::fabs(th.accel); break;
    case MotionKind::HarshBrake: ratio = std::fabs(e.peak) / std::fabs(th.brake); break;
    case MotionKind::HarshCorner: ratio = std::fabs(e.peak) / std::fabs(th.corner); break;
    case MotionKind::Pothole: ratio = std::fabs(e.peak) / 4.0; break;
  }
  return ratio < 4.0 / 3.0 ? 1 : (ratio < 5.0 / 3.0 ? 2 : 3);
}

int severity_of_episode(const EpisodicEvent& e) {
  const double d = e.t_end - e.t_start;
  switch (e.kind) {
    case EpisodeKind::EyesClosedEpisode: return d < 1.0 ? 1 : (d < 2.0 ? 2 : 3);
    case EpisodeKind::DistractionEpisode: return d < 4.0 ? 1 : (d < 8.0 ? 2 : 3);
    case EpisodeKind::PhoneUseEpisode: return d < 10.0 ? 2 : 3;
    case EpisodeKind::NearCollisionEvent: {
      const double m = e.min_distance_m.value_or(8.0);
      return m > 5.0 ? 1 : (m > 3.0 ? 2 : 3);
    }
    default: return 1;
  }
}

}  // namespace drivesense::fusion
