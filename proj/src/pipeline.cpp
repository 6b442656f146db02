#include "drivesense/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "drivesense/error.hpp"
#include "drivesense/ingest.hpp"
#include "drivesense/stream_io.hpp"
#include "drivesense/vision.hpp"

namespace drivesense::pipeline {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using fusion::DetectedEvent;
using fusion::EventKind;

constexpr std::size_t kMaxMessages = 5;

void note(StreamCheck& c, std::string msg) {
  if (c.messages.size() < kMaxMessages) c.messages.push_back(std::move(msg));
}

template <class P, class R>
void check_stream(StreamCheck& c, const P& parsed, const std::vector<R>& records, double max_gap,
                  double max_error_fraction) {
  c.records = records.size();
  c.line_errors += parsed.errors.size();
  for (const auto& e : parsed.errors) note(c, "line " + std::to_string(e.line) + ": " + e.message);
  const auto report = ingest::validate_stream(records, ingest::ValidationOptions{max_gap});
  for (const auto& f : report.findings) {
    switch (f.kind) {
      case ingest::FindingKind::NonMonotonic: ++c.non_monotonic; break;
      case ingest::FindingKind::InvariantViolation: ++c.invariant_violations; break;
      case ingest::FindingKind::Gap: ++c.gaps; break;
    }
    if (f.kind != ingest::FindingKind::Gap) note(c, "record " + std::to_string(f.index) + ": " + f.detail);
  }
  const double total = static_cast<double>(c.records + c.line_errors);
  c.ok = c.non_monotonic == 0 && c.invariant_violations == 0 &&
         (total == 0.0 || static_cast<double>(c.line_errors) / total <= max_error_fraction);
}

// GGA fixes carry the position; RMC repeats it, so the track keeps one per epoch.
std::vector<GnssFix> track_of(const std::vector<GnssFix>& fixes) {
  const bool have_gga = std::any_of(fixes.begin(), fixes.end(), [](const GnssFix& f) {
    return f.sentence == SentenceKind::Gga && f.position;
  });
  std::vector<GnssFix> out;
  for (const auto& f : fixes) {
    if (!f.position || f.quality == FixQuality::NoFix) continue;
    if (have_gga && f.sentence != SentenceKind::Gga) continue;
    out.push_back(f);
  }
  return out;
}

ojson clock_json(const sync::ClockModel& m) {
  return ojson{{"offset_s", m.offset_s},
               {"drift_ppm", m.drift_ppm},
               {"rms_residual_s", m.rms_residual_s},
               {"n_anchors", m.n_anchors}};
}

sync::ClockModel clock_from(const json& j) {
  return {j.at("offset_s").get<double>(), j.at("drift_ppm").get<double>(), j.at("rms_residual_s").get<double>(),
          j.at("n_anchors").get<std::size_t>()};
}

bool event_less(const DetectedEvent& a, const DetectedEvent& b) {
  if (a.t != b.t) return a.t < b.t;
  return static_cast<int>(a.kind) < static_cast<int>(b.kind);
}

}  // namespace

bool Ingested::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const StreamCheck& c) { return c.ok; });
}

Ingested ingest(const RawTrip& raw, const config::Config& cfg) {
  Ingested out;
  const auto& lim = cfg.ingest;
  std::optional<std::int64_t> epoch;
  auto header_epoch = [&](StreamCheck& c, const io::StreamHeader& h) {
    if (!epoch) {
      epoch = h.epoch_utc;
    } else if (*epoch != h.epoch_utc) {
      c.ok = false;
      note(c, "header epoch differs from the gnss stream");
    }
  };
  auto guarded = [&](const char* name, auto&& body) {
    StreamCheck c;
    c.stream = name;
    try {
      body(c);
    } catch (const Error& e) {
      c.ok = false;
      note(c, e.what());
    }
    out.checks.push_back(std::move(c));
  };

  guarded("gnss", [&](StreamCheck& c) {
    const auto p = io::read_gnss(raw.gnss_nmea);
    out.gnss = p.records;
    header_epoch(c, p.header);
    check_stream(c, p, out.gnss, lim.gnss_max_gap_s, lim.max_line_error_fraction);
    if (out.gnss.empty()) {
      c.ok = false;
      note(c, "no fixes");
    }
  });
  guarded("vision_nmea", [&](StreamCheck& c) {
    if (raw.vision_nmea.empty()) {
      note(c, "absent");
      return;
    }
    const auto p = io::read_gnss(raw.vision_nmea);
    out.vision_anchors = p.records;
    header_epoch(c, p.header);
    check_stream(c, p, out.vision_anchors, lim.gnss_max_gap_s, lim.max_line_error_fraction);
  });
  guarded("imu", [&](StreamCheck& c) {
    const auto p = io::read_imu(raw.imu_csv);
    out.imu = p.records;
    header_epoch(c, p.header);
    check_stream(c, p, out.imu, lim.imu_max_gap_s, lim.max_line_error_fraction);
    if (out.imu.empty()) {
      c.ok = false;
      note(c, "no samples");
    }
  });
  guarded("obd", [&](StreamCheck& c) {
    const auto p = io::read_obd(raw.obd_csv);
    header_epoch(c, p.header);
    std::size_t undecodable = 0;
    for (const auto& f : p.records) {
      try {
        out.obd.push_back(ingest::decode_obd_frame(f));
      } catch (const Error& e) {
        ++undecodable;
        note(c, e.what());
      }
    }
    c.line_errors += undecodable;
    check_stream(c, p, out.obd, lim.obd_max_gap_s, lim.max_line_error_fraction);
  });
  guarded("vision", [&](StreamCheck& c) {
    const auto p = io::read_vision(raw.vision_jsonl);
    out.vision = p.records;
    header_epoch(c, p.header);
    check_stream(c, p, out.vision, lim.vision_max_gap_s, lim.max_line_error_fraction);
  });
  out.epoch_utc = epoch.value_or(0);
  return out;
}

ojson to_json(const std::vector<StreamCheck>& checks) {
  ojson arr = ojson::array();
  for (const auto& c : checks) {
    arr.push_back(ojson{{"stream", c.stream},
                        {"ok", c.ok},
                        {"records", c.records},
                        {"line_errors", c.line_errors},
                        {"non_monotonic", c.non_monotonic},
                        {"invariant_violations", c.invariant_violations},
                        {"gaps", c.gaps},
                        {"messages", c.messages}});
  }
  return ojson{{"streams", std::move(arr)}};
}

Clocks estimate_clocks(const Ingested& in) {
  Clocks c;
  c.telemetry = sync::estimate_clock_model(sync::anchors_from_rmc(in.gnss, in.epoch_utc));
  if (in.vision_anchors.empty()) {
    throw Error(ErrorCode::InsufficientAnchors, "vision unit has no RMC anchors");
  }
  c.vision = sync::estimate_clock_model(sync::anchors_from_rmc(in.vision_anchors, in.epoch_utc));
  return c;
}

ojson to_json(const Clocks& c) { return ojson{{"telemetry", clock_json(c.telemetry)}, {"vision", clock_json(c.vision)}}; }

Clocks clocks_from_json(const json& j) {
  try {
    return {clock_from(j.at("telemetry")), clock_from(j.at("vision"))};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedField, std::string("clocks: ") + e.what());
  }
}

Synced apply_clocks(const Ingested& in, const Clocks& c) {
  Synced s;
  s.epoch_utc = in.epoch_utc;
  s.gnss = sync::apply_sync(in.gnss, c.telemetry).records;
  s.imu = sync::apply_sync(in.imu, c.telemetry).records;
  s.obd = sync::apply_sync(in.obd, c.telemetry).records;
  s.vision = sync::apply_sync(in.vision, c.vision).records;
  return s;
}

EventsOutput detect_events(const Synced& s, const config::Config& cfg) {
  EventsOutput out;
  const auto speed = motion::speed_from_obd(s.obd);
  motion::MountingHints hints;
  hints.mounting_yaw_deg = cfg.imu_mounting_yaw_deg;
  const auto vfa = motion::gravity_align(s.imu, speed, hints);
  const auto harsh = motion::detect_harsh_events(vfa, cfg.harsh);
  const auto potholes = motion::detect_potholes(vfa, cfg.pothole);
  out.turns = motion::detect_turns(vfa, cfg.turn);
  out.speed_check = motion::speed_consistency(speed, s.gnss, cfg.consistency);

  const auto episodes = vision::all_episodes(s.vision, cfg.vision);
  for (const auto& p : vision::perclos(s.vision, cfg.perclos_window_s)) out.perclos_max = std::max(out.perclos_max, p.fraction);

  const auto track = track_of(s.gnss);
  auto place = [&](DetectedEvent e) {
    e.location = fusion::locate(track, e.t);
    out.events.push_back(std::move(e));
  };

  std::vector<motion::MotionEvent> brakes;
  for (const auto& m : harsh) {
    if (m.kind == motion::MotionKind::HarshBrake) brakes.push_back(m);
  }
  const auto annotated = fusion::braking_pattern(brakes, episodes, cfg.braking_lookback_s);
  for (const auto& m : harsh) {
    DetectedEvent e;
    e.kind = fusion::event_kind_of(m.kind);
    e.t = m.t_start;
    e.duration_s = m.duration_s;
    e.value = m.peak;
    e.severity = fusion::severity_of_motion(m, cfg.harsh);
    if (m.kind == motion::MotionKind::HarshBrake) {
      for (const auto& a : annotated) {
        if (a.brake == m) e.gaze_offroad = a.gaze_offroad;
      }
    }
    place(e);
  }
  for (const auto& m : potholes) {
    DetectedEvent e;
    e.kind = EventKind::Pothole;
    e.t = m.t_peak;
    e.duration_s = m.duration_s;
    e.value = m.peak;
    e.severity = fusion::severity_of_motion(m, cfg.harsh);
    place(e);
  }
  for (const auto& ep : episodes) {
    DetectedEvent e;
    e.kind = fusion::event_kind_of(ep.kind);
    e.t = ep.t_start;
    e.duration_s = ep.t_end - ep.t_start;
    e.value = ep.max_yaw_deg ? *ep.max_yaw_deg : ep.min_distance_m ? *ep.min_distance_m : static_cast<double>(ep.n_raw);
    e.severity = fusion::severity_of_episode(ep);
    place(e);
  }

  const auto stimuli = fusion::collect_stimuli(episodes, s.vision, potholes);
  const auto channels = fusion::response_channels(vfa, s.obd, cfg.reaction);
  const auto reaction = fusion::reaction_time(stimuli, channels, cfg.reaction);
  for (const auto& r : reaction.samples) {
    DetectedEvent e;
    e.kind = EventKind::ReactionSample;
    e.t = r.t_stimulus;
    e.value = r.latency_s;
    e.stimulus = r.kind;
    place(e);
  }
  for (const auto& m : reaction.missed) {
    DetectedEvent e;
    e.kind = EventKind::MissedStimulus;
    e.t = m.t;
    e.stimulus = m.kind;
    place(e);
  }
  for (auto e : fusion::signal_compliance(episodes, speed, cfg.compliance)) place(std::move(e));
  std::stable_sort(out.events.begin(), out.events.end(), event_less);
  return out;
}

std::string events_jsonl(const std::vector<DetectedEvent>& events) {
  std::string out;
  for (const auto& e : events) {
    out += fusion::to_json_line(e);
    out += '\n';
  }
  return out;
}

std::vector<DetectedEvent> parse_events_jsonl(std::string_view text) {
  std::vector<DetectedEvent> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    if (!line.empty()) out.push_back(fusion::parse_detected_event(line));
    pos = end + 1;
  }
  return out;
}

ojson summary_json(const EventsOutput& e) {
  ojson turns = ojson::array();
  for (const auto& t : e.turns) {
    turns.push_back(ojson{{"t_start", t.t_start}, {"t_end", t.t_end}, {"t_mid", t.t_mid}, {"heading_change_rad", t.heading_change_rad}});
  }
  ojson flagged = ojson::array();
  for (const auto& f : e.speed_check.flagged) flagged.push_back(ojson{{"t_start", f.t_start}, {"t_end", f.t_end}});
  return ojson{{"n_events", e.events.size()},
               {"turns", std::move(turns)},
               {"speed_check", {{"rms_kph", e.speed_check.rms_kph}, {"n_compared", e.speed_check.n_compared}, {"flagged", std::move(flagged)}}},
               {"perclos_max", e.perclos_max}};
}

EventsOutput events_from(std::string_view events_jsonl_text, const json& summary) {
  EventsOutput out;
  out.events = parse_events_jsonl(events_jsonl_text);
  try {
    for (const auto& t : summary.at("turns")) {
      out.turns.push_back({t.at("t_start").get<double>(), t.at("t_end").get<double>(), t.at("t_mid").get<double>(),
                           t.at("heading_change_rad").get<double>()});
    }
    const auto& sc = summary.at("speed_check");
    out.speed_check.rms_kph = sc.at("rms_kph").get<double>();
    out.speed_check.n_compared = sc.at("n_compared").get<std::size_t>();
    for (const auto& f : sc.at("flagged")) out.speed_check.flagged.push_back({f.at("t_start").get<double>(), f.at("t_end").get<double>()});
    out.perclos_max = summary.at("perclos_max").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedField, std::string("events summary: ") + e.what());
  }
  return out;
}

MatchOutput match(const Synced& s, const EventsOutput& ev, const net::RoadNetwork& network,
                  const net::SpatialIndex& index, const config::Config& cfg) {
  MatchOutput out;
  const auto track = track_of(s.gnss);
  out.path = net::match_trajectory(track, index, cfg.match);
  try {
    out.detour = net::detour_ratio(out.path, network);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateTrip && e.code() != ErrorCode::Unreachable) throw;
  }
  std::vector<double> mids;
  for (const auto& t : ev.turns) mids.push_back(t.t_mid);
  out.lost = net::detect_getting_lost(out.path, track, network, mids, cfg.lost);
  if (out.lost) {
    DetectedEvent e;
    e.kind = EventKind::GettingLost;
    e.t = out.lost->t;
    e.location = out.lost->location;
    e.value = out.lost->detour.ratio;
    e.severity = out.lost->detour.ratio < 2.0 ? 1 : (out.lost->detour.ratio < 3.0 ? 2 : 3);
    out.events.push_back(e);
  }
  const auto lane = net::lane_deviation(out.path, track, cfg.lane);
  out.lane_reliable = lane.reliable;
  if (lane.reliable) {
    for (const auto& d : lane.events) {
      DetectedEvent e;
      e.kind = EventKind::LaneDeviation;
      e.t = d.t_start;
      e.duration_s = d.t_end - d.t_start;
      e.value = d.peak_m;
      e.location = fusion::locate(track, e.t);
      out.events.push_back(e);
    }
  }
  std::stable_sort(out.events.begin(), out.events.end(), event_less);
  return out;
}

ojson to_json(const MatchOutput& m) {
  ojson assignments = ojson::array();
  for (const auto& a : m.path.assignments) {
    assignments.push_back(ojson{{"fix_index", a.fix_index}, {"edge_id", a.edge_id}, {"offset_m", a.offset_m},
                                {"lateral_m", a.lateral_m}, {"seq_index", a.seq_index}});
  }
  ojson j;
  j["edge_sequence"] = m.path.edge_sequence;
  j["off_network"] = m.path.off_network;
  j["detour"] = m.detour ? ojson{{"driven_m", m.detour->driven_m}, {"shortest_m", m.detour->shortest_m}, {"ratio", m.detour->ratio}}
                         : ojson(nullptr);
  j["lane_reliable"] = m.lane_reliable;
  ojson events = ojson::array();
  for (const auto& e : m.events) events.push_back(ojson::parse(fusion::to_json_line(e)));
  j["events"] = std::move(events);
  j["assignments"] = std::move(assignments);
  return j;
}

MatchOutput match_from_json(const json& j) {
  try {
    MatchOutput m;
    m.path.edge_sequence = j.at("edge_sequence").get<std::vector<net::EdgeId>>();
    m.path.off_network = j.at("off_network").get<std::vector<std::size_t>>();
    if (!j.at("detour").is_null()) {
      const auto& d = j.at("detour");
      m.detour = net::Detour{d.at("driven_m").get<double>(), d.at("shortest_m").get<double>(), d.at("ratio").get<double>()};
    }
    m.lane_reliable = j.at("lane_reliable").get<bool>();
    for (const auto& e : j.at("events")) m.events.push_back(fusion::parse_detected_event(e.dump()));
    for (const auto& a : j.at("assignments")) {
      m.path.assignments.push_back({a.at("fix_index").get<std::size_t>(), a.at("edge_id").get<net::EdgeId>(),
                                    a.at("offset_m").get<double>(), a.at("lateral_m").get<double>(),
                                    a.at("seq_index").get<std::size_t>()});
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedField, std::string("match: ") + e.what());
  }
}

dbi::TripSummary summarize(const TripIds& ids, const Synced& s, const EventsOutput& ev, const MatchOutput& m,
                           const net::RoadNetwork& network, std::span<const fusion::WeatherRecord> weather,
                           const config::Config& cfg) {
  dbi::TripSummary t;
  t.trip_id = ids.trip_id;
  t.driver_id = ids.driver_id;
  t.epoch_utc = s.epoch_utc;
  const auto track = track_of(s.gnss);
  const auto speed = motion::speed_from_obd(s.obd);
  const auto spans = fusion::segment_trips(track, speed, cfg.segment);
  fusion::TripSpan span;
  if (spans.empty()) {
    if (!track.empty()) span = {track.front().t, track.back().t, 0.0};
  } else {
    span = {spans.front().t_start, spans.back().t_end, 0.0};
  }
  t.t_start = span.t_start;
  t.t_end = span.t_end;
  t.travel = fusion::travel_pattern(span, track, s.epoch_utc, &m.path, &network, weather, cfg.travel);
  t.events = ev.events;
  t.events.insert(t.events.end(), m.events.begin(), m.events.end());
  std::stable_sort(t.events.begin(), t.events.end(), event_less);
  return t;
}

TripResult run_trip(const RawTrip& raw, const TripIds& ids, const net::RoadNetwork& network,
                    const net::SpatialIndex& index, std::span<const fusion::WeatherRecord> weather,
                    const config::Config& cfg) {
  TripResult r;
  r.ingested = ingest(raw, cfg);
  if (!r.ingested.ok()) {
    for (const auto& c : r.ingested.checks) {
      if (!c.ok) {
        throw Error(ErrorCode::InvariantViolation,
                    "stream " + c.stream + " failed ingest" + (c.messages.empty() ? "" : ": " + c.messages.front()));
      }
    }
  }
  r.clocks = estimate_clocks(r.ingested);
  r.synced = apply_clocks(r.ingested, r.clocks);
  r.events = detect_events(r.synced, cfg);
  r.matched = match(r.synced, r.events, network, index, cfg);
  r.summary = summarize(ids, r.synced, r.events, r.matched, network, weather, cfg);
  return r;
}

}  // namespace drivesense::pipeline
