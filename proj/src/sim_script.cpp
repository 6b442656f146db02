#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "drivesense/calendar.hpp"
#include "drivesense/error.hpp"
#include "drivesense/sim.hpp"
#include "sim_path.hpp"

namespace drivesense::sim {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr std::pair<InjectionKind, std::string_view> kInjectionNames[] = {
    {InjectionKind::HarshBrake, "harsh_brake"},
    {InjectionKind::HarshAccel, "harsh_accel"},
    {InjectionKind::Pothole, "pothole"},
    {InjectionKind::Distraction, "distraction"},
    {InjectionKind::EyesClosed, "eyes_closed"},
    {InjectionKind::Yawn, "yawn"},
    {InjectionKind::PhoneUse, "phone_use"},
    {InjectionKind::LaneCrossing, "lane_crossing"},
    {InjectionKind::NearCollision, "near_collision"},
    {InjectionKind::RedLightRun, "red_light_run"},
    {InjectionKind::GreenPass, "green_pass"},
    {InjectionKind::StopAndGo, "stop_and_go"},
    {InjectionKind::StopSign, "stop_sign"},
    {InjectionKind::StopSignViolation, "stop_sign_violation"},
    {InjectionKind::Taillight, "taillight"},
    {InjectionKind::GettingLost, "getting_lost"},
};

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const char* where) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidScript, std::string(where) + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw Error(ErrorCode::InvalidScript, "unknown key '" + k + "' in " + where);
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

ojson clock_json(const ClockSpec& c) { return ojson{{"offset_s", c.offset_s}, {"drift_ppm", c.drift_ppm}}; }

ClockSpec clock_from(const json& j) {
  check_keys(j, {"offset_s", "drift_ppm"}, "clock");
  ClockSpec c;
  read(j, "offset_s", c.offset_s);
  read(j, "drift_ppm", c.drift_ppm);
  return c;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::string_view to_string(InjectionKind k) {
  for (auto [kind, name] : kInjectionNames) {
    if (kind == k) return name;
  }
  return "unknown";
}

InjectionKind injection_kind_from_string(std::string_view s) {
  for (auto [kind, name] : kInjectionNames) {
    if (name == s) return kind;
  }
  throw Error(ErrorCode::InvalidScript, "unknown injection kind '" + std::string(s) + "'");
}

ojson to_json(const DriveScript& s) {
  ojson j;
  j["seed"] = s.seed;
  j["trip_id"] = s.trip_id;
  j["driver_id"] = s.driver_id;
  j["start_utc"] = calendar::format_iso8601(s.start_utc);
  if (!s.route.empty()) j["route"] = s.route;
  if (s.route_from) j["route_from"] = *s.route_from;
  if (s.route_to) j["route_to"] = *s.route_to;
  j["start_offset_m"] = s.start_offset_m;
  if (s.end_offset_m) j["end_offset_m"] = *s.end_offset_m;
  j["idle_start_s"] = s.idle_start_s;
  j["idle_end_s"] = s.idle_end_s;
  j["clocks"] = ojson{{"telemetry", clock_json(s.telemetry)}, {"vision", clock_json(s.vision)}};
  j["mounting"] = ojson{{"roll_deg", s.mount_roll_deg}, {"pitch_deg", s.mount_pitch_deg}, {"yaw_deg", s.mount_yaw_deg}};
  j["camera_yaw_deg"] = s.camera_yaw_deg;
  const auto& n = s.noise;
  j["noise"] = ojson{{"gps_sigma_m", n.gps_sigma_m},         {"gps_tau_s", n.gps_tau_s},
                     {"fix_quality", to_string(n.fix_quality)}, {"rtk_sigma_m", n.rtk_sigma_m},
                     {"accel_sigma", n.accel_sigma},         {"gyro_sigma", n.gyro_sigma},
                     {"anchor_jitter_s", n.anchor_jitter_s}, {"head_yaw_sigma_deg", n.head_yaw_sigma_deg}};
  ojson inj = ojson::array();
  for (const auto& i : s.injections) {
    ojson o;
    o["kind"] = to_string(i.kind);
    if (i.at_m) o["at_m"] = *i.at_m;
    if (i.node_index) o["node_index"] = *i.node_index;
    if (i.duration_s != 0.0) o["duration_s"] = i.duration_s;
    if (i.magnitude != 0.0) o["magnitude"] = i.magnitude;
    if (i.latency_s != 0.0) o["latency_s"] = i.latency_s;
    if (i.wait_s != 0.0) o["wait_s"] = i.wait_s;
    if (i.loops != 0) o["loops"] = i.loops;
    inj.push_back(std::move(o));
  }
  j["injections"] = std::move(inj);
  return j;
}

DriveScript script_from_json(const json& j) {
  try {
    check_keys(j,
               {"seed", "trip_id", "driver_id", "start_utc", "route", "route_from", "route_to", "start_offset_m",
                "end_offset_m", "idle_start_s", "idle_end_s", "clocks", "mounting", "camera_yaw_deg", "noise",
                "injections"},
               "script");
    DriveScript s;
    read(j, "seed", s.seed);
    read(j, "trip_id", s.trip_id);
    read(j, "driver_id", s.driver_id);
    if (j.contains("start_utc")) s.start_utc = calendar::parse_iso8601(j.at("start_utc").get<std::string>());
    read(j, "route", s.route);
    if (j.contains("route_from")) s.route_from = j.at("route_from").get<net::NodeId>();
    if (j.contains("route_to")) s.route_to = j.at("route_to").get<net::NodeId>();
    read(j, "start_offset_m", s.start_offset_m);
    if (j.contains("end_offset_m")) s.end_offset_m = j.at("end_offset_m").get<double>();
    read(j, "idle_start_s", s.idle_start_s);
    read(j, "idle_end_s", s.idle_end_s);
    if (j.contains("clocks")) {
      const auto& c = j.at("clocks");
      check_keys(c, {"telemetry", "vision"}, "clocks");
      if (c.contains("telemetry")) s.telemetry = clock_from(c.at("telemetry"));
      if (c.contains("vision")) s.vision = clock_from(c.at("vision"));
    }
    if (j.contains("mounting")) {
      const auto& m = j.at("mounting");
      check_keys(m, {"roll_deg", "pitch_deg", "yaw_deg"}, "mounting");
      read(m, "roll_deg", s.mount_roll_deg);
      read(m, "pitch_deg", s.mount_pitch_deg);
      read(m, "yaw_deg", s.mount_yaw_deg);
    }
    read(j, "camera_yaw_deg", s.camera_yaw_deg);
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      check_keys(n,
                 {"gps_sigma_m", "gps_tau_s", "fix_quality", "rtk_sigma_m", "accel_sigma", "gyro_sigma",
                  "anchor_jitter_s", "head_yaw_sigma_deg"},
                 "noise");
      read(n, "gps_sigma_m", s.noise.gps_sigma_m);
      read(n, "gps_tau_s", s.noise.gps_tau_s);
      if (n.contains("fix_quality")) s.noise.fix_quality = fix_quality_from_string(n.at("fix_quality").get<std::string>());
      read(n, "rtk_sigma_m", s.noise.rtk_sigma_m);
      read(n, "accel_sigma", s.noise.accel_sigma);
      read(n, "gyro_sigma", s.noise.gyro_sigma);
      read(n, "anchor_jitter_s", s.noise.anchor_jitter_s);
      read(n, "head_yaw_sigma_deg", s.noise.head_yaw_sigma_deg);
    }
    if (j.contains("injections")) {
      for (const auto& o : j.at("injections")) {
        check_keys(o, {"kind", "at_m", "node_index", "duration_s", "magnitude", "latency_s", "wait_s", "loops"},
                   "injection");
        Injection i;
        i.kind = injection_kind_from_string(o.at("kind").get<std::string>());
        if (o.contains("at_m")) i.at_m = o.at("at_m").get<double>();
        if (o.contains("node_index")) i.node_index = o.at("node_index").get<std::size_t>();
        read(o, "duration_s", i.duration_s);
        read(o, "magnitude", i.magnitude);
        read(o, "latency_s", i.latency_s);
        read(o, "wait_s", i.wait_s);
        read(o, "loops", i.loops);
        s.injections.push_back(i);
      }
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidScript, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidScript) throw;
    throw Error(ErrorCode::InvalidScript, e.what());
  }
}

DriveScript parse_script(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidScript, e.what());
  }
  return script_from_json(j);
}

ojson to_json(const GroundTruth& g) {
  ojson j;
  j["trip_id"] = g.trip_id;
  j["driver_id"] = g.driver_id;
  j["epoch_utc"] = calendar::format_iso8601(g.epoch_utc);
  j["clocks"] = ojson{{"telemetry", {{"offset_s", g.telemetry.offset_s}, {"drift_ppm", g.telemetry.drift_ppm}}},
                      {"vision", {{"offset_s", g.vision.offset_s}, {"drift_ppm", g.vision.drift_ppm}}}};
  j["route"] = g.route;
  j["edges"] = g.edges;
  j["t_move"] = g.t_move;
  j["t_stop"] = g.t_stop;
  j["distance_m"] = g.distance_m;
  ojson ev = ojson::array();
  for (const auto& e : g.events) {
    ojson o;
    o["kind"] = fusion::to_string(e.kind);
    o["t"] = e.t;
    o["t_start"] = e.t_start;
    o["t_end"] = e.t_end;
    o["lat"] = e.location.lat;
    o["lon"] = e.location.lon;
    if (e.stimulus) o["stimulus"] = fusion::to_string(*e.stimulus);
    if (e.latency_s) o["latency_s"] = *e.latency_s;
    o["injection"] = e.injection;
    ev.push_back(std::move(o));
  }
  j["events"] = std::move(ev);
  return j;
}

GroundTruth truth_from_json(const json& j) {
  try {
    GroundTruth g;
    g.trip_id = j.at("trip_id").get<std::string>();
    g.driver_id = j.at("driver_id").get<std::string>();
    g.epoch_utc = calendar::parse_iso8601(j.at("epoch_utc").get<std::string>());
    const auto& c = j.at("clocks");
    g.telemetry.offset_s = c.at("telemetry").at("offset_s").get<double>();
    g.telemetry.drift_ppm = c.at("telemetry").at("drift_ppm").get<double>();
    g.vision.offset_s = c.at("vision").at("offset_s").get<double>();
    g.vision.drift_ppm = c.at("vision").at("drift_ppm").get<double>();
    g.route = j.at("route").get<std::vector<net::NodeId>>();
    g.edges = j.at("edges").get<std::vector<net::EdgeId>>();
    g.t_move = j.at("t_move").get<double>();
    g.t_stop = j.at("t_stop").get<double>();
    g.distance_m = j.at("distance_m").get<double>();
    for (const auto& o : j.at("events")) {
      TruthEvent e;
      e.kind = fusion::event_kind_from_string(o.at("kind").get<std::string>());
      e.t = o.at("t").get<double>();
      e.t_start = o.at("t_start").get<double>();
      e.t_end = o.at("t_end").get<double>();
      e.location = {o.at("lat").get<double>(), o.at("lon").get<double>()};
      if (o.contains("stimulus")) e.stimulus = fusion::stimulus_kind_from_string(o.at("stimulus").get<std::string>());
      if (o.contains("latency_s")) e.latency_s = o.at("latency_s").get<double>();
      e.injection = o.at("injection").get<std::size_t>();
      g.events.push_back(e);
    }
    return g;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedField, std::string("truth: ") + e.what());
  }
}

DriveScript random_script(const net::RoadNetwork& network, std::uint64_t seed, const RandomScriptOptions& opt) {
  std::mt19937_64 g(mix(seed));
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(g); };
  const auto& nodes = network.nodes();
  if (nodes.size() < 2) throw Error(ErrorCode::InvalidScript, "network too small for a random script");

  for (int attempt = 0; attempt < 400; ++attempt) {
    DriveScript s;
    s.seed = seed;
    s.trip_id = opt.trip_id;
    s.driver_id = opt.driver_id;
    s.start_utc = opt.start_utc;
    s.route_from = nodes[g() % nodes.size()].id;
    s.route_to = nodes[g() % nodes.size()].id;
    if (*s.route_from == *s.route_to) continue;
    double dist = 0.0;
    try {
      dist = net::shortest_path(network, *s.route_from, *s.route_to).length_m;
    } catch (const Error&) {
      continue;
    }
    if (dist < opt.min_route_m || dist > opt.max_route_m) continue;
    s.telemetry = {uni(-opt.max_clock_offset_s, opt.max_clock_offset_s), uni(-opt.max_drift_ppm, opt.max_drift_ppm)};
    s.vision = {uni(-opt.max_clock_offset_s, opt.max_clock_offset_s), uni(-opt.max_drift_ppm, opt.max_drift_ppm)};
    s.mount_roll_deg = uni(-8.0, 8.0);
    s.mount_pitch_deg = uni(-8.0, 8.0);
    s.mount_yaw_deg = uni(-180.0, 180.0);
    s.camera_yaw_deg = uni(-5.0, 5.0);

    const auto base = detail::base_route(s, network);
    const std::size_t n = base.size();
    if (n < 6) continue;

    std::optional<detail::ResolvedRoute> route;
    std::optional<std::size_t> lost_at;
    if (opt.getting_lost) {
      std::vector<std::size_t> cand(n - 4);
      std::iota(cand.begin(), cand.end(), 2);
      std::shuffle(cand.begin(), cand.end(), g);
      for (std::size_t x : cand) {
        DriveScript trial = s;
        Injection inj;
        inj.kind = InjectionKind::GettingLost;
        inj.node_index = x;
        trial.injections.push_back(inj);
        try {
          route = detail::resolve_route(trial, network);
        } catch (const Error&) {
          continue;
        }
        s = trial;
        lost_at = x;
        break;
      }
      if (!lost_at) continue;
    } else {
      route = detail::resolve_route(s, network);
    }

    std::optional<detail::DrivePath> path;
    try {
      path.emplace(network, *route, s.start_offset_m, s.end_offset_m);
    } catch (const Error&) {
      continue;
    }

    // Signalised nodes: straight-through base nodes away from the loops.
    std::vector<std::size_t> signal_nodes;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (lost_at && (i == *lost_at || i + 1 == *lost_at)) continue;
      const std::size_t x = route->from_script[i];
      if (path->node_arc(x) || path->node_s(x) - 70.0 < 0.0) continue;
      signal_nodes.push_back(i);
    }
    std::shuffle(signal_nodes.begin(), signal_nodes.end(), g);
    const auto n_signals = static_cast<std::size_t>(opt.red_light_runs + opt.stop_and_go);
    if (signal_nodes.size() < n_signals) continue;
    std::set<std::size_t> signal_expanded;
    for (std::size_t k = 0; k < n_signals; ++k) {
      Injection inj;
      inj.kind = static_cast<int>(k) < opt.red_light_runs ? InjectionKind::RedLightRun : InjectionKind::StopAndGo;
      inj.node_index = signal_nodes[k];
      if (inj.kind == InjectionKind::StopAndGo) {
        inj.wait_s = uni(3.0, 8.0);
        inj.latency_s = uni(0.6, 1.6);
      }
      s.injections.push_back(inj);
      signal_expanded.insert(route->from_script[signal_nodes[k]]);
    }

    // Motion events: one per full edge that does not approach a signal.
    std::vector<std::size_t> slots;
    for (std::size_t j = 1; j + 1 < route->edges.size(); ++j) {
      if (signal_expanded.count(j + 1) || path->edge_s1(j) - path->edge_s0(j) < 160.0) continue;
      slots.push_back(j);
    }
    std::shuffle(slots.begin(), slots.end(), g);
    const auto n_motion = static_cast<std::size_t>(opt.harsh_brakes + opt.potholes + opt.taillights);
    if (slots.size() < n_motion) continue;
    std::size_t next_slot = 0;
    auto place_motion = [&](InjectionKind kind, int count, double lo, double hi) {
      for (int k = 0; k < count; ++k) {
        Injection inj;
        inj.kind = kind;
        inj.at_m = path->edge_s0(slots[next_slot++]) + uni(lo, hi);
        if (kind == InjectionKind::Taillight) inj.latency_s = uni(0.6, 1.6);
        s.injections.push_back(inj);
      }
    };
    place_motion(InjectionKind::HarshBrake, opt.harsh_brakes, 70.0, 90.0);
    place_motion(InjectionKind::Pothole, opt.potholes, 100.0, 150.0);
    place_motion(InjectionKind::Taillight, opt.taillights, 40.0, 60.0);

    // Vision events spaced along the path.
    std::vector<std::pair<InjectionKind, int>> vis{{InjectionKind::Distraction, opt.distractions},
                                                   {InjectionKind::EyesClosed, opt.eyes_closed},
                                                   {InjectionKind::LaneCrossing, opt.lane_crossings},
                                                   {InjectionKind::NearCollision, opt.near_collisions}};
    std::vector<double> used;
    bool placed = true;
    for (auto [kind, count] : vis) {
      for (int k = 0; k < count && placed; ++k) {
        placed = false;
        for (int tries = 0; tries < 200 && !placed; ++tries) {
          const double at = uni(40.0, path->length() - 60.0);
          if (std::any_of(used.begin(), used.end(), [&](double u) { return std::fabs(u - at) < 150.0; })) continue;
          used.push_back(at);
          Injection inj;
          inj.kind = kind;
          inj.at_m = at;
          s.injections.push_back(inj);
          placed = true;
        }
      }
    }
    if (!placed) continue;

    try {
      (void)synthesize(s, network);
    } catch (const Error&) {
      continue;
    }
    return s;
  }
  throw Error(ErrorCode::InvalidScript, "could not place the requested injections on this network");
}

}  // namespace drivesense::sim
