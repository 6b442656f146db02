#include "drivesense/dbi.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "drivesense/error.hpp"
#include "text_util.hpp"

namespace drivesense::dbi {

using fusion::EventKind;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::int64_t to_mm(double m) { return std::llround(m * 1000.0); }
double to_miles(std::int64_t mm) { return static_cast<double>(mm) / 1000.0 / kMetersPerMile; }

template <typename T>
T field(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::MalformedField, std::string(key) + ": " + ex.what());
  }
}

}  // namespace

// ---- trip summary ----------------------------------------------------------------

ordered_json to_json(const TripSummary& t) {
  ordered_json j;
  j["trip_id"] = t.trip_id;
  j["driver_id"] = t.driver_id;
  j["epoch_utc"] = calendar::format_iso8601(t.epoch_utc);
  j["t_start"] = t.t_start;
  j["t_end"] = t.t_end;
  j["travel"] = {{"distance_m", t.travel.distance_m},
                 {"highway_m", t.travel.highway_m},
                 {"night_m", t.travel.night_m},
                 {"severe_weather_m", t.travel.severe_weather_m}};
  auto& ev = j["events"] = ordered_json::array();
  for (const auto& e : t.events) ev.push_back(ordered_json::parse(fusion::to_json_line(e)));
  return j;
}

TripSummary trip_summary_from_json(const json& j) {
  TripSummary t;
  t.trip_id = field<std::string>(j, "trip_id");
  t.driver_id = field<std::string>(j, "driver_id");
  t.epoch_utc = calendar::parse_iso8601(field<std::string>(j, "epoch_utc"));
  t.t_start = field<double>(j, "t_start");
  t.t_end = field<double>(j, "t_end");
  const json travel = field<json>(j, "travel");
  t.travel.distance_m = field<double>(travel, "distance_m");
  t.travel.highway_m = field<double>(travel, "highway_m");
  t.travel.night_m = field<double>(travel, "night_m");
  t.travel.severe_weather_m = field<double>(travel, "severe_weather_m");
  for (const auto& e : field<json>(j, "events")) t.events.push_back(fusion::parse_detected_event(e.dump()));
  return t;
}

// ---- totals ----------------------------------------------------------------------

double ReactionPool::mean_s() const {
  if (latencies_us.empty()) return 0.0;
  std::int64_t sum = 0;
  for (auto x : latencies_us) sum += x;
  return static_cast<double>(sum) / static_cast<double>(latencies_us.size()) / 1e6;
}

double ReactionPool::p90_s() const {
  if (latencies_us.empty()) return 0.0;
  const auto n = latencies_us.size();
  const auto rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(n)));
  return static_cast<double>(latencies_us[std::max<std::size_t>(rank, 1) - 1]) / 1e6;
}

DbiTotals merge(const DbiTotals& a, const DbiTotals& b) {
  DbiTotals m;
  m.n_trips = a.n_trips + b.n_trips;
  m.distance_mm = a.distance_mm + b.distance_mm;
  m.highway_mm = a.highway_mm + b.highway_mm;
  m.night_mm = a.night_mm + b.night_mm;
  m.severe_weather_mm = a.severe_weather_mm + b.severe_weather_mm;
  m.n_getting_lost = a.n_getting_lost + b.n_getting_lost;
  m.n_signal_violations = a.n_signal_violations + b.n_signal_violations;
  m.n_near_collisions = a.n_near_collisions + b.n_near_collisions;
  m.n_distraction_episodes = a.n_distraction_episodes + b.n_distraction_episodes;
  m.n_eyes_closed_episodes = a.n_eyes_closed_episodes + b.n_eyes_closed_episodes;
  m.n_lane_crossings = a.n_lane_crossings + b.n_lane_crossings;
  for (std::size_t i = 0; i < m.reaction.size(); ++i) {
    const auto& x = a.reaction[i].latencies_us;
    const auto& y = b.reaction[i].latencies_us;
    auto& out = m.reaction[i].latencies_us;
    out.reserve(x.size() + y.size());
    std::merge(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(out));
  }
  m.n_missed_stimuli = a.n_missed_stimuli + b.n_missed_stimuli;
  m.n_harsh_brakes = a.n_harsh_brakes + b.n_harsh_brakes;
  m.n_brakes_gaze_offroad = a.n_brakes_gaze_offroad + b.n_brakes_gaze_offroad;
  return m;
}

DbiTotals totals_of(const TripSummary& trip) {
  DbiTotals t;
  t.n_trips = 1;
  t.distance_mm = to_mm(trip.travel.distance_m);
  t.highway_mm = std::min(t.distance_mm, to_mm(trip.travel.highway_m));
  t.night_mm = std::min(t.distance_mm, to_mm(trip.travel.night_m));
  t.severe_weather_mm = std::min(t.distance_mm, to_mm(trip.travel.severe_weather_m));
  for (const auto& e : trip.events) {
    switch (e.kind) {
      case EventKind::GettingLost: ++t.n_getting_lost; break;
      case EventKind::RedLightRun:
      case EventKind::StopSignViolation: ++t.n_signal_violations; break;
      case EventKind::NearCollision: ++t.n_near_collisions; break;
      case EventKind::Distraction: ++t.n_distraction_episodes; break;
      case EventKind::EyesClosed: ++t.n_eyes_closed_episodes; break;
      case EventKind::LaneCrossing: ++t.n_lane_crossings; break;
      case EventKind::MissedStimulus: ++t.n_missed_stimuli; break;
      case EventKind::HarshBrake:
        ++t.n_harsh_brakes;
        if (e.gaze_offroad.value_or(false)) ++t.n_brakes_gaze_offroad;
        break;
      case EventKind::ReactionSample:
        if (e.stimulus && e.value > 0.0) {
          t.reaction[static_cast<std::size_t>(*e.stimulus)].latencies_us.push_back(std::llround(e.value * 1e6));
        }
        break;
      default: break;
    }
  }
  for (auto& p : t.reaction) std::sort(p.latencies_us.begin(), p.latencies_us.end());
  return t;
}

std::int64_t local_day(const TripSummary& trip, double utc_offset_h) {
  const double local = static_cast<double>(trip.epoch_utc) + trip.t_start + utc_offset_h * 3600.0;
  return static_cast<std::int64_t>(std::floor(local / 86400.0));
}

std::vector<DbiReport> compute_dbi(const std::string& driver_id, std::span<const TripSummary> trips,
                                   calendar::PeriodKind kind, std::int64_t first_day, std::int64_t last_day,
                                   double utc_offset_h) {
  std::map<std::int64_t, DbiTotals> daily;
  for (const auto& t : trips) {
    if (t.driver_id != driver_id) continue;
    const auto day = local_day(t, utc_offset_h);
    if (day < first_day || day > last_day) continue;
    daily[day] = merge(daily[day], totals_of(t));
  }
  std::vector<DbiReport> out;
  for (std::int64_t day = first_day; day <= last_day;) {
    DbiReport r{driver_id, calendar::period_containing(kind, day), {}};
    for (std::int64_t d = r.period.first_day; d <= r.period.last_day; ++d) {
      if (auto it = daily.find(d); it != daily.end()) r.totals = merge(r.totals, it->second);
    }
    day = r.period.last_day + 1;
    out.push_back(std::move(r));
  }
  return out;
}

// ---- serialization ---------------------------------------------------------------

ordered_json to_json(const DbiReport& r) {
  const auto& t = r.totals;
  ordered_json j;
  j["driver_id"] = r.driver_id;
  j["period"] = {{"kind", std::string(calendar::to_string(r.period.kind))},
                 {"id", r.period.id},
                 {"first_day", calendar::format_date(calendar::civil_from_days(r.period.first_day))},
                 {"last_day", calendar::format_date(calendar::civil_from_days(r.period.last_day))}};
  j["travel"] = {{"n_trips", t.n_trips},
                 {"distance_mm", t.distance_mm},
                 {"highway_mm", t.highway_mm},
                 {"night_mm", t.night_mm},
                 {"severe_weather_mm", t.severe_weather_mm},
                 {"miles", to_miles(t.distance_mm)},
                 {"highway_miles", to_miles(t.highway_mm)},
                 {"night_miles", to_miles(t.night_mm)},
                 {"severe_weather_miles", to_miles(t.severe_weather_mm)}};
  j["abnormal"] = {{"n_getting_lost", t.n_getting_lost},
                   {"n_signal_violations", t.n_signal_violations},
                   {"n_near_collisions", t.n_near_collisions},
                   {"n_distraction_episodes", t.n_distraction_episodes},
                   {"n_eyes_closed_episodes", t.n_eyes_closed_episodes},
                   {"n_lane_crossings", t.n_lane_crossings}};
  ordered_json reaction;
  for (auto k : fusion::kAllStimuli) {
    const auto& p = t.pool(k);
    reaction[std::string(fusion::to_string(k))] = {{"n_samples", p.n()},
                                                   {"mean_latency_s", p.mean_s()},
                                                   {"p90_latency_s", p.p90_s()},
                                                   {"latencies_us", p.latencies_us}};
  }
  reaction["n_missed"] = t.n_missed_stimuli;
  j["reaction"] = reaction;
  j["braking"] = {{"n_harsh_brakes", t.n_harsh_brakes}, {"n_brakes_with_prior_gaze_offroad", t.n_brakes_gaze_offroad}};
  return j;
}

DbiReport dbi_report_from_json(const json& j) {
  DbiReport r;
  r.driver_id = field<std::string>(j, "driver_id");
  const json period = field<json>(j, "period");
  r.period = calendar::parse_period(field<std::string>(period, "id"));
  if (calendar::to_string(r.period.kind) != field<std::string>(period, "kind")) {
    throw Error(ErrorCode::MalformedField, "period kind does not match id " + r.period.id);
  }
  auto& t = r.totals;
  const json travel = field<json>(j, "travel");
  t.n_trips = field<std::int64_t>(travel, "n_trips");
  t.distance_mm = field<std::int64_t>(travel, "distance_mm");
  t.highway_mm = field<std::int64_t>(travel, "highway_mm");
  t.night_mm = field<std::int64_t>(travel, "night_mm");
  t.severe_weather_mm = field<std::int64_t>(travel, "severe_weather_mm");
  const json ab = field<json>(j, "abnormal");
  t.n_getting_lost = field<std::int64_t>(ab, "n_getting_lost");
  t.n_signal_violations = field<std::int64_t>(ab, "n_signal_violations");
  t.n_near_collisions = field<std::int64_t>(ab, "n_near_collisions");
  t.n_distraction_episodes = field<std::int64_t>(ab, "n_distraction_episodes");
  t.n_eyes_closed_episodes = field<std::int64_t>(ab, "n_eyes_closed_episodes");
  t.n_lane_crossings = field<std::int64_t>(ab, "n_lane_crossings");
  const json re = field<json>(j, "reaction");
  for (auto k : fusion::kAllStimuli) {
    const json p = field<json>(re, std::string(fusion::to_string(k)).c_str());
    auto& lat = t.reaction[static_cast<std::size_t>(k)].latencies_us;
    lat = field<std::vector<std::int64_t>>(p, "latencies_us");
    if (!std::is_sorted(lat.begin(), lat.end())) {
      throw Error(ErrorCode::MalformedField, "latencies_us must be sorted");
    }
  }
  t.n_missed_stimuli = field<std::int64_t>(re, "n_missed");
  const json br = field<json>(j, "braking");
  t.n_harsh_brakes = field<std::int64_t>(br, "n_harsh_brakes");
  t.n_brakes_gaze_offroad = field<std::int64_t>(br, "n_brakes_with_prior_gaze_offroad");
  return r;
}

std::string dbi_csv_header() {
  std::string h =
      "driver_id,period_kind,period,first_day,last_day,n_trips,miles,highway_miles,night_miles,"
      "severe_weather_miles,n_getting_lost,n_signal_violations,n_near_collisions,n_distraction_episodes,"
      "n_eyes_closed_episodes,n_lane_crossings";
  for (auto k : fusion::kAllStimuli) {
    const std::string s(fusion::to_string(k));
    h += "," + s + "_n," + s + "_mean_s," + s + "_p90_s";
  }
  h += ",n_missed_stimuli,n_harsh_brakes,n_brakes_gaze_offroad";
  return h;
}

std::string to_csv(std::span<const DbiReport> reports) {
  std::string out = dbi_csv_header() + "\n";
  for (const auto& r : reports) {
    const auto& t = r.totals;
    out += r.driver_id + "," + std::string(calendar::to_string(r.period.kind)) + "," + r.period.id + "," +
           calendar::format_date(calendar::civil_from_days(r.period.first_day)) + "," +
           calendar::format_date(calendar::civil_from_days(r.period.last_day)) + "," + std::to_string(t.n_trips);
    for (auto mm : {t.distance_mm, t.highway_mm, t.night_mm, t.severe_weather_mm}) {
      out += ',';
      detail::append_fixed(out, to_miles(mm), 3);
    }
    for (auto n : {t.n_getting_lost, t.n_signal_violations, t.n_near_collisions, t.n_distraction_episodes,
                   t.n_eyes_closed_episodes, t.n_lane_crossings}) {
      out += "," + std::to_string(n);
    }
    for (const auto& p : t.reaction) {
      out += "," + std::to_string(p.n()) + ",";
      detail::append_fixed(out, p.mean_s(), 3);
      out += ',';
      detail::append_fixed(out, p.p90_s(), 3);
    }
    for (auto n : {t.n_missed_stimuli, t.n_harsh_brakes, t.n_brakes_gaze_offroad}) out += "," + std::to_string(n);
    out += '\n';
  }
  return out;
}

std::string daily_indices_csv(std::span<const DbiReport> daily) {
  std::string out = "driver_id,date,closed_eyes,distractions,crossing_lines,near_collisions\n";
  for (const auto& r : daily) {
    if (r.period.kind != calendar::PeriodKind::Day) {
      throw Error(ErrorCode::InvariantViolation, "daily sheet needs day reports, got " + r.period.id);
    }
    const auto& t = r.totals;
    out += r.driver_id + "," + r.period.id + "," + std::to_string(t.n_eyes_closed_episodes) + "," +
           std::to_string(t.n_distraction_episodes) + "," + std::to_string(t.n_lane_crossings) + "," +
           std::to_string(t.n_near_collisions) + "\n";
  }
  return out;
}

}  // namespace drivesense::dbi
