#include "drivesense/config.hpp"

#include <functional>
#include <vector>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "drivesense/error.hpp"
#include "drivesense/stream_io.hpp"
#include "text_util.hpp"

namespace drivesense::config {

namespace {

using ojson = nlohmann::ordered_json;

struct Entry {
  KeyDoc doc;
  std::function<void(Config&, const YAML::Node&)> set;
  std::function<ojson(const Config&)> get;
};

std::string_view type_name(KeyType t) {
  switch (t) {
    case KeyType::Number: return "number";
    case KeyType::Integer: return "integer";
    case KeyType::Text: return "string";
    case KeyType::IntegerList: return "list of integers";
    case KeyType::OptionalNumber: return "number or null";
    case KeyType::ClockTime: return "HH:MM";
  }
  return "?";
}

[[noreturn]] void mismatch(std::string_view key, KeyType t, const YAML::Node& n) {
  std::string got = n.IsScalar() ? "'" + n.Scalar() + "'" : n.IsSequence() ? "a list" : n.IsMap() ? "a mapping" : "null";
  throw Error(ErrorCode::TypeMismatch,
              "key '" + std::string(key) + "' expects " + std::string(type_name(t)) + ", got " + got);
}

double as_number(std::string_view key, const YAML::Node& n) {
  if (!n.IsScalar()) mismatch(key, KeyType::Number, n);
  const auto v = detail::to_double(n.Scalar());
  if (!v) mismatch(key, KeyType::Number, n);
  return *v;
}

long long as_integer(std::string_view key, const YAML::Node& n) {
  if (!n.IsScalar()) mismatch(key, KeyType::Integer, n);
  const auto v = detail::to_int(n.Scalar());
  if (!v) mismatch(key, KeyType::Integer, n);
  return *v;
}

int clock_minutes(std::string_view key, const YAML::Node& n) {
  if (!n.IsScalar()) mismatch(key, KeyType::ClockTime, n);
  const auto& s = n.Scalar();
  if (s.size() != 5 || s[2] != ':') mismatch(key, KeyType::ClockTime, n);
  const auto h = detail::to_int(s.substr(0, 2)), m = detail::to_int(s.substr(3, 2));
  if (!h || !m || *h < 0 || *h > 23 || *m < 0 || *m > 59) mismatch(key, KeyType::ClockTime, n);
  return static_cast<int>(*h * 60 + *m);
}

std::string clock_text(int minutes) {
  const int h = minutes / 60, m = minutes % 60;
  return {static_cast<char>('0' + h / 10), static_cast<char>('0' + h % 10), ':', static_cast<char>('0' + m / 10),
          static_cast<char>('0' + m % 10)};
}

Entry number(std::string_view name, std::string_view unit, std::string_view desc, double& (*field)(Config&)) {
  return {{name, KeyType::Number, unit, desc},
          [=](Config& c, const YAML::Node& n) { field(c) = as_number(name, n); },
          [=](const Config& c) { return ojson(field(const_cast<Config&>(c))); }};
}

template <class I>
Entry integer(std::string_view name, std::string_view unit, std::string_view desc, I& (*field)(Config&)) {
  return {{name, KeyType::Integer, unit, desc},
          [=](Config& c, const YAML::Node& n) {
            const auto v = as_integer(name, n);
            if (v < 0) mismatch(name, KeyType::Integer, n);
            field(c) = static_cast<I>(v);
          },
          [=](const Config& c) { return ojson(field(const_cast<Config&>(c))); }};
}

Entry text(std::string_view name, std::string_view desc, std::string& (*field)(Config&)) {
  return {{name, KeyType::Text, "", desc},
          [=](Config& c, const YAML::Node& n) {
            if (n.IsNull()) {
              field(c).clear();
            } else if (n.IsScalar()) {
              field(c) = n.Scalar();
            } else {
              mismatch(name, KeyType::Text, n);
            }
          },
          [=](const Config& c) { return ojson(field(const_cast<Config&>(c))); }};
}

Entry optional_number(std::string_view name, std::string_view unit, std::string_view desc,
                      std::optional<double>& (*field)(Config&)) {
  return {{name, KeyType::OptionalNumber, unit, desc},
          [=](Config& c, const YAML::Node& n) {
            if (n.IsNull() || (n.IsScalar() && (n.Scalar() == "null" || n.Scalar() == "~"))) {
              field(c).reset();
            } else {
              field(c) = as_number(name, n);
            }
          },
          [=](const Config& c) {
            const auto& v = field(const_cast<Config&>(c));
            return v ? ojson(*v) : ojson(nullptr);
          }};
}

Entry clock_time(std::string_view name, std::string_view desc, int& (*field)(Config&)) {
  return {{name, KeyType::ClockTime, "local time", desc},
          [=](Config& c, const YAML::Node& n) { field(c) = clock_minutes(name, n); },
          [=](const Config& c) { return ojson(clock_text(field(const_cast<Config&>(c)))); }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      number("gnss_max_gap_s", "s", "GNSS gap reported by ingest", [](Config& c) -> double& { return c.ingest.gnss_max_gap_s; }),
      number("imu_max_gap_s", "s", "IMU gap reported by ingest", [](Config& c) -> double& { return c.ingest.imu_max_gap_s; }),
      number("obd_max_gap_s", "s", "OBD gap reported by ingest", [](Config& c) -> double& { return c.ingest.obd_max_gap_s; }),
      number("vision_max_gap_s", "s", "vision gap reported by ingest", [](Config& c) -> double& { return c.ingest.vision_max_gap_s; }),
      number("max_line_error_fraction", "", "unparseable line fraction above which ingest fails",
             [](Config& c) -> double& { return c.ingest.max_line_error_fraction; }),

      number("harsh_accel_threshold", "m/s^2", "harsh acceleration onset", [](Config& c) -> double& { return c.harsh.accel; }),
      number("harsh_brake_threshold", "m/s^2", "harsh braking onset (negative)", [](Config& c) -> double& { return c.harsh.brake; }),
      number("harsh_corner_threshold", "m/s^2", "harsh cornering onset, lateral magnitude",
             [](Config& c) -> double& { return c.harsh.corner; }),
      number("harsh_min_duration_s", "s", "minimum excursion length", [](Config& c) -> double& { return c.harsh.min_duration_s; }),
      number("harsh_hysteresis", "", "release level as a fraction of the threshold",
             [](Config& c) -> double& { return c.harsh.hysteresis; }),
      number("harsh_merge_gap_s", "s", "same-kind events closer than this merge", [](Config& c) -> double& { return c.harsh.merge_gap_s; }),
      optional_number("imu_mounting_yaw_deg", "deg", "device x axis yaw in the vehicle when speed cannot fix it",
                      [](Config& c) -> std::optional<double>& { return c.imu_mounting_yaw_deg; }),

      number("pothole_window_s", "s", "pothole peak grouping window", [](Config& c) -> double& { return c.pothole.window_s; }),
      number("pothole_z_threshold", "", "robust z-score of the high-passed vertical channel",
             [](Config& c) -> double& { return c.pothole.z_thresh; }),
      number("pothole_highpass_hz", "Hz", "vertical high-pass cutoff", [](Config& c) -> double& { return c.pothole.highpass_hz; }),
      number("pothole_floor_mps2", "m/s^2", "lower bound on the adaptive threshold", [](Config& c) -> double& { return c.pothole.floor_mps2; }),

      number("turn_yaw_rate_rad_s", "rad/s", "sustained yaw rate of a turn", [](Config& c) -> double& { return c.turn.yaw_rate_rad_s; }),
      number("turn_min_duration_s", "s", "minimum turn length", [](Config& c) -> double& { return c.turn.min_duration_s; }),
      number("turn_min_heading_change_rad", "rad", "minimum heading change of a turn",
             [](Config& c) -> double& { return c.turn.min_heading_change_rad; }),

      number("speed_check_smooth_s", "s", "GNSS speed smoothing window", [](Config& c) -> double& { return c.consistency.smooth_s; }),
      number("speed_check_flag_kph", "kph", "GNSS vs OBD disagreement flagged", [](Config& c) -> double& { return c.consistency.flag_kph; }),
      number("speed_check_flag_min_s", "s", "minimum flagged stretch", [](Config& c) -> double& { return c.consistency.flag_min_s; }),

      number("distraction_yaw_deg", "deg", "head yaw away from calibrated forward",
             [](Config& c) -> double& { return c.vision.distraction.yaw_thresh_deg; }),
      number("distraction_min_duration_s", "s", "minimum distraction episode",
             [](Config& c) -> double& { return c.vision.distraction.min_duration_s; }),
      number("distraction_merge_gap_s", "s", "distraction frames closer than this join",
             [](Config& c) -> double& { return c.vision.distraction.merge_gap_s; }),
      number("camera_calibration_s", "s", "head yaw calibration span at trip start",
             [](Config& c) -> double& { return c.vision.distraction.calib_s; }),
      optional_number("camera_mounting_yaw_deg", "deg", "fixed camera yaw instead of calibration",
                      [](Config& c) -> std::optional<double>& { return c.vision.distraction.mounting_yaw_deg; }),
      number("eyes_closed_min_s", "s", "minimum eyes-closed episode", [](Config& c) -> double& { return c.vision.eyes_closed_min_s; }),
      number("yawn_min_s", "s", "minimum yawn", [](Config& c) -> double& { return c.vision.yawn_min_s; }),
      number("perclos_window_s", "s", "PERCLOS trailing window", [](Config& c) -> double& { return c.perclos_window_s; }),
      number("lane_crossing_merge_s", "s", "lane crossing frames closer than this join",
             [](Config& c) -> double& { return c.vision.episodes.lane_merge_s; }),
      number("near_collision_distance_m", "m", "headway below which a frame counts as near collision",
             [](Config& c) -> double& { return c.vision.episodes.near_collision_m; }),
      number("near_collision_gap_s", "s", "near collision frames closer than this join",
             [](Config& c) -> double& { return c.vision.episodes.near_collision_gap_s; }),
      number("encounter_gap_s", "s", "sign / light / pedestrian frames closer than this join",
             [](Config& c) -> double& { return c.vision.episodes.encounter_gap_s; }),
      number("object_gap_s", "s", "phone / smoking frames closer than this join",
             [](Config& c) -> double& { return c.vision.episodes.object_gap_s; }),

      integer<std::size_t>("match_candidates", "", "candidate edges per fix", [](Config& c) -> std::size_t& { return c.match.k; }),
      number("match_radius_m", "m", "candidate search radius", [](Config& c) -> double& { return c.match.radius_m; }),
      number("match_beta_m", "m", "transition scale", [](Config& c) -> double& { return c.match.beta_m; }),
      number("match_prune_log", "", "candidate pruning below the best emission (log units)",
             [](Config& c) -> double& { return c.match.prune_log; }),
      number("match_route_bound_m", "m", "minimum routing horizon between fixes",
             [](Config& c) -> double& { return c.match.route_bound_m; }),
      number("detour_ratio_threshold", "", "driven over shortest length flagged as getting lost",
             [](Config& c) -> double& { return c.lost.ratio_threshold; }),
      number("getting_lost_turn_snap_s", "s", "snap the getting-lost time to a turn this close",
             [](Config& c) -> double& { return c.lost.turn_snap_s; }),
      number("getting_lost_slack_m", "m", "extra cost before an edge counts as off every shortest path",
             [](Config& c) -> double& { return c.lost.slack_m; }),
      number("lane_half_width_m", "m", "lateral offset counted as lane deviation (RTK only)",
             [](Config& c) -> double& { return c.lane.half_lane_m; }),
      number("lane_deviation_min_s", "s", "minimum lane deviation", [](Config& c) -> double& { return c.lane.min_duration_s; }),

      number("trip_start_kph", "kph", "speed that starts a trip", [](Config& c) -> double& { return c.segment.start_kph; }),
      number("trip_start_sustain_s", "s", "how long the start speed must hold", [](Config& c) -> double& { return c.segment.start_sustain_s; }),
      number("trip_stop_kph", "kph", "speed below which a trip may end", [](Config& c) -> double& { return c.segment.stop_kph; }),
      number("trip_stop_sustain_s", "s", "how long the stop must hold", [](Config& c) -> double& { return c.segment.stop_sustain_s; }),

      number("reaction_window_s", "s", "longest accepted reaction", [](Config& c) -> double& { return c.reaction.max_window_s; }),
      number("reaction_brake_onset_mps2", "m/s^2", "a_long crossing that counts as braking",
             [](Config& c) -> double& { return c.reaction.brake_onset_mps2; }),
      number("reaction_pedal_threshold_pct", "%", "pedal crossing that counts as press / release",
             [](Config& c) -> double& { return c.reaction.pedal_threshold_pct; }),
      number("red_light_advance_m", "m", "advance during the final red seconds that counts as running it",
             [](Config& c) -> double& { return c.compliance.red_advance_m; }),
      number("red_light_window_s", "s", "final red seconds over which the advance is measured",
             [](Config& c) -> double& { return c.compliance.red_window_s; }),
      number("stop_sign_min_kph", "kph", "minimum speed at a stop sign at or above which it is a violation",
             [](Config& c) -> double& { return c.compliance.stop_min_kph; }),
      number("stop_sign_window_s", "s", "time after the first sign frame searched for a stop",
             [](Config& c) -> double& { return c.compliance.stop_window_s; }),
      number("braking_lookback_s", "s", "gaze-offroad lookback before a harsh brake",
             [](Config& c) -> double& { return c.braking_lookback_s; }),

      clock_time("night_start", "night window start", [](Config& c) -> int& { return c.travel.night.start_min; }),
      clock_time("night_end", "night window end", [](Config& c) -> int& { return c.travel.night.end_min; }),
      number("utc_offset_h", "h", "local time offset for night and day attribution",
             [](Config& c) -> double& { return c.travel.utc_offset_h; }),

      text("network_file", "road network JSON; empty uses the generated grid", [](Config& c) -> std::string& { return c.network_file; }),
      integer<int>("grid_rows", "", "generated grid rows", [](Config& c) -> int& { return c.grid.rows; }),
      integer<int>("grid_cols", "", "generated grid columns", [](Config& c) -> int& { return c.grid.cols; }),
      number("grid_spacing_m", "m", "generated grid spacing", [](Config& c) -> double& { return c.grid.spacing_m; }),
      {{"grid_highway_rows", KeyType::IntegerList, "", "generated grid rows at highway speed"},
       [](Config& c, const YAML::Node& n) {
         if (n.IsNull()) {
           c.grid.highway_rows.clear();
           return;
         }
         if (!n.IsSequence()) mismatch("grid_highway_rows", KeyType::IntegerList, n);
         c.grid.highway_rows.clear();
         for (const auto& e : n) {
           if (!e.IsScalar()) mismatch("grid_highway_rows", KeyType::IntegerList, n);
           c.grid.highway_rows.push_back(static_cast<int>(as_integer("grid_highway_rows", e)));
         }
       },
       [](const Config& c) { return ojson(c.grid.highway_rows); }},
      integer<std::uint64_t>("grid_seed", "", "generated grid origin seed", [](Config& c) -> std::uint64_t& { return c.grid.seed; }),
      text("weather_file", "weather records JSON; empty means clear weather", [](Config& c) -> std::string& { return c.weather_file; }),
  };
  return table;
}

}  // namespace

std::span<const KeyDoc> keys() {
  static const std::vector<KeyDoc> docs = [] {
    std::vector<KeyDoc> d;
    for (const auto& e : entries()) d.push_back(e.doc);
    return d;
  }();
  return docs;
}

Config parse_config(std::string_view yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::TypeMismatch, std::string("config is not valid YAML: ") + e.what());
  }
  Config c;
  if (root.IsNull()) return c;
  if (!root.IsMap()) throw Error(ErrorCode::TypeMismatch, "config must be a mapping of key: value");
  const auto& table = entries();
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    auto it = std::find_if(table.begin(), table.end(), [&](const Entry& e) { return e.doc.name == key; });
    if (it == table.end()) throw Error(ErrorCode::UnknownKey, "unknown config key '" + key + "'");
    it->set(c, kv.second);
  }
  return c;
}

Config load_config(const std::filesystem::path& file) {
  if (file.empty()) return {};
  return parse_config(io::read_file(file));
}

ojson to_json(const Config& c) {
  ojson j = ojson::object();
  for (const auto& e : entries()) j[std::string(e.doc.name)] = e.get(c);
  return j;
}

std::string key_table() {
  const Config defaults;
  std::string out = "| key | type | default | unit | meaning |\n|---|---|---|---|---|\n";
  for (const auto& e : entries()) {
    out += "| `" + std::string(e.doc.name) + "` | " + std::string(type_name(e.doc.type)) + " | `" +
           e.get(defaults).dump() + "` | " + std::string(e.doc.unit) + " | " + std::string(e.doc.description) + " |\n";
  }
  return out;
}

}  // namespace drivesense::config
