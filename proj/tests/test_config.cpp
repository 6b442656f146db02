#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "drivesense/config.hpp"
#include "drivesense/error.hpp"
#include "drivesense/pipeline.hpp"
#include "drivesense/sim.hpp"
#include "temp_dir.hpp"

using namespace drivesense;
using namespace drivesense::config;

namespace {

ErrorCode code_of(std::string_view yaml, std::string* what = nullptr) {
  try {
    parse_config(yaml);
  } catch (const Error& e) {
    if (what) *what = e.what();
    return e.code();
  }
  FAIL("config accepted");
  return ErrorCode::Io;
}

std::size_t harsh_brakes(const pipeline::RawTrip& raw, const Config& cfg) {
  const auto in = pipeline::ingest(raw, cfg);
  const auto synced = pipeline::apply_clocks(in, pipeline::estimate_clocks(in));
  const auto ev = pipeline::detect_events(synced, cfg);
  return static_cast<std::size_t>(std::count_if(ev.events.begin(), ev.events.end(), [](const auto& e) {
    return e.kind == fusion::EventKind::HarshBrake;
  }));
}

}  // namespace

TEST_CASE("empty config gives every default") {
  CHECK(to_json(parse_config("")) == to_json(Config{}));
  CHECK(to_json(parse_config("# nothing here\n")) == to_json(Config{}));
  CHECK(to_json(load_config("")) == to_json(Config{}));
}

TEST_CASE("keys set the fields they name") {
  const auto c = parse_config(
      "harsh_brake_threshold: -2.0\n"
      "distraction_yaw_deg: 25\n"
      "near_collision_distance_m: 6.5\n"
      "detour_ratio_threshold: 1.8\n"
      "night_start: \"22:30\"\n"
      "night_end: \"05:15\"\n"
      "match_candidates: 6\n"
      "grid_highway_rows: [2, 7]\n"
      "imu_mounting_yaw_deg: 90\n");
  CHECK(c.harsh.brake == -2.0);
  CHECK(c.vision.distraction.yaw_thresh_deg == 25.0);
  CHECK(c.vision.episodes.near_collision_m == 6.5);
  CHECK(c.lost.ratio_threshold == 1.8);
  CHECK(c.travel.night.start_min == 22 * 60 + 30);
  CHECK(c.travel.night.end_min == 5 * 60 + 15);
  CHECK(c.match.k == 6);
  CHECK(c.grid.highway_rows == std::vector<int>{2, 7});
  CHECK(c.imu_mounting_yaw_deg == 90.0);
}

TEST_CASE("effective config round trips through YAML") {
  const auto c = parse_config("harsh_accel_threshold: 2.5\nutc_offset_h: -5\nnight_start: \"20:00\"\n");
  const auto j = to_json(c);
  std::string yaml;
  for (const auto& [k, v] : j.items()) {
    if (v.is_null()) continue;
    yaml += k + ": " + v.dump() + "\n";
  }
  CHECK(to_json(parse_config(yaml)) == to_json(c));
}

TEST_CASE("unknown keys are rejected by name") {
  std::string what;
  CHECK(code_of("harsh_brake_treshold: -2.0\n", &what) == ErrorCode::UnknownKey);
  CHECK(what.find("harsh_brake_treshold") != std::string::npos);
}

TEST_CASE("wrong value types are rejected naming key and type") {
  std::string what;
  CHECK(code_of("harsh_brake_threshold: fast\n", &what) == ErrorCode::TypeMismatch);
  CHECK(what.find("harsh_brake_threshold") != std::string::npos);
  CHECK(code_of("match_candidates: 2.5\n") == ErrorCode::TypeMismatch);
  CHECK(code_of("night_start: \"25:00\"\n") == ErrorCode::TypeMismatch);
  CHECK(code_of("grid_highway_rows: 3\n") == ErrorCode::TypeMismatch);
  CHECK(code_of("- a\n- b\n") == ErrorCode::TypeMismatch);
}

TEST_CASE("config files load from disk") {
  testutil::TempDir tmp("config");
  const auto p = tmp.path() / "c.yaml";
  std::ofstream(p) << "harsh_brake_threshold: -2.0\n";
  CHECK(load_config(p).harsh.brake == -2.0);
  CHECK_THROWS_AS(load_config(tmp.path() / "missing.yaml"), Error);
}

TEST_CASE("key table documents every key") {
  const auto table = key_table();
  CHECK(keys().size() == to_json(Config{}).size());
  for (const auto& k : keys()) {
    CHECK(table.find("`" + std::string(k.name) + "`") != std::string::npos);
    CHECK_FALSE(k.description.empty());
  }
}

TEST_CASE("harsh_brake_threshold -2.0 changes the event count on a moderate-braking fixture") {
  const auto network = sim::gen_network({10, 10, 200.0, {4}, 0});
  sim::RandomScriptOptions opt;
  opt.harsh_brakes = 3;
  opt.potholes = opt.distractions = opt.near_collisions = opt.red_light_runs = 0;
  opt.eyes_closed = opt.lane_crossings = opt.stop_and_go = opt.taillights = 0;
  opt.getting_lost = false;
  auto script = sim::random_script(network, 41, opt);
  std::size_t brakes = 0;
  for (auto& inj : script.injections) {
    if (inj.kind != sim::InjectionKind::HarshBrake) continue;
    inj.magnitude = 2.5;  // between -2 and -3 m/s^2
    ++brakes;
  }
  REQUIRE(brakes == 3);
  const auto t = sim::synthesize(script, network);
  const pipeline::RawTrip raw{t.gnss_nmea, t.vision_nmea, t.imu_csv, t.obd_csv, t.vision_jsonl};
  CHECK(harsh_brakes(raw, Config{}) == 0);
  CHECK(harsh_brakes(raw, parse_config("harsh_brake_threshold: -2.0\n")) == 3);
}
