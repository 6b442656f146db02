#pragma once

// Pipeline configuration: every detector threshold, flat YAML keys.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

#include "drivesense/fusion.hpp"
#include "drivesense/map_match.hpp"
#include "drivesense/motion.hpp"
#include "drivesense/sim.hpp"
#include "drivesense/vision.hpp"

namespace drivesense::config {

struct IngestLimits {
  double gnss_max_gap_s = 1.5;
  double imu_max_gap_s = 0.5;
  double obd_max_gap_s = 1.0;
  double vision_max_gap_s = 1.0;
  double max_line_error_fraction = 0.01;  // per stream, above this ingest fails
};

struct Config {
  IngestLimits ingest;
  motion::HarshThresholds harsh;
  motion::PotholeParams pothole;
  motion::TurnParams turn;
  motion::ConsistencyParams consistency;
  std::optional<double> imu_mounting_yaw_deg;
  vision::VisionParams vision;
  double perclos_window_s = 60.0;
  net::MatchParams match;
  net::LostParams lost;
  net::LaneParams lane;
  fusion::SegmentParams segment;
  fusion::ReactionParams reaction;
  fusion::ComplianceParams compliance;
  double braking_lookback_s = 3.0;
  fusion::TravelParams travel;
  std::string network_file;  // empty: generated grid below
  sim::GridSpec grid{10, 10, 200.0, {4}, 0};
  std::string weather_file;
};

enum class KeyType { Number, Integer, Text, IntegerList, OptionalNumber, ClockTime };

struct KeyDoc {
  std::string_view name;
  KeyType type;
  std::string_view unit;
  std::string_view description;
};

/// Every accepted key in file order.
std::span<const KeyDoc> keys();

/// Flat YAML mapping. Missing keys keep their defaults. Throws UnknownKey
/// naming the key, TypeMismatch naming key and expected type.
Config parse_config(std::string_view yaml_text);
/// Empty path means all defaults.
Config load_config(const std::filesystem::path& file);

/// Effective value of every key, in key order.
nlohmann::ordered_json to_json(const Config& c);

/// Markdown table of keys, types, defaults and units.
std::string key_table();

}  // namespace drivesense::config
