#pragma once

// The five processing stages over in-memory data, plus the serialized form
// each stage leaves in a trip directory.

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "drivesense/config.hpp"
#include "drivesense/dbi.hpp"
#include "drivesense/fusion.hpp"
#include "drivesense/map_match.hpp"
#include "drivesense/motion.hpp"
#include "drivesense/records.hpp"
#include "drivesense/road_network.hpp"
#include "drivesense/time_sync.hpp"

namespace drivesense::pipeline {

/// Raw stream files as recorded by the two units.
struct RawTrip {
  std::string gnss_nmea;    // telemetry unit
  std::string vision_nmea;  // vision unit clock anchors
  std::string imu_csv;
  std::string obd_csv;
  std::string vision_jsonl;
};

// ---- ingest -------------------------------------------------------------------

struct StreamCheck {
  std::string stream;
  std::size_t records = 0;
  std::size_t line_errors = 0;
  std::size_t non_monotonic = 0;
  std::size_t invariant_violations = 0;
  std::size_t gaps = 0;
  std::vector<std::string> messages;  // first few problems
  bool ok = true;
};

struct Ingested {
  std::int64_t epoch_utc = 0;
  std::vector<GnssFix> gnss;            // telemetry clock
  std::vector<GnssFix> vision_anchors;  // vision clock
  std::vector<ImuSample> imu;
  std::vector<ObdReading> obd;
  std::vector<VisionEvent> vision;
  std::vector<StreamCheck> checks;
  bool ok() const;
};

/// Parses and validates every stream. Never throws on bad content; problems
/// land in `checks`.
Ingested ingest(const RawTrip& raw, const config::Config& cfg);
nlohmann::ordered_json to_json(const std::vector<StreamCheck>& checks);

// ---- sync ---------------------------------------------------------------------

struct Clocks {
  sync::ClockModel telemetry;
  sync::ClockModel vision;
};

/// Throws InsufficientAnchors / DegenerateFit.
Clocks estimate_clocks(const Ingested& in);
nlohmann::ordered_json to_json(const Clocks& c);
Clocks clocks_from_json(const nlohmann::json& j);

/// Every stream on GPS seconds since the trip epoch.
struct Synced {
  std::int64_t epoch_utc = 0;
  std::vector<GnssFix> gnss;
  std::vector<ImuSample> imu;
  std::vector<ObdReading> obd;
  std::vector<VisionEvent> vision;
};

Synced apply_clocks(const Ingested& in, const Clocks& c);

// ---- events -------------------------------------------------------------------

struct EventsOutput {
  std::vector<fusion::DetectedEvent> events;  // sorted by t
  std::vector<motion::TurnSegment> turns;
  motion::ConsistencyReport speed_check;
  double perclos_max = 0.0;
};

EventsOutput detect_events(const Synced& s, const config::Config& cfg);
/// One DetectedEvent JSON object per line.
std::string events_jsonl(const std::vector<fusion::DetectedEvent>& events);
std::vector<fusion::DetectedEvent> parse_events_jsonl(std::string_view text);
/// Everything but the events.
nlohmann::ordered_json summary_json(const EventsOutput& e);
EventsOutput events_from(std::string_view events_jsonl_text, const nlohmann::json& summary);

// ---- match --------------------------------------------------------------------

struct MatchOutput {
  net::MatchedPath path;
  std::optional<net::Detour> detour;
  std::optional<net::GettingLostEvent> lost;
  bool lane_reliable = false;
  std::vector<fusion::DetectedEvent> events;  // getting lost, lane deviations
};

/// Throws NoCandidates when the trip has too few positioned fixes.
MatchOutput match(const Synced& s, const EventsOutput& ev, const net::RoadNetwork& network,
                  const net::SpatialIndex& index, const config::Config& cfg);
nlohmann::ordered_json to_json(const MatchOutput& m);
MatchOutput match_from_json(const nlohmann::json& j);

// ---- dbi ----------------------------------------------------------------------

struct TripIds {
  std::string trip_id;
  std::string driver_id;
};

dbi::TripSummary summarize(const TripIds& ids, const Synced& s, const EventsOutput& ev, const MatchOutput& m,
                           const net::RoadNetwork& network, std::span<const fusion::WeatherRecord> weather,
                           const config::Config& cfg);

// ---- whole trip ---------------------------------------------------------------

struct TripResult {
  Ingested ingested;
  Clocks clocks;
  Synced synced;
  EventsOutput events;
  MatchOutput matched;
  dbi::TripSummary summary;
};

/// All stages in memory. Throws on the first failing stage; ingest failures
/// surface as InvariantViolation naming the stream.
TripResult run_trip(const RawTrip& raw, const TripIds& ids, const net::RoadNetwork& network,
                    const net::SpatialIndex& index, std::span<const fusion::WeatherRecord> weather,
                    const config::Config& cfg);

}  // namespace drivesense::pipeline
