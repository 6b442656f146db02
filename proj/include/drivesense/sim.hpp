#pragma once

// Synthetic road networks, scripted drives and sensor stream synthesis.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "drivesense/fusion.hpp"
#include "drivesense/road_network.hpp"
#include "drivesense/time_sync.hpp"

namespace drivesense::sim {

struct GridSpec {
  int rows = 10;
  int cols = 10;
  double spacing_m = 200.0;
  std::vector<int> highway_rows;
  std::uint64_t seed = 0;
};

/// Two-way grid. Node id = row * cols + col; each street is a pair of
/// directed edges with consecutive ids. Highway rows run at 100 kph, other
/// streets at 40 kph. The seed shifts the origin only.
net::RoadNetwork gen_network(const GridSpec& spec);

// ---- scripts -------------------------------------------------------------------

enum class InjectionKind {
  HarshBrake,
  HarshAccel,
  Pothole,
  Distraction,
  EyesClosed,
  Yawn,
  PhoneUse,
  LaneCrossing,
  NearCollision,
  RedLightRun,
  GreenPass,
  StopAndGo,
  StopSign,
  StopSignViolation,
  Taillight,
  GettingLost,
};

std::string_view to_string(InjectionKind k);
InjectionKind injection_kind_from_string(std::string_view s);

/// Position-triggered kinds use at_m (distance along the driven path);
/// intersection kinds and getting_lost use node_index into the script route.
/// Zero-valued parameters take per-kind defaults.
struct Injection {
  InjectionKind kind = InjectionKind::HarshBrake;
  std::optional<double> at_m;
  std::optional<std::size_t> node_index;
  double duration_s = 0.0;
  double magnitude = 0.0;  // m/s^2, head yaw deg or closest distance m by kind
  double latency_s = 0.0;  // reaction kinds
  double wait_s = 0.0;     // stop_and_go: red time after the vehicle stops
  int loops = 0;           // getting_lost: block loops driven at the node
  friend bool operator==(const Injection&, const Injection&) = default;
};

struct ClockSpec {
  double offset_s = 0.0;
  double drift_ppm = 0.0;
  friend bool operator==(const ClockSpec&, const ClockSpec&) = default;
};

struct NoiseSpec {
  double gps_sigma_m = 4.9;  // per axis
  double gps_tau_s = 120.0;  // Gauss-Markov correlation time
  FixQuality fix_quality = FixQuality::Gps;
  double rtk_sigma_m = 0.03;  // used when fix_quality is RtkFixed / RtkFloat
  double accel_sigma = 0.05;
  double gyro_sigma = 0.005;
  double anchor_jitter_s = 0.001;
  double head_yaw_sigma_deg = 3.0;
  friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

struct DriveScript {
  std::uint64_t seed = 0;
  std::string trip_id = "T0001";
  std::string driver_id = "D1";
  std::int64_t start_utc = 0;  // unix seconds at GPS t = 0
  std::vector<net::NodeId> route;  // node sequence; empty means route_from -> route_to
  std::optional<net::NodeId> route_from;
  std::optional<net::NodeId> route_to;
  double start_offset_m = 30.0;           // along the first edge
  std::optional<double> end_offset_m;     // along the last edge; default mid-edge
  double idle_start_s = 20.0;
  double idle_end_s = 10.0;
  ClockSpec telemetry;
  ClockSpec vision;
  double mount_roll_deg = 0.0, mount_pitch_deg = 0.0, mount_yaw_deg = 0.0;  // IMU in the vehicle
  double camera_yaw_deg = 0.0;  // driver camera relative to straight ahead
  NoiseSpec noise;
  std::vector<Injection> injections;
  friend bool operator==(const DriveScript&, const DriveScript&) = default;
};

nlohmann::ordered_json to_json(const DriveScript& s);
DriveScript script_from_json(const nlohmann::json& j);
DriveScript parse_script(std::string_view text);

struct RandomScriptOptions {
  std::string trip_id = "T0001";
  std::string driver_id = "D1";
  std::int64_t start_utc = 1772438400;  // 2026-03-02T08:00:00Z
  int harsh_brakes = 3;
  int potholes = 2;
  int distractions = 2;
  int near_collisions = 2;
  int red_light_runs = 1;
  bool getting_lost = true;
  int eyes_closed = 1;
  int lane_crossings = 1;
  int stop_and_go = 1;
  int taillights = 1;
  double max_clock_offset_s = 5.0;
  double max_drift_ppm = 50.0;
  double min_route_m = 1400.0;
  double max_route_m = 2200.0;
};

/// Seeded script on the given network. Throws InvalidScript when the network
/// cannot host the requested injections.
DriveScript random_script(const net::RoadNetwork& network, std::uint64_t seed, const RandomScriptOptions& opt = {});

// ---- ground truth ----------------------------------------------------------------

struct TruthEvent {
  fusion::EventKind kind = fusion::EventKind::HarshBrake;
  double t = 0.0;  // reference time a detection is compared against
  double t_start = 0.0;
  double t_end = 0.0;
  LatLon location;
  std::optional<fusion::StimulusKind> stimulus;
  std::optional<double> latency_s;
  std::size_t injection = 0;  // index into the script's injections
};

struct GroundTruth {
  std::string trip_id;
  std::string driver_id;
  std::int64_t epoch_utc = 0;
  sync::ClockModel telemetry;
  sync::ClockModel vision;
  std::vector<net::NodeId> route;  // after loop expansion
  std::vector<net::EdgeId> edges;
  double t_move = 0.0;  // vehicle starts rolling
  double t_stop = 0.0;  // vehicle stops for good
  double distance_m = 0.0;
  std::vector<TruthEvent> events;
};

nlohmann::ordered_json to_json(const GroundTruth& g);
GroundTruth truth_from_json(const nlohmann::json& j);

// ---- synthesis -------------------------------------------------------------------

struct TripStreams {
  std::string gnss_nmea;    // telemetry unit, GGA + RMC
  std::string vision_nmea;  // vision unit, RMC clock anchors
  std::string imu_csv;
  std::string obd_csv;
  std::string vision_jsonl;
  GroundTruth truth;
};

/// Kinematic drive over the network and its sensor streams on each unit's
/// clock. Throws ScriptEventOutsideDrive / InvalidScript.
TripStreams synthesize(const DriveScript& script, const net::RoadNetwork& network);

/// t_unit = t_gps * (1 + drift_ppm 1e-6) + offset_s for every record.
template <class R>
std::vector<R> perturb_clock(std::vector<R> stream, double offset_s, double drift_ppm) {
  const sync::ClockModel m{offset_s, drift_ppm, 0.0, 0};
  for (auto& r : stream) r.t = sync::to_unit_time(m, r.t);
  return stream;
}

}  // namespace drivesense::sim
