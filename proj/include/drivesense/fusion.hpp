#pragma once

// Cross-stream event fusion: trip segmentation, reaction times, signal
// compliance, braking annotation and travel statistics.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "drivesense/map_match.hpp"
#include "drivesense/motion.hpp"
#include "drivesense/records.hpp"
#include "drivesense/road_network.hpp"
#include "drivesense/vision.hpp"

namespace drivesense::fusion {

// ---- trips -------------------------------------------------------------------

struct TripSpan {
  double t_start = 0.0;
  double t_end = 0.0;
  double distance_m = 0.0;
};

struct SegmentParams {
  double start_kph = 3.0;
  double start_sustain_s = 10.0;
  double stop_kph = 1.0;
  double stop_sustain_s = 300.0;
};

/// Trips begin once speed stays above start_kph for start_sustain_s and end
/// once it stays below stop_kph for stop_sustain_s (or the stream ends).
/// Distance is the haversine sum over positioned fixes inside the span.
std::vector<TripSpan> segment_trips(std::span<const GnssFix> fixes, std::span<const motion::SpeedSample> speed,
                                    const SegmentParams& p = {});

/// Haversine path length over positioned GGA fixes in [t0, t1] (all positioned
/// fixes when the stream has no GGA sentences).
double path_length_m(std::span<const GnssFix> fixes, double t0, double t1);

// ---- detected events -----------------------------------------------------------

enum class EventKind {
  HarshAccel,
  HarshBrake,
  HarshCorner,
  Pothole,
  EyesClosed,
  Yawn,
  Distraction,
  PhoneUse,
  Smoking,
  LaneCrossing,
  NearCollision,
  StopSignEncounter,
  TrafficLightEncounter,
  PedestrianEncounter,
  RedLightRun,
  StopSignViolation,
  ReactionSample,
  MissedStimulus,
  GettingLost,
  LaneDeviation,
};

std::string_view to_string(EventKind k);
EventKind event_kind_from_string(std::string_view s);
EventKind event_kind_of(motion::MotionKind k);
EventKind event_kind_of(vision::EpisodeKind k);

enum class StimulusKind { LightToGreen, LightToRed, TaillightOn, Pothole };
std::string_view to_string(StimulusKind k);
StimulusKind stimulus_kind_from_string(std::string_view s);
inline constexpr StimulusKind kAllStimuli[] = {StimulusKind::LightToGreen, StimulusKind::LightToRed,
                                               StimulusKind::TaillightOn, StimulusKind::Pothole};

struct DetectedEvent {
  EventKind kind = EventKind::HarshBrake;
  double t = 0.0;  // synchronized time of the event
  double duration_s = 0.0;
  std::optional<LatLon> location;
  int severity = 1;  // 1..3
  double value = 0.0;  // peak accel, yaw, distance, latency or ratio by kind
  std::optional<StimulusKind> stimulus;
  std::optional<bool> gaze_offroad;  // harsh brakes only
  friend bool operator==(const DetectedEvent&, const DetectedEvent&) = default;
};

std::string to_json_line(const DetectedEvent& e);
DetectedEvent parse_detected_event(std::string_view line);

/// Nearest positioned fix within max_gap_s of t.
std::optional<LatLon> locate(std::span<const GnssFix> fixes, double t, double max_gap_s = 1.0);

// ---- reaction time ---------------------------------------------------------------

struct Stimulus {
  StimulusKind kind = StimulusKind::TaillightOn;
  double t = 0.0;
};

struct ResponseChannels {
  std::vector<double> brake_onsets;    // a_long falling through the onset threshold
  std::vector<double> pedal_releases;  // pedal falling through the pedal threshold
  std::vector<double> pedal_presses;   // pedal rising through the pedal threshold
};

struct ReactionParams {
  double max_window_s = 5.0;
  double brake_onset_mps2 = -1.0;
  double pedal_threshold_pct = 3.0;
};

struct ReactionSample {
  StimulusKind kind = StimulusKind::TaillightOn;
  double t_stimulus = 0.0;
  double latency_s = 0.0;
};

struct ReactionResult {
  std::vector<ReactionSample> samples;
  std::vector<Stimulus> missed;
};

/// Stimuli from traffic-light state changes inside encounters, taillight
/// off->on transitions and pothole strikes. Sorted by time.
std::vector<Stimulus> collect_stimuli(std::span<const vision::EpisodicEvent> encounters,
                                      std::span<const VisionEvent> vision_events,
                                      std::span<const motion::MotionEvent> potholes);

/// Interpolated threshold crossings.
ResponseChannels response_channels(std::span<const motion::VehicleFrameAccel> accel,
                                   std::span<const ObdReading> obd, const ReactionParams& p = {});

/// Stop stimuli take the first brake onset or pedal release, go stimuli the
/// first pedal press, strictly after the stimulus and within the window.
ReactionResult reaction_time(std::span<const Stimulus> stimuli, const ResponseChannels& responses,
                             const ReactionParams& p = {});

// ---- signal compliance -------------------------------------------------------

struct ComplianceParams {
  double red_advance_m = 10.0;
  double red_window_s = 3.0;  // advance is measured over the end of the final red run
  double stop_min_kph = 2.0;
  double stop_window_s = 10.0;
};

/// Distance covered between t0 and t1 by integrating speed.
double advance_m(std::span<const motion::SpeedSample> speed, double t0, double t1);

std::vector<DetectedEvent> signal_compliance(std::span<const vision::EpisodicEvent> encounters,
                                             std::span<const motion::SpeedSample> speed,
                                             const ComplianceParams& p = {});

// ---- braking pattern ---------------------------------------------------------

struct AnnotatedBrake {
  motion::MotionEvent brake;
  bool gaze_offroad = false;
};

/// A harsh brake is gaze-offroad when a distraction or eyes-closed episode
/// overlaps [t_start - lookback_s, t_start].
std::vector<AnnotatedBrake> braking_pattern(std::span<const motion::MotionEvent> events,
                                            std::span<const vision::EpisodicEvent> episodes,
                                            double lookback_s = 3.0);

// ---- weather and travel -------------------------------------------------------

enum class Weather { Clear, Rain, SevereRain, Fog };
std::string_view to_string(Weather w);
Weather weather_from_string(std::string_view s);

struct WeatherRecord {
  std::int64_t t_start = 0;  // unix seconds
  std::int64_t t_end = 0;
  double min_lat = 0.0, min_lon = 0.0, max_lat = 0.0, max_lon = 0.0;
  Weather condition = Weather::Clear;
  friend bool operator==(const WeatherRecord&, const WeatherRecord&) = default;
};

/// {"records":[{"t_start":iso,"t_end":iso,"bbox":[min_lat,min_lon,max_lat,max_lon],"condition":"fog"}]}
std::vector<WeatherRecord> parse_weather(std::string_view text);
std::string weather_to_json(std::span<const WeatherRecord> records);

struct NightWindow {
  int start_min = 21 * 60;  // local minutes after midnight
  int end_min = 6 * 60;
  bool contains(int minute_of_day) const {
    return start_min <= end_min ? (minute_of_day >= start_min && minute_of_day < end_min)
                                : (minute_of_day >= start_min || minute_of_day < end_min);
  }
};

struct TravelParams {
  NightWindow night;
  double utc_offset_h = 0.0;
};

struct TravelStats {
  double distance_m = 0.0;
  double highway_m = 0.0;
  double night_m = 0.0;
  double severe_weather_m = 0.0;
};

/// Per-step attribution between consecutive positioned fixes inside the trip.
/// A step counts as highway when the later fix is matched to a highway edge,
/// as night / severe weather by the step midpoint.
TravelStats travel_pattern(const TripSpan& trip, std::span<const GnssFix> fixes, std::int64_t epoch_utc,
                           const net::MatchedPath* matched, const net::RoadNetwork* network,
                           std::span<const WeatherRecord> weather, const TravelParams& p = {});

// ---- severity ----------------------------------------------------------------

int severity_of_motion(const motion::MotionEvent& e, const motion::HarshThresholds& th);
int severity_of_episode(const vision::EpisodicEvent& e);

}  // namespace drivesense::fusion
