#pragma once

// Debounces per-frame camera detections into behavioral episodes.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drivesense/records.hpp"

namespace drivesense::vision {

enum class EpisodeKind {
  EyesClosedEpisode,
  YawnEpisode,
  DistractionEpisode,
  PhoneUseEpisode,
  SmokingEpisode,
  LaneCrossingEvent,
  NearCollisionEvent,
  StopSignEncounter,
  TrafficLightEncounter,
  PedestrianEncounter,
};
std::string_view to_string(EpisodeKind k);
EpisodeKind episode_kind_from_string(std::string_view s);

/// A maximal stretch of one light state inside an encounter.
struct LightRun {
  vision_kind::Light state = vision_kind::Light::Red;
  double t_first = 0.0;
  double t_last = 0.0;
  friend bool operator==(const LightRun&, const LightRun&) = default;
};

struct EpisodicEvent {
  EpisodeKind kind = EpisodeKind::LaneCrossingEvent;
  double t_start = 0.0;
  double t_end = 0.0;
  std::size_t n_raw = 0;  // contributing detections
  std::optional<double> max_yaw_deg;
  std::optional<double> min_distance_m;
  std::vector<LightRun> light_runs;
  std::optional<bool> pedestrian_crossing;
};

struct PerclosPoint {
  double t = 0.0;
  double fraction = 0.0;
};

/// Trailing-window fraction of time with eyes closed, one point per eye-state
/// sample. Each sample holds until the next; the last holds for the median
/// spacing.
std::vector<PerclosPoint> perclos(std::span<const VisionEvent> events, double window_s);

/// Circular median of head yaw over the first `calib_s` seconds.
double mounting_yaw_deg(std::span<const VisionEvent> events, double calib_s = 60.0);

struct DistractionParams {
  double yaw_thresh_deg = 30.0;
  double min_duration_s = 2.0;
  double merge_gap_s = 0.5;
  double calib_s = 60.0;
  // Overrides the calibrated mounting yaw when set.
  std::optional<double> mounting_yaw_deg;
};

std::vector<EpisodicEvent> detect_distraction(std::span<const VisionEvent> events,
                                              const DistractionParams& p = {});

std::vector<EpisodicEvent> detect_eyes_closed(std::span<const VisionEvent> events, double min_duration_s = 0.5);

std::vector<EpisodicEvent> detect_yawning(std::span<const VisionEvent> events, double min_duration_s = 1.5);

struct EpisodeParams {
  double lane_merge_s = 1.0;
  double near_collision_m = 8.0;
  double near_collision_gap_s = 1.0;
  double encounter_gap_s = 5.0;
  double object_gap_s = 2.0;  // phone use / smoking
};

/// Lane crossings, near collisions, stop-sign / traffic-light / pedestrian
/// encounters, phone-use and smoking episodes.
std::vector<EpisodicEvent> episodic_counts(std::span<const VisionEvent> events, const EpisodeParams& p = {});

struct VisionParams {
  DistractionParams distraction;
  EpisodeParams episodes;
  double eyes_closed_min_s = 0.5;
  double yawn_min_s = 1.5;
};

/// Every episode kind, sorted by t_start. Eye closures inside a yawn are
/// reported only as the yawn.
std::vector<EpisodicEvent> all_episodes(std::span<const VisionEvent> events, const VisionParams& p = {});

std::string to_json_line(const EpisodicEvent& e);

}  // namespace drivesense::vision
