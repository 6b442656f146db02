#pragma once

// Driver behavior indices: per-trip summaries, the mergeable per-period
// totals and their JSON / CSV forms.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "drivesense/calendar.hpp"
#include "drivesense/fusion.hpp"

namespace drivesense::dbi {

inline constexpr double kMetersPerMile = 1609.344;

/// What the dbi stage keeps of one trip.
struct TripSummary {
  std::string trip_id;
  std::string driver_id;
  std::int64_t epoch_utc = 0;  // unix seconds at synchronized t = 0
  double t_start = 0.0;
  double t_end = 0.0;
  fusion::TravelStats travel;
  std::vector<fusion::DetectedEvent> events;
};

nlohmann::ordered_json to_json(const TripSummary& t);
TripSummary trip_summary_from_json(const nlohmann::json& j);

/// Latency samples for one stimulus kind, integer microseconds, sorted.
struct ReactionPool {
  std::vector<std::int64_t> latencies_us;
  std::size_t n() const { return latencies_us.size(); }
  double mean_s() const;
  double p90_s() const;  // nearest rank
  friend bool operator==(const ReactionPool&, const ReactionPool&) = default;
};

/// Additive content of a report. Distances are integer millimetres and
/// latencies pooled integer microseconds, so merge is exactly associative and
/// commutative and DbiTotals{} is its identity.
struct DbiTotals {
  std::int64_t n_trips = 0;
  std::int64_t distance_mm = 0;
  std::int64_t highway_mm = 0;
  std::int64_t night_mm = 0;
  std::int64_t severe_weather_mm = 0;

  std::int64_t n_getting_lost = 0;
  std::int64_t n_signal_violations = 0;
  std::int64_t n_near_collisions = 0;
  std::int64_t n_distraction_episodes = 0;
  std::int64_t n_eyes_closed_episodes = 0;
  std::int64_t n_lane_crossings = 0;

  std::array<ReactionPool, 4> reaction;  // indexed like fusion::kAllStimuli
  std::int64_t n_missed_stimuli = 0;

  std::int64_t n_harsh_brakes = 0;
  std::int64_t n_brakes_gaze_offroad = 0;

  const ReactionPool& pool(fusion::StimulusKind k) const { return reaction[static_cast<std::size_t>(k)]; }
  friend bool operator==(const DbiTotals&, const DbiTotals&) = default;
};

DbiTotals merge(const DbiTotals& a, const DbiTotals& b);

/// One trip's contribution.
DbiTotals totals_of(const TripSummary& trip);

struct DbiReport {
  std::string driver_id;
  calendar::Period period;
  DbiTotals totals;
  friend bool operator==(const DbiReport&, const DbiReport&) = default;
};

/// Local calendar day a trip is attributed to (the day it starts).
std::int64_t local_day(const TripSummary& trip, double utc_offset_h);

/// One report per period of `kind` overlapping [first_day, last_day], each the
/// merge of its daily totals. Periods without trips are all-zero.
std::vector<DbiReport> compute_dbi(const std::string& driver_id, std::span<const TripSummary> trips,
                                   calendar::PeriodKind kind, std::int64_t first_day, std::int64_t last_day,
                                   double utc_offset_h = 0.0);

nlohmann::ordered_json to_json(const DbiReport& r);
DbiReport dbi_report_from_json(const nlohmann::json& j);

/// Flat CSV, one row per report. Columns are fixed; see dbi_csv_header().
std::string dbi_csv_header();
std::string to_csv(std::span<const DbiReport> reports);

/// Daily indices sheet: driver_id,date,closed_eyes,distractions,crossing_lines,near_collisions
std::string daily_indices_csv(std::span<const DbiReport> daily);

}  // namespace drivesense::dbi
