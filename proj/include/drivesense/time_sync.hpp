#pragma once

// Per-unit clock models against GPS time and re-timing of unit streams.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "drivesense/records.hpp"

namespace drivesense::sync {

/// t_unit = t_gps * (1 + drift_ppm * 1e-6) + offset_s, times relative to the
/// trip epoch.
struct ClockModel {
  double offset_s = 0.0;
  double drift_ppm = 0.0;
  double rms_residual_s = 0.0;
  std::size_t n_anchors = 0;
  friend bool operator==(const ClockModel&, const ClockModel&) = default;
};

inline constexpr double kMaxDriftPpm = 500.0;

/// Least-squares affine fit of unit time against GPS time.
ClockModel estimate_clock_model(std::span<const ClockAnchor> anchors);

inline double to_sync_time(const ClockModel& m, double t_unit) {
  return (t_unit - m.offset_s) / (1.0 + m.drift_ppm * 1e-6);
}
inline double to_unit_time(const ClockModel& m, double t_gps) {
  return t_gps * (1.0 + m.drift_ppm * 1e-6) + m.offset_s;
}

/// Anchors from RMC sentences: receipt time paired with the sentence's UTC
/// date + time of day, expressed relative to epoch_utc.
std::vector<ClockAnchor> anchors_from_rmc(std::span<const GnssFix> fixes, std::int64_t epoch_utc);

/// A stream whose record times are GPS seconds since the trip epoch.
template <class R>
struct SyncedStream {
  std::string source_unit;
  std::vector<R> records;
};

template <class R>
SyncedStream<R> apply_sync(std::vector<R> stream, const ClockModel& model, std::string source_unit = {}) {
  for (auto& r : stream) r.t = to_sync_time(model, r.t);
  return {std::move(source_unit), std::move(stream)};
}

/// Multi-channel numeric series sharing one time axis.
struct NumericStream {
  std::vector<double> t;
  std::vector<std::vector<double>> channels;
};

/// Linear interpolation onto a uniform grid spanning [first, last].
NumericStream resample_uniform(const NumericStream& s, double rate_hz);

/// Linear interpolation of (t, v) at `at`; clamps outside the span.
double interpolate(std::span<const double> t, std::span<const double> v, double at);

/// Offset-only fallback for a unit without GPS anchors: the lag maximizing the
/// correlation of a shared observable. `reference` is on GPS time, `other` on
/// the unit clock; both single-channel.
ClockModel estimate_offset_by_correlation(const NumericStream& reference, const NumericStream& other,
                                          double max_lag_s, double step_s);

}  // namespace drivesense::sync
