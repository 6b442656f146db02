#pragma once

// Line-level parsers/encoders for the raw sensor formats, stream validation
// and adaptive downsampling.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drivesense/records.hpp"

namespace drivesense::ingest {

// ---- NMEA 0183 -------------------------------------------------------------

/// XOR of every byte strictly between '$' and '*'.
std::uint8_t nmea_checksum(std::string_view payload);

/// Parses one GGA or RMC sentence. The returned fix has t = 0; the receipt
/// time is attached by the stream reader.
GnssFix parse_nmea_sentence(std::string_view line);

/// Emits a GGA sentence (6 decimal minutes). Requires utc_time_of_day_s.
std::string encode_gga(const GnssFix& fix, std::string_view talker = "GP");
/// Emits an RMC sentence with the NMEA 2.3 mode indicator.
std::string encode_rmc(const GnssFix& fix, std::string_view talker = "GP");

/// Normalized JSON-lines alternative for fixes.
std::string encode_fix_json(const GnssFix& fix);
GnssFix parse_fix_json(std::string_view line);

// ---- OBD-II ----------------------------------------------------------------

inline constexpr std::uint8_t kPidEngineRpm = 0x0C;
inline constexpr std::uint8_t kPidVehicleSpeed = 0x0D;
inline constexpr std::uint8_t kPidPedalPositionD = 0x49;

struct PidSpec {
  std::uint8_t pid;
  std::size_t payload_len;
  ObdQuantity quantity;
  double (*decode)(std::span<const std::uint8_t>);
  double min_value;
  double max_value;
};

/// The supported decode table, ordered by PID.
std::span<const PidSpec> pid_table();
const PidSpec* find_pid(std::uint8_t pid);

ObdReading decode_obd_frame(const RawObdFrame& frame);
/// Inverse scaling used by the simulator; value is clamped to the PID's range.
RawObdFrame encode_obd_value(double t, std::uint8_t pid, double value);

/// "t,PID,DATA" with PID and DATA as upper-case hex.
RawObdFrame parse_obd_line(std::string_view line);
std::string encode_obd_line(const RawObdFrame& frame);

// ---- IMU -------------------------------------------------------------------

/// "t,ax,ay,az,gx,gy,gz,mx,my,mz".
ImuSample parse_imu_record(std::string_view line);
std::string encode_imu_record(const ImuSample& s);
void append_imu_record(std::string& out, const ImuSample& s);

// ---- Vision ----------------------------------------------------------------

VisionEvent parse_vision_event(std::string_view line);
std::string encode_vision_event(const VisionEvent& e);

// ---- Validation ------------------------------------------------------------

enum class FindingKind { NonMonotonic, Gap, InvariantViolation };

struct Finding {
  FindingKind kind;
  std::size_t index;
  std::string detail;
};

struct ValidationReport {
  std::vector<Finding> findings;

  bool empty() const { return findings.empty(); }
  std::size_t count(FindingKind k) const {
    return static_cast<std::size_t>(std::count_if(
        findings.begin(), findings.end(), [k](const Finding& f) { return f.kind == k; }));
  }
};

struct ValidationOptions {
  double max_gap_s = 1.0;
};

std::optional<std::string> check_invariants(const GnssFix& r);
std::optional<std::string> check_invariants(const ObdReading& r);
std::optional<std::string> check_invariants(const ImuSample& r);
std::optional<std::string> check_invariants(const VisionEvent& r);
std::optional<std::string> check_invariants(const RawObdFrame& r);

template <class R>
ValidationReport validate_stream(std::span<const R> records, const ValidationOptions& opts = {}) {
  ValidationReport report;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (auto bad = check_invariants(records[i])) {
      report.findings.push_back({FindingKind::InvariantViolation, i, *bad});
    }
    if (i == 0) continue;
    const double dt = records[i].t - records[i - 1].t;
    if (!(dt > 0.0)) {
      report.findings.push_back({FindingKind::NonMonotonic, i,
                                 "t=" + std::to_string(records[i].t) + " after t=" +
                                     std::to_string(records[i - 1].t)});
    } else if (dt > opts.max_gap_s) {
      report.findings.push_back(
          {FindingKind::Gap, i, "gap of " + std::to_string(dt) + " s"});
    }
  }
  return report;
}

template <class R>
ValidationReport validate_stream(const std::vector<R>& records, const ValidationOptions& opts = {}) {
  return validate_stream(std::span<const R>(records), opts);
}

// ---- Adaptive sampling -----------------------------------------------------

/// Keeps every record within burst_radius_s of a base-period window where
/// `interest(window_start, window_end, records_in_window)` holds, and one
/// record per base period elsewhere. Output is an order-preserving subset.
template <class R, class Interest>
std::vector<R> adaptive_downsample(std::span<const R> stream, Interest&& interest,
                                   double base_period_s, double burst_radius_s) {
  std::vector<R> out;
  if (stream.empty()) return out;
  if (!(base_period_s > 0.0)) throw std::invalid_argument("base_period_s must be > 0");

  const double t0 = stream.front().t;
  auto bucket_of = [&](double t) { return static_cast<long long>(std::floor((t - t0) / base_period_s)); };

  // Burst intervals from interesting windows, merged.
  std::vector<std::pair<double, double>> bursts;
  for (std::size_t i = 0; i < stream.size();) {
    const long long b = bucket_of(stream[i].t);
    std::size_t j = i + 1;
    while (j < stream.size() && bucket_of(stream[j].t) == b) ++j;
    const double w0 = t0 + static_cast<double>(b) * base_period_s;
    const double w1 = w0 + base_period_s;
    if (interest(w0, w1, stream.subspan(i, j - i))) {
      const double a = w0 - burst_radius_s;
      const double z = w1 + burst_radius_s;
      if (!bursts.empty() && a <= bursts.back().second) {
        bursts.back().second = std::max(bursts.back().second, z);
      } else {
        bursts.emplace_back(a, z);
      }
    }
    i = j;
  }

  std::size_t bi = 0;
  long long last_kept_bucket = -1;
  bool have_kept = false;
  for (const R& r : stream) {
    while (bi < bursts.size() && bursts[bi].second < r.t) ++bi;
    const bool in_burst = bi < bursts.size() && bursts[bi].first <= r.t && r.t <= bursts[bi].second;
    if (in_burst) {
      out.push_back(r);
      continue;
    }
    const long long b = bucket_of(r.t);
    if (!have_kept || b != last_kept_bucket) {
      out.push_back(r);
      last_kept_bucket = b;
      have_kept = true;
    }
  }
  return out;
}

template <class R, class Interest>
std::vector<R> adaptive_downsample(const std::vector<R>& stream, Interest&& interest,
                                   double base_period_s, double burst_radius_s) {
  return adaptive_downsample(std::span<const R>(stream), std::forward<Interest>(interest),
                             base_period_s, burst_radius_s);
}

/// Interest predicate for IMU logging: any sample deviating from 1 g by more
/// than accel_dev or rotating faster than gyro_rate.
struct ImuExcursion {
  double accel_dev = 1.5;
  double gyro_rate = 0.2;
  bool operator()(double, double, std::span<const ImuSample> w) const;
};

}  // namespace drivesense::ingest
