#pragma once

// Vehicle-frame acceleration and the telematics event layer: harsh
// acceleration/braking/cornering, pothole strikes, and a GNSS vs OBD speed
// cross-check.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drivesense/records.hpp"

namespace drivesense::motion {

struct VehicleFrameAccel {
  double t = 0.0;
  double a_long = 0.0;  // + forward
  double a_lat = 0.0;   // + left
  double a_vert = 0.0;  // + up, gravity removed
  double yaw_rate = 0.0;  // rad/s, + counter-clockwise seen from above
};

/// Vehicle speed on the synchronized timeline.
struct SpeedSample {
  double t = 0.0;
  double mps = 0.0;
};

struct MountingHints {
  // Yaw of the device x axis relative to vehicle forward, used when speed
  // data cannot pin the forward axis.
  std::optional<double> mounting_yaw_deg;
  double lowpass_hz = 0.2;
  double quiescent_gyro_rad_s = 0.05;
  double quiescent_dvdt_mps2 = 0.25;
};

/// Device-frame unit axes of the vehicle frame.
struct Alignment {
  Vec3 forward;
  Vec3 left;
  Vec3 up;
  double gravity_mps2 = 0.0;
  bool forward_from_speed = false;
};

Alignment estimate_alignment(std::span<const ImuSample> imu, std::span<const SpeedSample> speed,
                             const MountingHints& hints = {});

std::vector<VehicleFrameAccel> to_vehicle_frame(std::span<const ImuSample> imu, const Alignment& a);

/// estimate_alignment followed by to_vehicle_frame. Speed may be empty.
std::vector<VehicleFrameAccel> gravity_align(std::span<const ImuSample> imu,
                                             std::span<const SpeedSample> speed = {},
                                             const MountingHints& hints = {});

enum class MotionKind { HarshAccel, HarshBrake, HarshCorner, Pothole };
std::string_view to_string(MotionKind k);
MotionKind motion_kind_from_string(std::string_view s);

struct MotionEvent {
  MotionKind kind = MotionKind::HarshBrake;
  double t_start = 0.0;
  double t_end = 0.0;
  double peak = 0.0;
  double duration_s = 0.0;
  double t_peak = 0.0;
  friend bool operator==(const MotionEvent&, const MotionEvent&) = default;
};

struct HarshThresholds {
  double accel = 3.0;
  double brake = -3.0;
  double corner = 3.5;
  double min_duration_s = 0.3;
  double hysteresis = 0.8;
  double merge_gap_s = 1.0;
};

/// Sorted by t_start.
std::vector<MotionEvent> detect_harsh_events(std::span<const VehicleFrameAccel> accel,
                                             const HarshThresholds& th = {});

struct PotholeParams {
  double window_s = 0.5;
  double z_thresh = 6.0;
  double highpass_hz = 1.0;
  // Lower bound on the adaptive threshold so a glass-smooth trip does not
  // flag sensor noise.
  double floor_mps2 = 2.0;
};

/// First-order high-pass of the vertical channel.
std::vector<double> highpass(std::span<const double> t, std::span<const double> x, double cutoff_hz);

std::vector<MotionEvent> detect_potholes(std::span<const VehicleFrameAccel> accel,
                                         const PotholeParams& p = {});

struct SpeedSegment {
  double t_start = 0.0;
  double t_end = 0.0;
};

struct ConsistencyReport {
  double rms_kph = 0.0;
  std::size_t n_compared = 0;
  std::vector<SpeedSegment> flagged;
};

struct ConsistencyParams {
  double smooth_s = 1.0;
  double flag_kph = 10.0;
  double flag_min_s = 5.0;
};

/// GNSS-derived speed (haversine finite differences, centered moving average)
/// against OBD speed interpolated at the same instants.
ConsistencyReport speed_consistency(std::span<const SpeedSample> obd, std::span<const GnssFix> gnss,
                                    const ConsistencyParams& p = {});

/// OBD speed readings (PID 0x0D) as SpeedSample.
std::vector<SpeedSample> speed_from_obd(std::span<const ObdReading> readings);

struct TurnSegment {
  double t_start = 0.0;
  double t_end = 0.0;
  double t_mid = 0.0;
  double heading_change_rad = 0.0;  // + left
};

struct TurnParams {
  double yaw_rate_rad_s = 0.2;
  double min_duration_s = 1.0;
  double min_heading_change_rad = 0.5;
};

/// Sustained yaw-rate excursions (intersection turns).
std::vector<TurnSegment> detect_turns(std::span<const VehicleFrameAccel> accel, const TurnParams& p = {});

std::string to_json_line(const MotionEvent& e);

}  // namespace drivesense::motion
