#pragma once

// Typed records for the four raw sensor streams. In a raw stream `t` is the
// recording unit's local clock; once wrapped in a SyncedStream it is GPS time
// (seconds since the trip epoch).

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "drivesense/geo.hpp"

namespace drivesense {

enum class FixQuality { NoFix, Gps, Dgps, RtkFloat, RtkFixed };

std::string_view to_string(FixQuality q);
FixQuality fix_quality_from_string(std::string_view s);

enum class SentenceKind { Gga, Rmc };

struct UtcDate {
  int year = 1970;
  int month = 1;
  int day = 1;
  friend bool operator==(const UtcDate&, const UtcDate&) = default;
};

struct GnssFix {
  double t = 0.0;
  SentenceKind sentence = SentenceKind::Gga;
  std::optional<LatLon> position;  // absent for NoFix
  std::optional<double> alt_m;
  FixQuality quality = FixQuality::NoFix;
  double hdop = 0.0;
  int n_sats = 0;
  std::optional<double> utc_time_of_day_s;  // hhmmss.ss field
  std::optional<UtcDate> utc_date;           // RMC only
  std::optional<double> speed_knots;         // RMC only
  std::optional<double> course_deg;          // RMC only

  friend bool operator==(const GnssFix&, const GnssFix&) = default;
};

enum class ObdQuantity { Rpm, SpeedKph, PedalPct };

struct RawObdFrame {
  double t = 0.0;
  std::uint8_t pid = 0;
  std::vector<std::uint8_t> data;
  friend bool operator==(const RawObdFrame&, const RawObdFrame&) = default;
};

struct ObdReading {
  double t = 0.0;
  std::uint8_t pid = 0;
  ObdQuantity quantity = ObdQuantity::SpeedKph;
  double value = 0.0;
  friend bool operator==(const ObdReading&, const ObdReading&) = default;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

struct ImuSample {
  double t = 0.0;
  Vec3 accel;  // m/s^2
  Vec3 gyro;   // rad/s
  Vec3 mag;    // uT
  friend bool operator==(const ImuSample&, const ImuSample&) = default;
};

inline constexpr double kImuAccelSanityBound = 160.0;

enum class Camera { Driver, Front };

namespace vision_kind {
struct EyeState { bool closed = false; friend bool operator==(const EyeState&, const EyeState&) = default; };
/// Per-frame mouth state from the yawning detector.
struct Yawn { bool mouth_open = false; friend bool operator==(const Yawn&, const Yawn&) = default; };
struct HeadPose {
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
  friend bool operator==(const HeadPose&, const HeadPose&) = default;
};
struct PhoneUse { friend bool operator==(const PhoneUse&, const PhoneUse&) = default; };
struct Smoking { friend bool operator==(const Smoking&, const Smoking&) = default; };
enum class Light { Red, Yellow, Green };
struct TrafficLight { Light state = Light::Red; friend bool operator==(const TrafficLight&, const TrafficLight&) = default; };
struct StopSign { friend bool operator==(const StopSign&, const StopSign&) = default; };
struct FrontTaillight { bool on = false; friend bool operator==(const FrontTaillight&, const FrontTaillight&) = default; };
struct LaneCrossing { friend bool operator==(const LaneCrossing&, const LaneCrossing&) = default; };
struct NearCollision { double distance_m = 0.0; friend bool operator==(const NearCollision&, const NearCollision&) = default; };
struct Pedestrian { bool crossing = false; friend bool operator==(const Pedestrian&, const Pedestrian&) = default; };
}  // namespace vision_kind

using VisionKind =
    std::variant<vision_kind::EyeState, vision_kind::Yawn, vision_kind::HeadPose,
                 vision_kind::PhoneUse, vision_kind::Smoking, vision_kind::TrafficLight,
                 vision_kind::StopSign, vision_kind::FrontTaillight,
                 vision_kind::LaneCrossing, vision_kind::NearCollision,
                 vision_kind::Pedestrian>;

struct VisionEvent {
  double t = 0.0;
  Camera camera = Camera::Driver;
  VisionKind kind;
  friend bool operator==(const VisionEvent&, const VisionEvent&) = default;
};

/// Which camera is allowed to emit a given kind.
Camera camera_for(const VisionKind& kind);
std::string_view kind_name(const VisionKind& kind);
std::string_view to_string(vision_kind::Light light);

/// One clock anchor: unit receipt time paired with GPS time (both seconds
/// relative to the trip epoch).
struct ClockAnchor {
  double t_unit = 0.0;
  double t_gps = 0.0;
};

}  // namespace drivesense
