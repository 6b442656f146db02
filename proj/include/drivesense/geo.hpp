#pragma once

#include <cmath>
#include <numbers>

namespace drivesense {

inline constexpr double kEarthRadiusM = 6371000.0;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
  friend bool operator==(const LatLon&, const LatLon&) = default;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
};

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

/// Great-circle distance in meters.
double haversine(LatLon a, LatLon b);

/// Equirectangular local tangent plane anchored at an origin. Linear in
/// (lat, lon), so straight lat/lon segments stay straight in the plane.
class LocalProjection {
 public:
  LocalProjection() = default;
  explicit LocalProjection(LatLon origin)
      : origin_(origin), cos_lat_(std::cos(deg2rad(origin.lat))) {}

  Vec2 to_xy(LatLon p) const {
    return {deg2rad(p.lon - origin_.lon) * kEarthRadiusM * cos_lat_,
            deg2rad(p.lat - origin_.lat) * kEarthRadiusM};
  }
  LatLon to_latlon(Vec2 v) const {
    return {origin_.lat + rad2deg(v.y / kEarthRadiusM),
            origin_.lon + rad2deg(v.x / (kEarthRadiusM * cos_lat_))};
  }
  LatLon origin() const { return origin_; }

 private:
  LatLon origin_{};
  double cos_lat_ = 1.0;
};

struct SegmentProjection {
  double distance = 0.0;  // point to segment
  double t = 0.0;         // clamped parameter in [0,1]
  double signed_lateral = 0.0;  // + left of a->b
};

SegmentProjection project_on_segment(Vec2 p, Vec2 a, Vec2 b);

}  // namespace drivesense
