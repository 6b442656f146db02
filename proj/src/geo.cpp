#include "drivesense/geo.hpp"

#include <algorithm>

namespace drivesense {

double haversine(LatLon a, LatLon b) {
  const double phi1 = deg2rad(a.lat);
  const double phi2 = deg2rad(b.lat);
  const double dphi = phi2 - phi1;
  const double dlambda = deg2rad(b.lon - a.lon);
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

SegmentProjection project_on_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  SegmentProjection out;
  if (len2 <= 0.0) {
    out.distance = (p - a).norm();
    return out;
  }
  const Vec2 ap = p - a;
  out.t = std::clamp(ap.dot(ab) / len2, 0.0, 1.0);
  const Vec2 foot = a + ab * out.t;
  out.distance = (p - foot).norm();
  out.signed_lateral = ab.cross(ap) / std::sqrt(len2);
  return out;
}

}  // namespace drivesense
