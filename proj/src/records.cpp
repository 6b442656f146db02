#include "drivesense/records.hpp"

#include <cmath>
#include <stdexcept>

#include "drivesense/error.hpp"

namespace drivesense {

std::string_view to_string(FixQuality q) {
  switch (q) {
    case FixQuality::NoFix: return "no_fix";
    case FixQuality::Gps: return "gps";
    case FixQuality::Dgps: return "dgps";
    case FixQuality::RtkFloat: return "rtk_float";
    case FixQuality::RtkFixed: return "rtk_fixed";
  }
  return "no_fix";
}

FixQuality fix_quality_from_string(std::string_view s) {
  if (s == "no_fix") return FixQuality::NoFix;
  if (s == "gps") return FixQuality::Gps;
  if (s == "dgps") return FixQuality::Dgps;
  if (s == "rtk_float") return FixQuality::RtkFloat;
  if (s == "rtk_fixed") return FixQuality::RtkFixed;
  throw Error(ErrorCode::MalformedField, "fix quality '" + std::string(s) + "'");
}

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

namespace {
struct CameraOf {
  Camera operator()(const vision_kind::EyeState&) const { return Camera::Driver; }
  Camera operator()(const vision_kind::Yawn&) const { return Camera::Driver; }
  Camera operator()(const vision_kind::HeadPose&) const { return Camera::Driver; }
  Camera operator()(const vision_kind::PhoneUse&) const { return Camera::Driver; }
  Camera operator()(const vision_kind::Smoking&) const { return Camera::Driver; }
  Camera operator()(const auto&) const { return Camera::Front; }
};

struct NameOf {
  std::string_view operator()(const vision_kind::EyeState&) const { return "eye_state"; }
  std::string_view operator()(const vision_kind::Yawn&) const { return "yawn"; }
  std::string_view operator()(const vision_kind::HeadPose&) const { return "head_pose"; }
  std::string_view operator()(const vision_kind::PhoneUse&) const { return "phone_use"; }
  std::string_view operator()(const vision_kind::Smoking&) const { return "smoking"; }
  std::string_view operator()(const vision_kind::TrafficLight&) const { return "traffic_light"; }
  std::string_view operator()(const vision_kind::StopSign&) const { return "stop_sign"; }
  std::string_view operator()(const vision_kind::FrontTaillight&) const { return "front_taillight"; }
  std::string_view operator()(const vision_kind::LaneCrossing&) const { return "lane_crossing"; }
  std::string_view operator()(const vision_kind::NearCollision&) const { return "near_collision"; }
  std::string_view operator()(const vision_kind::Pedestrian&) const { return "pedestrian"; }
};
}  // namespace

Camera camera_for(const VisionKind& kind) { return std::visit(CameraOf{}, kind); }
std::string_view kind_name(const VisionKind& kind) { return std::visit(NameOf{}, kind); }

std::string_view to_string(vision_kind::Light light) {
  switch (light) {
    case vision_kind::Light::Red: return "red";
    case vision_kind::Light::Yellow: return "yellow";
    case vision_kind::Light::Green: return "green";
  }
  return "red";
}

}  // namespace drivesense
