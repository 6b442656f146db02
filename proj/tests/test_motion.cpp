#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "drivesense/error.hpp"
#include "drivesense/geo.hpp"
#include "drivesense/motion.hpp"

using namespace drivesense;
using namespace drivesense::motion;

namespace {

// Rows of a rotation matrix taking vehicle-frame vectors to the device frame.
struct Rot {
  Vec3 r0, r1, r2;
  Vec3 apply(const Vec3& v) const { return {r0.dot(v), r1.dot(v), r2.dot(v)}; }
};

Rot rotation(double roll_deg, double pitch_deg, double yaw_deg) {
  const double a = deg2rad(roll_deg), b = deg2rad(pitch_deg), c = deg2rad(yaw_deg);
  const double ca = std::cos(a), sa = std::sin(a), cb = std::cos(b), sb = std::sin(b), cc = std::cos(c),
               sc = std::sin(c);
  // Rz(c) * Ry(b) * Rx(a)
  return {{cc * cb, cc * sb * sa - sc * ca, cc * sb * ca + sc * sa},
          {sc * cb, sc * sb * sa + cc * ca, sc * sb * ca - cc * sa},
          {-sb, cb * sa, cb * ca}};
}

std::vector<ImuSample> constant_imu(Vec3 accel, double seconds, double hz = 100.0) {
  std::vector<ImuSample> s;
  for (int i = 0; i < static_cast<int>(seconds * hz); ++i) s.push_back({i / hz, accel, {}, {20, 0, 40}});
  return s;
}

std::vector<VehicleFrameAccel> long_profile(double seconds, auto a_long_of_t, double hz = 100.0) {
  std::vector<VehicleFrameAccel> v;
  for (int i = 0; i < static_cast<int>(seconds * hz); ++i) {
    const double t = i / hz;
    v.push_back({t, a_long_of_t(t), 0.0, 0.0, 0.0});
  }
  return v;
}

}  // namespace

TEST_CASE("stationary gravity is removed exactly") {
  for (double gz : {9.81, -9.81}) {
    const auto out = gravity_align(constant_imu({0, 0, gz}, 10.0));
    for (const auto& s : out) {
      REQUIRE(std::fabs(s.a_long) < 1e-9);
      REQUIRE(std::fabs(s.a_lat) < 1e-9);
      REQUIRE(std::fabs(s.a_vert) < 1e-9);
    }
  }
}

TEST_CASE("too little data means no quiescent period") {
  try {
    gravity_align(constant_imu({0, 0, 9.81}, 3.0));
    FAIL("expected NoQuiescentPeriod");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoQuiescentPeriod);
  }
  auto spinning = constant_imu({0, 0, 9.81}, 20.0);
  for (auto& s : spinning) s.gyro = {0, 0, 0.5};
  CHECK_THROWS_AS(gravity_align(spinning), Error);
}

TEST_CASE("forward axis is recovered from speed changes") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::uniform_real_distribution<double> ang(-8, 8), yaw(-180, 180);
  for (int trial = 0; trial < 20; ++trial) {
    const Rot R = rotation(ang(rng), ang(rng), yaw(rng));
    // Alternating accelerate / cruise / brake cycles.
    auto a_of = [](double t) {
      const double ph = std::fmod(t, 40.0);
      if (ph < 10.0) return 0.0;
      if (ph < 18.0) return 1.2;
      if (ph < 28.0) return 0.0;
      if (ph < 36.0) return -1.2;
      return 0.0;
    };
    std::vector<ImuSample> imu;
    std::vector<SpeedSample> speed;
    double v = 5.0;
    for (int i = 0; i < 24000; ++i) {
      const double t = i / 100.0;
      const double a = a_of(t);
      const Vec3 vehicle{a + noise(rng), noise(rng), 9.81 + noise(rng)};
      imu.push_back({t, R.apply(vehicle), {noise(rng) * 0.1, noise(rng) * 0.1, noise(rng) * 0.1}, {}});
      if (i % 10 == 0) speed.push_back({t, std::round(v * 3.6) / 3.6});  // 1 km/h quantization
      v += a / 100.0;
    }
    const Alignment al = estimate_alignment(imu, speed);
    CHECK(al.forward_from_speed);
    const Vec3 truth = R.apply({1, 0, 0});
    const double err = rad2deg(std::acos(std::clamp(al.forward.dot(truth), -1.0, 1.0)));
    CHECK(err < 5.0);
    const Vec3 up = R.apply({0, 0, 1});
    CHECK(al.up.dot(up) > std::cos(deg2rad(1.0)));
  }
}

TEST_CASE("mounting yaw hint orients forward without speed") {
  const Rot R = rotation(0, 0, 30);
  std::vector<ImuSample> imu = constant_imu(R.apply({0, 0, 9.81}), 10.0);
  MountingHints h;
  h.mounting_yaw_deg = -30.0;  // device x sits 30 degrees clockwise of vehicle forward
  const Alignment al = estimate_alignment(imu, {}, h);
  CHECK_FALSE(al.forward_from_speed);
  CHECK(al.forward.dot(R.apply({1, 0, 0})) == doctest::Approx(1.0));
}

TEST_CASE("vertical channel is zero-mean for rotated gravity plus noise") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> ang(-180, 180);
  std::normal_distribution<double> noise(0.0, 0.3);
  for (int trial = 0; trial < 30; ++trial) {
    const Rot R = rotation(ang(rng), ang(rng) / 2.0, ang(rng));
    std::vector<ImuSample> imu;
    for (int i = 0; i < 3000; ++i) {
      imu.push_back({i / 100.0, R.apply(Vec3{noise(rng), noise(rng), 9.81 + noise(rng)}), {}, {}});
    }
    const auto out = gravity_align(imu);
    double mean = 0.0;
    for (const auto& s : out) mean += s.a_vert;
    mean /= static_cast<double>(out.size());
    CHECK(std::fabs(mean) < 0.05);
  }
}

TEST_CASE("sustained braking is one harsh brake") {
  const auto v = long_profile(10.0, [](double t) { return (t >= 3.0 && t < 4.0) ? -4.0 : 0.0; });
  const auto ev = detect_harsh_events(v);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].kind == MotionKind::HarshBrake);
  CHECK(ev[0].peak == -4.0);
  CHECK(ev[0].duration_s == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(ev[0].t_start == doctest::Approx(3.0));
  CHECK(detect_harsh_events(long_profile(10.0, [](double) { return 0.0; })).empty());
}

TEST_CASE("harsh accel and cornering, short blips ignored, nearby excursions merge") {
  auto v = long_profile(30.0, [](double t) {
    if (t >= 2.0 && t < 2.1) return 5.0;  // 0.1 s blip
    if (t >= 5.0 && t < 6.0) return 3.5;
    if (t >= 6.5 && t < 7.0) return 3.5;  // 0.5 s later: merges
    return 0.0;
  });
  for (auto& s : v) {
    if (s.t >= 20.0 && s.t < 21.0) s.a_lat = -4.0;
  }
  const auto ev = detect_harsh_events(v);
  REQUIRE(ev.size() == 2);
  CHECK(ev[0].kind == MotionKind::HarshAccel);
  CHECK(ev[0].t_start == doctest::Approx(5.0));
  CHECK(ev[0].t_end == doctest::Approx(7.0));
  CHECK(ev[1].kind == MotionKind::HarshCorner);
  CHECK(ev[1].peak == -4.0);
}

TEST_CASE("hysteresis keeps a noisy boundary as one event") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise(0.0, 0.2);
  const auto v = long_profile(20.0, [&](double t) { return (t >= 5.0 && t < 8.0 ? -3.1 : 0.0) + noise(rng); });
  const auto ev = detect_harsh_events(v);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].t_start == doctest::Approx(5.0).epsilon(0.05));
}

TEST_CASE("harsh detection properties over random signals") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> step(0.0, 0.6);
  std::uniform_real_distribution<double> md(0.05, 2.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<VehicleFrameAccel> v;
    double a = 0.0, l = 0.0;
    for (int i = 0; i < 3000; ++i) {
      a = 0.95 * a + step(rng);
      l = 0.95 * l + step(rng);
      v.push_back({i * 0.01, a, l, 0.0, 0.0});
    }
    HarshThresholds th;
    th.min_duration_s = md(rng);
    const auto ev = detect_harsh_events(v, th);
    HarshThresholds th2 = th;
    th2.min_duration_s *= 2.0;
    REQUIRE(detect_harsh_events(v, th2).size() <= ev.size());
    for (std::size_t i = 0; i < ev.size(); ++i) {
      REQUIRE(ev[i].t_end > ev[i].t_start);
      REQUIRE(ev[i].t_start >= v.front().t);
      REQUIRE(ev[i].t_end <= v.back().t);
      const double thr = ev[i].kind == MotionKind::HarshCorner ? 3.5 : 3.0;
      REQUIRE(std::fabs(ev[i].peak) >= thr);
      for (std::size_t j = i + 1; j < ev.size(); ++j) {
        if (ev[j].kind != ev[i].kind) continue;
        REQUIRE((ev[j].t_start >= ev[i].t_end || ev[i].t_start >= ev[j].t_end));
      }
    }
  }
}

TEST_CASE("potholes") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<VehicleFrameAccel> v;
  for (int i = 0; i < 6000; ++i) v.push_back({i * 0.01, 0, 0, noise(rng), 0});

  SUBCASE("smooth sinusoid below threshold") {
    auto s = v;
    for (auto& x : s) x.a_vert += 1.0 * std::sin(2 * std::numbers::pi * 0.7 * x.t);
    CHECK(detect_potholes(s).empty());
  }
  SUBCASE("single impulse") {
    auto s = v;
    s[3000].a_vert += 20.0;
    const auto ev = detect_potholes(s);
    REQUIRE(ev.size() == 1);
    CHECK(ev[0].kind == MotionKind::Pothole);
    CHECK(ev[0].t_start <= 30.0);
    CHECK(ev[0].t_end >= 30.0);
    CHECK(ev[0].peak > 2.0);
  }
  SUBCASE("adding a constant changes nothing") {
    auto s = v;
    s[1234].a_vert += 25.0;
    s[4321].a_vert -= 18.0;
    auto shifted = s;
    for (auto& x : shifted) x.a_vert += 3.7;
    const auto a = detect_potholes(s);
    const auto b = detect_potholes(shifted);
    REQUIRE(a.size() == 2);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].t_start == b[i].t_start);
      CHECK(a[i].t_end == b[i].t_end);
      CHECK(a[i].peak == doctest::Approx(b[i].peak).epsilon(1e-9));
    }
  }
}

namespace {

std::vector<GnssFix> meridian_track(double mps, double seconds, double hz = 10.0) {
  std::vector<GnssFix> out;
  for (int i = 0; i <= static_cast<int>(seconds * hz); ++i) {
    GnssFix f;
    f.t = i / hz;
    f.quality = FixQuality::Gps;
    f.position = LatLon{40.0 + rad2deg(mps * f.t / kEarthRadiusM), -80.0};
    out.push_back(f);
  }
  return out;
}

std::vector<SpeedSample> constant_speed(double kph, double seconds, double hz = 10.0) {
  std::vector<SpeedSample> out;
  for (int i = 0; i <= static_cast<int>(seconds * hz); ++i) out.push_back({i / hz, kph / 3.6});
  return out;
}

}  // namespace

TEST_CASE("speed consistency") {
  const auto gnss = meridian_track(50.0 / 3.6, 60.0);
  const auto same = speed_consistency(constant_speed(50.0, 60.0), gnss);
  CHECK(same.rms_kph < 1e-6);
  CHECK(same.flagged.empty());

  const auto fast = meridian_track(70.0 / 3.6, 60.0);
  const auto diff = speed_consistency(constant_speed(50.0, 60.0), fast);
  CHECK(diff.rms_kph == doctest::Approx(20.0).epsilon(1e-3));
  REQUIRE(diff.flagged.size() == 1);
  CHECK(diff.flagged[0].t_start < 0.1);
  CHECK(diff.flagged[0].t_end > 59.9);

  std::vector<SpeedSample> later = constant_speed(50.0, 10.0);
  for (auto& s : later) s.t += 1000.0;
  CHECK_THROWS_AS(speed_consistency(later, gnss), Error);
}

TEST_CASE("motion events serialize as JSON lines") {
  const MotionEvent e{MotionKind::HarshBrake, 1.0, 2.25, -4.0, 1.25, 1.5};
  CHECK(to_json_line(e) ==
        R"({"kind":"harsh_brake","t_start":1.000,"t_end":2.250,"peak":-4.000,"duration_s":1.250,"t_peak":1.500})");
  CHECK(motion_kind_from_string("pothole") == MotionKind::Pothole);
}

TEST_CASE("turn segments from yaw rate") {
  std::vector<VehicleFrameAccel> a;
  for (int i = 0; i < 1000; ++i) {
    const double t = i * 0.02;
    VehicleFrameAccel s;
    s.t = t;
    if (t >= 5.0 && t < 7.8) s.yaw_rate = 0.561;     // left turn
    if (t >= 12.0 && t < 14.0) s.yaw_rate = -0.785;  // right turn
    if (t >= 17.0 && t < 17.2) s.yaw_rate = 0.9;     // jolt, too short
    a.push_back(s);
  }
  const auto turns = detect_turns(a);
  REQUIRE(turns.size() == 2);
  CHECK(turns[0].t_mid == doctest::Approx(6.4).epsilon(1e-3));
  CHECK(turns[0].heading_change_rad == doctest::Approx(0.561 * 2.8).epsilon(0.02));
  CHECK(turns[1].t_mid == doctest::Approx(13.0).epsilon(1e-3));
  CHECK(turns[1].heading_change_rad < 0.0);
}
