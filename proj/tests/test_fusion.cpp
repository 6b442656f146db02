#include <array>
#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "drivesense/calendar.hpp"
#include "drivesense/error.hpp"
#include "drivesense/fusion.hpp"

using namespace drivesense;
using namespace drivesense::fusion;
using motion::SpeedSample;
using vision::EpisodeKind;
using vision::EpisodicEvent;
using vision_kind::Light;

namespace {

const LocalProjection kProj(LatLon{40.0, -83.0});

GnssFix gga(double t, Vec2 xy) {
  GnssFix f;
  f.t = t;
  f.position = kProj.to_latlon(xy);
  f.quality = FixQuality::Gps;
  return f;
}

// Drives east at the given speed profile; fixes at 1 Hz, speed at 10 Hz.
struct Drive {
  std::vector<GnssFix> fixes;
  std::vector<SpeedSample> speed;
};

Drive drive(double duration_s, const std::function<double(double)>& v_of_t) {
  Drive d;
  double x = 0.0;
  const double dt = 0.1;
  for (int i = 0; i * dt <= duration_s + 1e-9; ++i) {
    const double t = i * dt;
    const double v = v_of_t(t);
    d.speed.push_back({t, v});
    if (i % 10 == 0) d.fixes.push_back(gga(t, {x, 0.0}));
    x += v * dt;
  }
  return d;
}

EpisodicEvent light_encounter(std::vector<vision::LightRun> runs) {
  EpisodicEvent e;
  e.kind = EpisodeKind::TrafficLightEncounter;
  e.t_start = runs.front().t_first;
  e.t_end = runs.back().t_last;
  e.light_runs = std::move(runs);
  return e;
}

EpisodicEvent stop_encounter(double t0, double t1) {
  EpisodicEvent e;
  e.kind = EpisodeKind::StopSignEncounter;
  e.t_start = t0;
  e.t_end = t1;
  return e;
}

// a_long at 100 Hz: zero, then a linear ramp that crosses -1 at t_cross.
std::vector<motion::VehicleFrameAccel> brake_at(double t_cross, double t_end) {
  std::vector<motion::VehicleFrameAccel> out;
  for (int i = 0; i * 0.01 <= t_end; ++i) {
    const double t = i * 0.01;
    motion::VehicleFrameAccel a;
    a.t = t;
    a.a_long = t < t_cross - 0.5 ? 0.0 : -2.0 * (t - (t_cross - 0.5));
    out.push_back(a);
  }
  return out;
}

std::vector<ObdReading> pedal(std::vector<std::pair<double, double>> pts) {
  std::vector<ObdReading> out;
  for (auto [t, v] : pts) out.push_back({t, 0x11, ObdQuantity::PedalPct, v});
  return out;
}

}  // namespace

TEST_CASE("single steady drive is one trip of the driven length") {
  const auto d = drive(600.0, [](double) { return 10.0; });
  const auto trips = segment_trips(d.fixes, d.speed);
  REQUIRE(trips.size() == 1);
  CHECK(trips[0].t_start == doctest::Approx(0.0));
  CHECK(trips[0].t_end == doctest::Approx(600.0));
  CHECK(trips[0].distance_m == doctest::Approx(6000.0).epsilon(0.01));
}

TEST_CASE("a ten minute stop splits trips, a two minute stop does not") {
  auto split = drive(1600.0, [](double t) { return (t < 500.0 || t >= 1100.0) ? 10.0 : 0.0; });
  auto trips = segment_trips(split.fixes, split.speed);
  REQUIRE(trips.size() == 2);
  CHECK(trips[0].t_end == doctest::Approx(500.0));
  CHECK(trips[1].t_start == doctest::Approx(1100.0));
  CHECK(trips[0].distance_m == doctest::Approx(5000.0).epsilon(0.01));

  auto pause = drive(1120.0, [](double t) { return (t < 500.0 || t >= 620.0) ? 10.0 : 0.0; });
  CHECK(segment_trips(pause.fixes, pause.speed).size() == 1);
}

TEST_CASE("no movement means no trips, brief creeping too") {
  const auto still = drive(900.0, [](double) { return 0.0; });
  CHECK(segment_trips(still.fixes, still.speed).empty());
  const auto creep = drive(900.0, [](double t) { return std::fmod(t, 20.0) < 5.0 ? 2.0 : 0.0; });
  CHECK(segment_trips(creep.fixes, creep.speed).empty());
}

TEST_CASE("event kind and stimulus names round trip") {
  for (int k = 0; k <= static_cast<int>(EventKind::LaneDeviation); ++k) {
    const auto kind = static_cast<EventKind>(k);
    CHECK(event_kind_from_string(to_string(kind)) == kind);
  }
  for (auto s : kAllStimuli) CHECK(stimulus_kind_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(event_kind_from_string("wheelie"), Error);
}

TEST_CASE("detected event json round trip") {
  DetectedEvent e;
  e.kind = EventKind::HarshBrake;
  e.t = 101.25;
  e.duration_s = 1.5;
  e.location = LatLon{40.5, -83.25};
  e.severity = 2;
  e.value = -4.125;
  e.gaze_offroad = true;
  CHECK(parse_detected_event(to_json_line(e)) == e);

  DetectedEvent r;
  r.kind = EventKind::ReactionSample;
  r.t = 10.0;
  r.value = 1.2;
  r.stimulus = StimulusKind::LightToRed;
  const auto back = parse_detected_event(to_json_line(r));
  CHECK(back.stimulus == StimulusKind::LightToRed);
  CHECK_FALSE(back.location.has_value());
  CHECK_THROWS_AS(parse_detected_event("{\"kind\":\"harsh_brake\"}"), Error);
}

TEST_CASE("locate picks the nearest positioned fix") {
  std::vector<GnssFix> fixes{gga(0.0, {0, 0}), gga(1.0, {10, 0}), gga(2.0, {20, 0})};
  fixes[1].position.reset();
  const auto p = locate(fixes, 1.2);
  REQUIRE(p);
  CHECK(haversine(*p, kProj.to_latlon({20, 0})) < 1e-6);
  CHECK_FALSE(locate(fixes, 10.0).has_value());
}

TEST_CASE("light turning red then a brake gives the latency") {
  const auto enc = light_encounter({{Light::Green, 5.0, 9.9}, {Light::Red, 10.0, 20.0}});
  const auto stimuli = collect_stimuli(std::span(&enc, 1), {}, {});
  REQUIRE(stimuli.size() == 1);
  CHECK(stimuli[0].kind == StimulusKind::LightToRed);
  CHECK(stimuli[0].t == 10.0);

  const auto resp = response_channels(brake_at(11.2, 20.0), {});
  const auto r = reaction_time(stimuli, resp);
  REQUIRE(r.samples.size() == 1);
  CHECK(r.samples[0].latency_s == doctest::Approx(1.2).epsilon(1e-6));
  CHECK(r.missed.empty());
}

TEST_CASE("taillight without response is a missed stimulus") {
  std::vector<VisionEvent> ve;
  ve.push_back({49.9, Camera::Front, vision_kind::FrontTaillight{false}});
  ve.push_back({50.0, Camera::Front, vision_kind::FrontTaillight{true}});
  ve.push_back({50.1, Camera::Front, vision_kind::FrontTaillight{true}});
  const auto stimuli = collect_stimuli({}, ve, {});
  REQUIRE(stimuli.size() == 1);
  CHECK(stimuli[0].t == 50.0);
  const auto r = reaction_time(stimuli, response_channels(brake_at(58.0, 60.0), {}));
  CHECK(r.samples.empty());
  REQUIRE(r.missed.size() == 1);
  CHECK(r.missed[0].kind == StimulusKind::TaillightOn);
}

TEST_CASE("go stimulus takes the pedal press, stop stimulus the release") {
  const auto enc = light_encounter({{Light::Red, 20.0, 29.9}, {Light::Green, 30.0, 35.0}});
  const auto stimuli = collect_stimuli(std::span(&enc, 1), {}, {});
  REQUIRE(stimuli.size() == 1);
  CHECK(stimuli[0].kind == StimulusKind::LightToGreen);
  const auto obd = pedal({{30.0, 0.0}, {30.5, 0.0}, {31.0, 6.0}, {40.0, 20.0}, {41.0, 0.0}});
  const auto resp = response_channels({}, obd);
  REQUIRE(resp.pedal_presses.size() == 1);
  CHECK(resp.pedal_presses[0] == doctest::Approx(30.75));
  REQUIRE(resp.pedal_releases.size() == 1);
  CHECK(resp.pedal_releases[0] == doctest::Approx(40.85));
  const auto r = reaction_time(stimuli, resp);
  REQUIRE(r.samples.size() == 1);
  CHECK(r.samples[0].latency_s == doctest::Approx(0.75));

  const std::vector<Stimulus> stop{{StimulusKind::TaillightOn, 39.0}};
  const auto r2 = reaction_time(stop, resp);
  REQUIRE(r2.samples.size() == 1);
  CHECK(r2.samples[0].latency_s == doctest::Approx(1.85));
}

TEST_CASE("reaction latencies stay inside the window") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 300.0);
  for (int trial = 0; trial < 200; ++trial) {
    ResponseChannels resp;
    std::vector<Stimulus> stimuli;
    for (int i = 0; i < 20; ++i) {
      resp.brake_onsets.push_back(u(rng));
      resp.pedal_releases.push_back(u(rng));
      resp.pedal_presses.push_back(u(rng));
      stimuli.push_back({kAllStimuli[rng() % 4], u(rng)});
    }
    std::sort(resp.brake_onsets.begin(), resp.brake_onsets.end());
    std::sort(resp.pedal_releases.begin(), resp.pedal_releases.end());
    std::sort(resp.pedal_presses.begin(), resp.pedal_presses.end());
    const auto r = reaction_time(stimuli, resp);
    CHECK(r.samples.size() + r.missed.size() == stimuli.size());
    for (const auto& s : r.samples) {
      CHECK(s.latency_s > 0.0);
      CHECK(s.latency_s <= 5.0);
    }
  }
}

TEST_CASE("pothole strikes are stimuli at the peak") {
  motion::MotionEvent p;
  p.kind = motion::MotionKind::Pothole;
  p.t_start = 12.0;
  p.t_peak = 12.1;
  const auto s = collect_stimuli({}, {}, std::span(&p, 1));
  REQUIRE(s.size() == 1);
  CHECK(s[0].t == 12.1);
}

TEST_CASE("red light run needs the vehicle to advance") {
  const auto enc = light_encounter({{Light::Red, 10.0, 15.0}});
  const auto still = drive(30.0, [](double) { return 0.0; });
  CHECK(signal_compliance(std::span(&enc, 1), still.speed).empty());
  const auto moving = drive(30.0, [](double) { return 10.0; });
  const auto ev = signal_compliance(std::span(&enc, 1), moving.speed);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].kind == EventKind::RedLightRun);
  CHECK(ev[0].t == 15.0);
  CHECK(ev[0].value == doctest::Approx(30.0).epsilon(1e-6));

  // Stopping at the line then leaving on green is compliant.
  const auto ok = light_encounter({{Light::Red, 10.0, 15.0}, {Light::Green, 15.1, 18.0}});
  CHECK(signal_compliance(std::span(&ok, 1), moving.speed).empty());
}

TEST_CASE("stop sign compliance by minimum speed") {
  const auto enc = stop_encounter(10.0, 14.0);
  const auto halt = drive(30.0, [](double t) { return std::fabs(t - 15.0) < 1.0 ? 0.5 / 3.6 : 8.0; });
  CHECK(signal_compliance(std::span(&enc, 1), halt.speed).empty());
  const auto roll = drive(30.0, [](double) { return 25.0 / 3.6; });
  const auto ev = signal_compliance(std::span(&enc, 1), roll.speed);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].kind == EventKind::StopSignViolation);
  CHECK(ev[0].t == 14.0);
  CHECK(ev[0].value == doctest::Approx(25.0));
}

TEST_CASE("advance matches constant-speed distance") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 25.0);
  for (int i = 0; i < 100; ++i) {
    const double v = u(rng);
    const auto d = drive(60.0, [v](double) { return v; });
    const double t0 = u(rng), t1 = t0 + u(rng);
    CHECK(advance_m(d.speed, t0, t1) == doctest::Approx(v * (t1 - t0)).epsilon(1e-9));
  }
}

TEST_CASE("harsh brakes after looking away are gaze-offroad") {
  motion::MotionEvent b;
  b.kind = motion::MotionKind::HarshBrake;
  b.t_start = 100.0;
  EpisodicEvent near, far, yawn;
  near.kind = EpisodeKind::DistractionEpisode;
  near.t_start = 95.0;
  near.t_end = 98.0;
  far = near;
  far.t_end = 90.0;
  yawn.kind = EpisodeKind::YawnEpisode;
  yawn.t_start = 99.0;
  yawn.t_end = 100.0;

  std::vector<EpisodicEvent> eps{near};
  CHECK(braking_pattern(std::span(&b, 1), eps)[0].gaze_offroad);
  eps = {far, yawn};
  CHECK_FALSE(braking_pattern(std::span(&b, 1), eps)[0].gaze_offroad);
  EpisodicEvent closed = near;
  closed.kind = EpisodeKind::EyesClosedEpisode;
  closed.t_start = 99.0;
  closed.t_end = 101.0;
  eps = {closed};
  CHECK(braking_pattern(std::span(&b, 1), eps)[0].gaze_offroad);
}

TEST_CASE("night distance follows the local clock") {
  const auto d = drive(600.0, [](double) { return 10.0; });
  const TripSpan trip{0.0, 600.0, 0.0};
  const std::int64_t two_am = calendar::parse_iso8601("2024-03-05T02:00:00Z");
  const auto st = travel_pattern(trip, d.fixes, two_am, nullptr, nullptr, {});
  CHECK(st.distance_m == doctest::Approx(6000.0).epsilon(0.01));
  CHECK(st.night_m == doctest::Approx(st.distance_m));
  CHECK(st.highway_m == 0.0);

  const std::int64_t noon = calendar::parse_iso8601("2024-03-05T12:00:00Z");
  CHECK(travel_pattern(trip, d.fixes, noon, nullptr, nullptr, {}).night_m == 0.0);
  TravelParams east;
  east.utc_offset_h = 10.0;  // 22:00 local
  CHECK(travel_pattern(trip, d.fixes, noon, nullptr, nullptr, {}, east).night_m ==
        doctest::Approx(st.distance_m));
}

TEST_CASE("highway distance uses matched edges") {
  const net::RoadNetwork network(
      {{1, kProj.to_latlon({0, 0})}, {2, kProj.to_latlon({3000, 0})}, {3, kProj.to_latlon({6000, 0})}},
      {{10, 1, 2, {kProj.to_latlon({0, 0}), kProj.to_latlon({3000, 0})}, 0.0, net::RoadClass::Local, 40.0},
       {11, 2, 3, {kProj.to_latlon({3000, 0}), kProj.to_latlon({6000, 0})}, 0.0, net::RoadClass::Highway, 100.0}});
  const auto d = drive(600.0, [](double) { return 10.0; });
  net::MatchedPath m;
  for (std::size_t i = 0; i < d.fixes.size(); ++i) {
    m.assignments.push_back({i, net::EdgeId{d.fixes[i].t <= 300.0 ? 10 : 11}, 0.0, 0.0, 0});
  }
  const auto st = travel_pattern({0.0, 600.0, 0.0}, d.fixes, 0, &m, &network, {});
  CHECK(st.highway_m == doctest::Approx(3000.0).epsilon(0.01));
}

TEST_CASE("severe weather distance against a per-step oracle") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::int64_t epoch = calendar::parse_iso8601("2024-06-01T08:00:00Z");
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<GnssFix> fixes;
    Vec2 p{0, 0};
    for (int i = 0; i <= 300; ++i) {
      fixes.push_back(gga(i, p));
      p = p + Vec2{20.0 * u(rng) - 5.0, 20.0 * u(rng) - 10.0};
    }
    std::vector<WeatherRecord> recs;
    for (int r = 0; r < 3; ++r) {
      WeatherRecord w;
      w.t_start = epoch + static_cast<std::int64_t>(300 * u(rng));
      w.t_end = w.t_start + 1 + static_cast<std::int64_t>(200 * u(rng));
      const LatLon a = kProj.to_latlon({-500 + 2500 * u(rng), -1500 + 2000 * u(rng)});
      const LatLon b = kProj.to_latlon({-500 + 2500 * u(rng), -1500 + 2000 * u(rng)});
      w.min_lat = std::min(a.lat, b.lat);
      w.max_lat = std::max(a.lat, b.lat);
      w.min_lon = std::min(a.lon, b.lon);
      w.max_lon = std::max(a.lon, b.lon);
      w.condition = std::array{Weather::Rain, Weather::SevereRain, Weather::Fog}[rng() % 3];
      recs.push_back(w);
    }
    double oracle = 0.0;
    for (std::size_t i = 1; i < fixes.size(); ++i) {
      const LatLon a = *fixes[i - 1].position, b = *fixes[i].position;
      const LatLon mid{(a.lat + b.lat) / 2, (a.lon + b.lon) / 2};
      const double when = static_cast<double>(epoch) + (fixes[i - 1].t + fixes[i].t) / 2;
      bool severe = false;
      for (const auto& w : recs) {
        severe |= w.condition != Weather::Rain && when >= static_cast<double>(w.t_start) &&
                  when < static_cast<double>(w.t_end) && mid.lat >= w.min_lat && mid.lat <= w.max_lat &&
                  mid.lon >= w.min_lon && mid.lon <= w.max_lon;
      }
      if (severe) oracle += haversine(a, b);
    }
    const auto st = travel_pattern({0.0, 300.0, 0.0}, fixes, epoch, nullptr, nullptr, recs);
    CHECK(st.severe_weather_m == doctest::Approx(oracle).epsilon(1e-9));
    CHECK(st.severe_weather_m <= st.distance_m + 1e-9);
  }
}

TEST_CASE("weather json round trip and validation") {
  WeatherRecord w;
  w.t_start = calendar::parse_iso8601("2024-06-01T08:00:00Z");
  w.t_end = w.t_start + 3600;
  w.min_lat = 39.9;
  w.max_lat = 40.1;
  w.min_lon = -83.1;
  w.max_lon = -82.9;
  w.condition = Weather::Fog;
  const std::vector<WeatherRecord> v{w};
  CHECK(parse_weather(weather_to_json(v)) == v);
  CHECK_THROWS_AS(parse_weather("{\"records\":[{\"t_start\":\"2024-06-01T08:00:00Z\"}]}"), Error);
  CHECK_THROWS_AS(parse_weather(
                      "{\"records\":[{\"t_start\":\"2024-06-01T08:00:00Z\",\"t_end\":\"2024-06-01T08:00:00Z\","
                      "\"bbox\":[0,0,1,1],\"condition\":\"fog\"}]}"),
                  Error);
}

TEST_CASE("severity bands") {
  motion::MotionEvent e;
  e.kind = motion::MotionKind::HarshBrake;
  e.peak = -3.5;
  CHECK(severity_of_motion(e, {}) == 1);
  e.peak = -4.5;
  CHECK(severity_of_motion(e, {}) == 2);
  e.peak = -6.0;
  CHECK(severity_of_motion(e, {}) == 3);

  EpisodicEvent d;
  d.kind = EpisodeKind::DistractionEpisode;
  d.t_end = 3.0;
  CHECK(severity_of_episode(d) == 1);
  d.t_end = 9.0;
  CHECK(severity_of_episode(d) == 3);
  EpisodicEvent n;
  n.kind = EpisodeKind::NearCollisionEvent;
  n.min_distance_m = 2.0;
  CHECK(severity_of_episode(n) == 3);
}
