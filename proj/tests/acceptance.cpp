// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drivesense/error.hpp"
#include "drivesense/ingest.hpp"
#include "drivesense/map_match.hpp"
#include "drivesense/pipeline.hpp"
#include "drivesense/sim.hpp"
#include "drivesense/storage.hpp"
#include "drivesense/time_sync.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"
#include "two_week_driver.hpp"

using namespace drivesense;
namespace fs = std::filesystem;

namespace {

// ---- tolerances ---------------------------------------------------------------

constexpr int kSeeds = 10;
constexpr int kTripsPerSeed = 20;
constexpr double kMinPrecision = 0.9;
constexpr double kMinRecall = 0.9;
constexpr double kTimingTolS = 0.5;
constexpr double kMaxRuntimeS = 60.0;
constexpr double kMaxClockOffsetS = 5.0;

constexpr double kSyncOffsetRangeS = 10.0;
constexpr double kSyncDriftRangePpm = 50.0;
constexpr double kSyncTripS = 600.0;
constexpr double kSyncJitterS = 0.001;
constexpr double kSyncTolS = 0.010;

constexpr double kGpsSigmaM = 4.9;
constexpr double kRtkSigmaM = 0.03;
constexpr double kMinGpsAccuracy = 0.95;
constexpr double kMinRtkAccuracy = 0.99;

constexpr int kPathGraphs = 200;
constexpr int kMaxGraphNodes = 8;
constexpr int kIndexQueries = 1000;

constexpr int kRoundTrips = 10000;
constexpr int kBitFlipTrials = 10000;
constexpr int kObdPayloads = 256;

constexpr int kAlgebraTriples = 1000;

constexpr int kReportDays = 14;

struct Result {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

pipeline::RawTrip raw_of(const sim::TripStreams& s) {
  return {s.gnss_nmea, s.vision_nmea, s.imu_csv, s.obd_csv, s.vision_jsonl};
}

// Fleet summaries from criterion 1, reused by the algebra checks.
std::vector<std::vector<dbi::TripSummary>> g_fleets;

// ---- 1. end-to-end recovery ---------------------------------------------------

constexpr fusion::EventKind kScoredKinds[] = {fusion::EventKind::HarshBrake,  fusion::EventKind::Pothole,
                                              fusion::EventKind::Distraction, fusion::EventKind::RedLightRun,
                                              fusion::EventKind::GettingLost, fusion::EventKind::NearCollision};

struct KindScore {
  std::size_t tp = 0, detected = 0, truth = 0;
  double max_dt = 0.0;
};

// Greedy one-to-one pairing, closest first, within the timing tolerance.
void score(const std::vector<double>& truth, const std::vector<double>& det, KindScore& s) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (std::size_t j = 0; j < det.size(); ++j) {
      const double dt = std::fabs(truth[i] - det[j]);
      if (dt <= kTimingTolS) pairs.emplace_back(dt, i, j);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> ut(truth.size()), ud(det.size());
  for (const auto& [dt, i, j] : pairs) {
    if (ut[i] || ud[j]) continue;
    ut[i] = ud[j] = true;
    ++s.tp;
    s.max_dt = std::max(s.max_dt, dt);
  }
  s.truth += truth.size();
  s.detected += det.size();
}

std::vector<fusion::WeatherRecord> severe_weather(const net::RoadNetwork& net, std::int64_t from, std::int64_t to) {
  double lo_lat = 90, hi_lat = -90, lo_lon = 180, hi_lon = -180;
  for (const auto& n : net.nodes()) {
    lo_lat = std::min(lo_lat, n.pos.lat);
    hi_lat = std::max(hi_lat, n.pos.lat);
    lo_lon = std::min(lo_lon, n.pos.lon);
    hi_lon = std::max(hi_lon, n.pos.lon);
  }
  // Heavy rain over the western half of the grid.
  return {{from, to, lo_lat - 0.01, lo_lon - 0.01, hi_lat + 0.01, (lo_lon + hi_lon) / 2.0,
           fusion::Weather::SevereRain}};
}

Result end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  std::map<fusion::EventKind, KindScore> scores;
  std::size_t under_injected = 0, failed_trips = 0;
  std::string first_failure;
  const config::Config cfg;
  const std::int64_t start = calendar::parse_iso8601("2026-03-02T00:00:00Z");
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const auto net = sim::gen_network({10, 10, 200.0, {4}, static_cast<std::uint64_t>(seed)});
    const net::SpatialIndex index(net);
    const auto weather = severe_weather(net, start, start + 30 * 86400);
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    std::vector<dbi::TripSummary> fleet;
    for (int i = 0; i < kTripsPerSeed; ++i) {
      sim::RandomScriptOptions opt;
      opt.trip_id = fmt("S%02dT%02d", seed, i);
      opt.driver_id = fmt("D%02d", seed);
      // Spread over days and the whole clock so night miles occur.
      opt.start_utc = start + i * 86400 + static_cast<std::int64_t>(rng() % 86400);
      opt.max_clock_offset_s = kMaxClockOffsetS;
      const auto script = sim::random_script(net, static_cast<std::uint64_t>(seed) * 1000 + i, opt);
      const auto streams = sim::synthesize(script, net);

      std::map<fusion::EventKind, std::vector<double>> truth, det;
      for (const auto& e : streams.truth.events) truth[e.kind].push_back(e.t);
      if (truth[fusion::EventKind::HarshBrake].size() < 3 || truth[fusion::EventKind::Pothole].size() < 2 ||
          truth[fusion::EventKind::Distraction].size() < 2 || truth[fusion::EventKind::RedLightRun].size() < 1 ||
          truth[fusion::EventKind::GettingLost].size() < 1 || truth[fusion::EventKind::NearCollision].size() < 2) {
        ++under_injected;
      }
      try {
        const auto r = pipeline::run_trip(raw_of(streams), {script.trip_id, script.driver_id}, net, index, weather, cfg);
        for (const auto& e : r.summary.events) det[e.kind].push_back(e.t);
        fleet.push_back(r.summary);
      } catch (const Error& e) {
        ++failed_trips;
        if (first_failure.empty()) first_failure = script.trip_id + ": " + e.what();
      }
      for (auto k : kScoredKinds) score(truth[k], det[k], scores[k]);
    }
    g_fleets.push_back(std::move(fleet));
  }
  const double runtime = seconds_since(t0);

  bool pass = under_injected == 0 && failed_trips == 0 && runtime < kMaxRuntimeS;
  std::string d;
  for (auto k : kScoredKinds) {
    const auto& s = scores[k];
    const double p = s.detected ? static_cast<double>(s.tp) / static_cast<double>(s.detected) : 0.0;
    const double r = s.truth ? static_cast<double>(s.tp) / static_cast<double>(s.truth) : 0.0;
    pass = pass && p >= kMinPrecision && r >= kMinRecall;
    d += fmt("%s P=%.3f R=%.3f (%zu/%zu/%zu, max|dt| %.2fs); ", std::string(fusion::to_string(k)).c_str(), p, r,
             s.tp, s.detected, s.truth, s.max_dt);
  }
  d += fmt("%d trips, %zu failed, %zu under-injected, runtime %.1fs", kSeeds * kTripsPerSeed, failed_trips,
           under_injected, runtime);
  if (!first_failure.empty()) d += "; first failure " + first_failure;
  return {pass, d};
}

// ---- 2. clock sync ------------------------------------------------------------

// Largest GPS-time error of the fitted mapping over the trip.
double mapping_error(const sync::ClockModel& truth, const sync::ClockModel& fit, double duration) {
  double worst = 0.0;
  for (double t = 0.0; t <= duration; t += 1.0) {
    worst = std::max(worst, std::fabs(sync::to_sync_time(fit, sync::to_unit_time(truth, t)) - t));
  }
  return worst;
}

Result clock_sync() {
  const auto net = sim::gen_network({10, 10, 200.0, {4}, 0});
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> off(-kSyncOffsetRangeS, kSyncOffsetRangeS);
  std::uniform_real_distribution<double> drift(-kSyncDriftRangePpm, kSyncDriftRangePpm);
  double worst_offset = 0.0, worst_map = 0.0, worst_drift = 0.0;
  int trials = 0;
  for (int i = 0; i < 24; ++i) {
    sim::RandomScriptOptions opt;
    opt.max_clock_offset_s = kSyncOffsetRangeS;
    auto script = sim::random_script(net, 500 + static_cast<std::uint64_t>(i), opt);
    // The corners of the parameter box first, then random draws.
    const double corners[4][2] = {{-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
    if (i < 4) {
      script.telemetry = {kSyncOffsetRangeS * corners[i][0], kSyncDriftRangePpm * corners[i][1]};
      script.vision = {-kSyncOffsetRangeS * corners[i][0], kSyncDriftRangePpm * corners[i][1]};
    } else {
      script.telemetry = {off(rng), drift(rng)};
      script.vision = {off(rng), drift(rng)};
    }
    script.noise.anchor_jitter_s = kSyncJitterS;
    // Stretch the final idle so the recording lasts ten minutes.
    const auto first = sim::synthesize(script, net);
    script.idle_end_s = std::max(script.idle_end_s, kSyncTripS - first.truth.t_stop);
    const auto streams = sim::synthesize(script, net);
    const auto in = pipeline::ingest(raw_of(streams), config::Config{});
    const auto fit = pipeline::estimate_clocks(in);
    const double duration = streams.truth.t_stop + script.idle_end_s;
    if (duration < kSyncTripS - 1.0) return {false, fmt("trip %d lasts only %.0fs", i, duration)};
    for (const auto& [truth, est] : {std::pair{streams.truth.telemetry, fit.telemetry},
                                     std::pair{streams.truth.vision, fit.vision}}) {
      worst_offset = std::max(worst_offset, std::fabs(est.offset_s - truth.offset_s));
      worst_drift = std::max(worst_drift, std::fabs(est.drift_ppm - truth.drift_ppm));
      worst_map = std::max(worst_map, mapping_error(truth, est, duration));
      ++trials;
    }
  }
  const bool pass = worst_offset <= kSyncTolS && worst_map <= kSyncTolS;
  return {pass, fmt("%d unit clocks, offsets +-%.0fs, drift +-%.0fppm, 10 min, 1 Hz anchors, 1 ms jitter: "
                    "max offset error %.3f ms, max mapped-time error %.3f ms, max drift error %.2f ppm",
                    trials, kSyncOffsetRangeS, kSyncDriftRangePpm, worst_offset * 1e3, worst_map * 1e3, worst_drift)};
}

// ---- 3. map matching ----------------------------------------------------------

double match_accuracy(const net::RoadNetwork& net, const net::SpatialIndex& idx, double sigma, FixQuality q,
                      std::uint64_t seed, std::size_t* n_fixes) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 10.0);
  std::size_t hit = 0, total = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto route = oracle::random_route(net, rng, 30);
    auto d = oracle::drive_route(net, route, 11.0, phase(rng));
    for (auto& f : d.fixes) {
      f.quality = q;
      const auto xy = net.projection().to_xy(*f.position);
      f.position = net.projection().to_latlon({xy.x + sigma * noise(rng), xy.y + sigma * noise(rng)});
    }
    const auto m = net::match_trajectory(d.fixes, idx);
    for (std::size_t i = 0; i < d.truth.size(); ++i) hit += m.assignments[i].edge_id == d.truth[i];
    total += d.truth.size();
  }
  *n_fixes = total;
  return static_cast<double>(hit) / static_cast<double>(total);
}

Result map_matching() {
  const auto net = sim::gen_network({10, 10, 200.0, {4}, 0});
  const net::SpatialIndex idx(net);
  std::size_t n_gps = 0, n_rtk = 0, n_clean = 0;
  const double gps = match_accuracy(net, idx, kGpsSigmaM, FixQuality::Gps, 31, &n_gps);
  const double rtk = match_accuracy(net, idx, kRtkSigmaM, FixQuality::RtkFixed, 32, &n_rtk);
  const double clean = match_accuracy(net, idx, 0.0, FixQuality::Gps, 33, &n_clean);
  const bool pass = gps >= kMinGpsAccuracy && rtk >= kMinRtkAccuracy && clean == 1.0;
  return {pass, fmt("10x10 grid, per-axis noise: sigma 4.9 m %.4f (%zu fixes), RTK 0.03 m %.4f (%zu), noiseless %.4f (%zu)",
                    gps, n_gps, rtk, n_rtk, clean, n_clean)};
}

// ---- 4. oracle equivalence ----------------------------------------------------

Result oracle_equivalence() {
  std::mt19937_64 rng(4242);
  std::size_t pairs = 0, path_mismatch = 0;
  for (int g = 0; g < kPathGraphs; ++g) {
    const int n = 2 + static_cast<int>(rng() % (kMaxGraphNodes - 1));
    const auto net = oracle::random_graph(rng, n, n + static_cast<int>(rng() % (2 * n)));
    for (const auto& a : net.nodes()) {
      for (const auto& b : net.nodes()) {
        const auto want = oracle::enumerate_paths(net, a.id, b.id);
        ++pairs;
        try {
          const auto got = net::shortest_path(net, a.id, b.id);
          if (!want.found || got.edges != want.edges) ++path_mismatch;
        } catch (const Error& e) {
          if (want.found || e.code() != ErrorCode::Unreachable) ++path_mismatch;
        }
      }
    }
  }

  std::size_t index_mismatch = 0;
  const auto grid = sim::gen_network({10, 10, 200.0, {4}, 3});
  const net::SpatialIndex idx(grid);
  const auto base = grid.projection().to_xy(grid.nodes().front().pos);
  std::uniform_real_distribution<double> x(-400.0, 2200.0), y(-400.0, 2200.0);
  for (int q = 0; q < kIndexQueries; ++q) {
    const LatLon p = grid.projection().to_latlon({base.x + x(rng), base.y + y(rng)});
    const std::size_t k = 1 + rng() % 8;
    const auto got = idx.nearest_edges(p, k);
    const auto want = net::nearest_edges_exhaustive(grid, p, k);
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) {
      same = got[i].edge_id == want[i].edge_id && got[i].distance_m == want[i].distance_m;
    }
    index_mismatch += !same;
  }
  return {path_mismatch == 0 && index_mismatch == 0,
          fmt("shortest_path vs exhaustive enumeration: %zu mismatches over %zu node pairs on %d graphs (<= %d nodes); "
              "index vs scan: %zu mismatches over %d queries",
              path_mismatch, pairs, kPathGraphs, kMaxGraphNodes, index_mismatch, kIndexQueries)};
}

// ---- 5. parser robustness -----------------------------------------------------

GnssFix random_fix(std::mt19937_64& rng, SentenceKind kind) {
  std::uniform_real_distribution<double> lat(-89.9, 89.9), lon(-179.9, 179.9), alt(-100, 3000), hd(0, 20),
      tod(0, 86399.99), spd(0, 150), crs(0, 359.9);
  std::uniform_int_distribution<int> sats(0, 30), q(0, 4), day(1, 28), mon(1, 12), yr(2000, 2099);
  const FixQuality qualities[] = {FixQuality::NoFix, FixQuality::Gps, FixQuality::Dgps, FixQuality::RtkFloat,
                                  FixQuality::RtkFixed};
  GnssFix f;
  f.sentence = kind;
  f.quality = qualities[q(rng)];
  if (f.quality != FixQuality::NoFix) f.position = LatLon{lat(rng), lon(rng)};
  f.utc_time_of_day_s = tod(rng);
  if (kind == SentenceKind::Gga) {
    f.alt_m = alt(rng);
    f.hdop = hd(rng);
    f.n_sats = sats(rng);
  } else {
    f.utc_date = UtcDate{yr(rng), mon(rng), day(rng)};
    f.speed_knots = spd(rng);
    f.course_deg = crs(rng);
  }
  return f;
}

std::string encode(const GnssFix& f) {
  return f.sentence == SentenceKind::Gga ? ingest::encode_gga(f) : ingest::encode_rmc(f);
}

VisionEvent random_vision(std::mt19937_64& rng) {
  using namespace vision_kind;
  std::uniform_real_distribution<double> t(0, 4000), ang(-90, 90), dist(0, 60);
  std::uniform_int_distribution<int> kind(0, 10), coin(0, 1), light(0, 2);
  VisionKind k;
  switch (kind(rng)) {
    case 0: k = EyeState{coin(rng) == 1}; break;
    case 1: k = Yawn{coin(rng) == 1}; break;
    case 2: k = HeadPose{std::round(ang(rng) * 1e3) / 1e3, std::round(ang(rng) * 1e3) / 1e3}; break;
    case 3: k = PhoneUse{}; break;
    case 4: k = Smoking{}; break;
    case 5: k = TrafficLight{static_cast<Light>(light(rng))}; break;
    case 6: k = StopSign{}; break;
    case 7: k = FrontTaillight{coin(rng) == 1}; break;
    case 8: k = LaneCrossing{}; break;
    case 9: k = NearCollision{std::round(dist(rng) * 1e3) / 1e3}; break;
    default: k = Pedestrian{coin(rng) == 1}; break;
  }
  return {std::round(t(rng) * 1e3) / 1e3, camera_for(k), k};
}

// Hand scaling: rpm (256A + B) / 4, speed A km/h, pedal 100 A / 255 %.
double obd_oracle(std::uint8_t pid, std::uint8_t a, std::uint8_t b) {
  switch (pid) {
    case 0x0C: return (256.0 * a + b) / 4.0;
    case 0x0D: return a;
    default: return a * 100.0 / 255.0;
  }
}

Result parser_robustness() {
  std::mt19937_64 rng(555);
  std::size_t rt_fail = 0;
  std::map<std::string, int> counts;

  for (int i = 0; i < kRoundTrips; ++i) {
    for (auto kind : {SentenceKind::Gga, SentenceKind::Rmc}) {
      const auto line = encode(random_fix(rng, kind));
      const auto parsed = ingest::parse_nmea_sentence(line);
      rt_fail += encode(parsed) != line || !(ingest::parse_nmea_sentence(encode(parsed)) == parsed);
      ++counts[kind == SentenceKind::Gga ? "gga" : "rmc"];
    }

    RawObdFrame fr;
    const std::uint8_t pids[] = {0x0C, 0x0D, 0x49};
    fr.t = std::round(std::uniform_real_distribution<double>(0, 5000)(rng) * 1e6) / 1e6;
    fr.pid = pids[rng() % 3];
    fr.data.resize(ingest::find_pid(fr.pid)->payload_len);
    for (auto& b : fr.data) b = static_cast<std::uint8_t>(rng());
    const auto obd_line = ingest::encode_obd_line(fr);
    const auto obd_back = ingest::parse_obd_line(obd_line);
    rt_fail += ingest::encode_obd_line(obd_back) != obd_line || obd_back.data != fr.data || obd_back.pid != fr.pid ||
               obd_back.t != fr.t;
    ++counts["obd"];

    std::uniform_real_distribution<double> acc(-30, 30), gyr(-3, 3), mag(-80, 80), t(0, 10000);
    const ImuSample s{t(rng), {acc(rng), acc(rng), acc(rng)}, {gyr(rng), gyr(rng), gyr(rng)},
                      {mag(rng), mag(rng), mag(rng)}};
    const auto imu_line = ingest::encode_imu_record(s);
    const auto imu_back = ingest::parse_imu_record(imu_line);
    rt_fail += ingest::encode_imu_record(imu_back) != imu_line || std::fabs(imu_back.accel.x - s.accel.x) > 0.5e-4 + 1e-12;
    ++counts["imu"];

    const auto v = random_vision(rng);
    const auto v_line = ingest::encode_vision_event(v);
    const auto v_back = ingest::parse_vision_event(v_line);
    rt_fail += !(v_back == v) || ingest::encode_vision_event(v_back) != v_line;
    ++counts["vision"];
  }

  // Flip one bit anywhere in a valid sentence. A silent acceptance is a
  // parse that succeeds with content different from the original.
  std::size_t silent = 0, rejected = 0, benign = 0;
  for (int i = 0; i < kBitFlipTrials; ++i) {
    const auto f = random_fix(rng, i % 2 ? SentenceKind::Rmc : SentenceKind::Gga);
    const auto line = encode(f);
    const auto original = ingest::parse_nmea_sentence(line);
    auto bad = line;
    const auto at = rng() % bad.size();
    bad[at] = static_cast<char>(bad[at] ^ (1 << (rng() % 8)));
    try {
      const auto got = ingest::parse_nmea_sentence(bad);
      if (got == original) {
        ++benign;
      } else {
        ++silent;
      }
    } catch (const Error&) {
      ++rejected;
    }
  }

  std::size_t obd_mismatch = 0, obd_checked = 0;
  for (const std::uint8_t pid : {std::uint8_t{0x0C}, std::uint8_t{0x0D}, std::uint8_t{0x49}}) {
    for (int i = 0; i < kObdPayloads; ++i) {
      const auto a = static_cast<std::uint8_t>(rng()), b = static_cast<std::uint8_t>(rng());
      RawObdFrame fr{0.0, pid, {a}};
      if (pid == 0x0C) fr.data.push_back(b);
      const double got = ingest::decode_obd_frame(fr).value;
      const double want = obd_oracle(pid, a, b);
      obd_mismatch += std::fabs(got - want) > 1e-9 * std::max(1.0, std::fabs(want));
      ++obd_checked;
    }
  }

  const bool pass = rt_fail == 0 && silent == 0 && obd_mismatch == 0;
  return {pass, fmt("round trips: %zu failures over %d records each of gga, rmc, obd, imu, vision; "
                    "bit flips: %zu silent acceptances in %d trials (%zu rejected, %zu flips decoding to the same fix); "
                    "OBD decode vs hand scaling: %zu mismatches over %zu payloads",
                    rt_fail, kRoundTrips, silent, kBitFlipTrials, rejected, benign, obd_mismatch, obd_checked)};
}

// ---- 6. DBI algebra -----------------------------------------------------------

dbi::DbiTotals random_totals(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::int64_t> small(0, 20), dist(0, 200'000'000), lat(100'000, 3'000'000);
  dbi::DbiTotals t;
  t.n_trips = small(rng);
  t.distance_mm = dist(rng);
  t.highway_mm = dist(rng) / 3;
  t.night_mm = dist(rng) / 4;
  t.severe_weather_mm = dist(rng) / 5;
  t.n_getting_lost = small(rng);
  t.n_signal_violations = small(rng);
  t.n_near_collisions = small(rng);
  t.n_distraction_episodes = small(rng);
  t.n_eyes_closed_episodes = small(rng);
  t.n_lane_crossings = small(rng);
  t.n_missed_stimuli = small(rng);
  t.n_harsh_brakes = small(rng);
  t.n_brakes_gaze_offroad = small(rng);
  for (auto& pool : t.reaction) {
    const auto n = small(rng) % 6;
    for (std::int64_t i = 0; i < n; ++i) pool.latencies_us.push_back(lat(rng));
    std::sort(pool.latencies_us.begin(), pool.latencies_us.end());
  }
  return t;
}

// Field-by-field sum, written independently of dbi::merge.
void add_into(dbi::DbiTotals& acc, const dbi::DbiTotals& x) {
  acc.n_trips += x.n_trips;
  acc.distance_mm += x.distance_mm;
  acc.highway_mm += x.highway_mm;
  acc.night_mm += x.night_mm;
  acc.severe_weather_mm += x.severe_weather_mm;
  acc.n_getting_lost += x.n_getting_lost;
  acc.n_signal_violations += x.n_signal_violations;
  acc.n_near_collisions += x.n_near_collisions;
  acc.n_distraction_episodes += x.n_distraction_episodes;
  acc.n_eyes_closed_episodes += x.n_eyes_closed_episodes;
  acc.n_lane_crossings += x.n_lane_crossings;
  acc.n_missed_stimuli += x.n_missed_stimuli;
  acc.n_harsh_brakes += x.n_harsh_brakes;
  acc.n_brakes_gaze_offroad += x.n_brakes_gaze_offroad;
  for (std::size_t i = 0; i < acc.reaction.size(); ++i) {
    auto& v = acc.reaction[i].latencies_us;
    v.insert(v.end(), x.reaction[i].latencies_us.begin(), x.reaction[i].latencies_us.end());
    std::sort(v.begin(), v.end());
  }
}

bool categories_within(const dbi::DbiTotals& t) {
  return t.highway_mm <= t.distance_mm && t.night_mm <= t.distance_mm && t.severe_weather_mm <= t.distance_mm;
}

Result dbi_algebra() {
  std::mt19937_64 rng(66);
  std::size_t algebra_fail = 0;
  for (int i = 0; i < kAlgebraTriples; ++i) {
    const auto a = random_totals(rng), b = random_totals(rng), c = random_totals(rng);
    algebra_fail += !(dbi::merge(a, dbi::merge(b, c)) == dbi::merge(dbi::merge(a, b), c));
    algebra_fail += !(dbi::merge(a, b) == dbi::merge(b, a));
    algebra_fail += !(dbi::merge(a, dbi::DbiTotals{}) == a);
  }

  if (g_fleets.empty()) return {false, "no simulated fleets (criterion 1 did not run)"};
  std::size_t weeks = 0, week_fail = 0, reports = 0, category_fail = 0, trips = 0, nonzero_categories = 0;
  for (const auto& fleet : g_fleets) {
    if (fleet.empty()) continue;
    const auto& driver = fleet.front().driver_id;
    std::int64_t lo = INT64_MAX, hi = INT64_MIN;
    for (const auto& t : fleet) {
      lo = std::min(lo, dbi::local_day(t, 0.0));
      hi = std::max(hi, dbi::local_day(t, 0.0));
      ++trips;
      const auto tt = dbi::totals_of(t);
      category_fail += !categories_within(tt);
      nonzero_categories += tt.night_mm > 0 || tt.severe_weather_mm > 0;
    }
    lo = calendar::period_containing(calendar::PeriodKind::Week, lo).first_day;
    hi = calendar::period_containing(calendar::PeriodKind::Week, hi).last_day;
    const auto days = dbi::compute_dbi(driver, fleet, calendar::PeriodKind::Day, lo, hi);
    for (auto kind : {calendar::PeriodKind::Week, calendar::PeriodKind::Month}) {
      for (const auto& w : dbi::compute_dbi(driver, fleet, kind, lo, hi)) {
        dbi::DbiTotals sum;
        for (const auto& d : days) {
          if (d.period.first_day >= w.period.first_day && d.period.last_day <= w.period.last_day) {
            add_into(sum, d.totals);
          }
        }
        ++weeks;
        // Months may extend past the covered days; compare only whole weeks.
        if (kind == calendar::PeriodKind::Week) week_fail += !(sum == w.totals);
        category_fail += !categories_within(w.totals);
        ++reports;
      }
    }
    for (const auto& d : days) {
      category_fail += !categories_within(d.totals);
      ++reports;
    }
  }
  const bool pass = algebra_fail == 0 && week_fail == 0 && category_fail == 0 && nonzero_categories > 0;
  return {pass, fmt("merge associativity/commutativity/identity: %zu failures over %d triples; weekly = sum of daily: "
                    "%zu failures; category miles <= total: %zu violations over %zu trips and %zu reports "
                    "(%zu trips with night or severe-weather miles) across %zu fleets",
                    algebra_fail, kAlgebraTriples, week_fail, category_fail, trips, reports, nonzero_categories,
                    g_fleets.size())};
}

// ---- 7. report shape ----------------------------------------------------------

Result report_shape() {
  testutil::TempDir tmp("acceptance_report");
  const storage::Context ctx{config::Config{}};
  std::vector<sim::GroundTruth> truths;
  for (const auto& script : two_week::scripts(ctx.network)) {
    const auto dir = tmp.path() / script.trip_id;
    storage::write_simulated(dir, script, ctx.network);
    for (auto s : storage::kStages) storage::run_stage(dir, s, ctx);
    truths.push_back(sim::truth_from_json(nlohmann::json::parse(slurp(dir / "truth.json"))));
  }
  const auto trips = storage::collect_summaries(tmp.path(), "D1", INT64_MIN / 2, INT64_MAX / 2, 0.0);
  storage::ReportRequest req;
  req.driver_id = "D1";
  req.period = calendar::PeriodKind::Week;
  const auto csv = dbi::daily_indices_csv(storage::build_report(trips, req).days);

  const auto golden = slurp(fs::path(DRIVESENSE_GOLDEN_DIR) / two_week::kGoldenFile);
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  const bool header_ok = line == "driver_id,date,closed_eyes,distractions,crossing_lines,near_collisions";
  const auto truth = two_week::truth_counts(truths);
  int rows = 0, bad_rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    std::istringstream cells(line);
    std::vector<std::string> c;
    for (std::string cell; std::getline(cells, cell, ',');) c.push_back(cell);
    if (c.size() != 6) {
      ++bad_rows;
      continue;
    }
    const auto it = truth.find(c[1]);
    const std::array<int, 4> want = it == truth.end() ? std::array<int, 4>{} : it->second;
    for (int k = 0; k < 4; ++k) bad_rows += std::stoi(c[2 + static_cast<std::size_t>(k)]) != want[static_cast<std::size_t>(k)];
  }
  const bool pass = header_ok && rows == kReportDays && bad_rows == 0 && csv == golden;
  return {pass, fmt("%d day rows (want %d), header %s, %d cells differing from injected truth, golden file %s", rows,
                    kReportDays, header_ok ? "ok" : "WRONG", bad_rows, csv == golden ? "identical" : "DIFFERS")};
}

// ---- 8. reproducibility -------------------------------------------------------

std::map<std::string, std::string> tree_hashes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = storage::sha256_hex(slurp(e.path()));
  }
  return out;
}

struct Artifacts {
  std::map<std::string, std::string> trips;
  std::string report_csv, report_json, bundle;
};

Artifacts produce(const fs::path& root, const config::Config& cfg) {
  const storage::Context ctx{cfg};
  for (int i = 0; i < 3; ++i) {
    sim::RandomScriptOptions opt;
    opt.trip_id = fmt("R%d", i);
    opt.start_utc = calendar::parse_iso8601("2026-03-03T07:30:00Z") + i * 86400;
    const auto dir = root / "trips" / opt.trip_id;
    storage::write_simulated(dir, sim::random_script(ctx.network, 900 + static_cast<std::uint64_t>(i), opt),
                             ctx.network);
    for (auto s : storage::kStages) storage::run_stage(dir, s, ctx);
  }
  Artifacts a;
  a.trips = tree_hashes(root / "trips");
  const auto period = calendar::parse_period("2026-W10");
  const auto trips = storage::collect_summaries(root / "trips", "D1", period.first_day, period.last_day, 0.0);
  storage::ReportRequest req;
  req.driver_id = "D1";
  const auto rep = storage::build_report(trips, req);
  a.report_csv = dbi::daily_indices_csv(rep.days) + dbi::to_csv(rep.periods);
  for (const auto& r : rep.periods) a.report_json += dbi::to_json(r).dump() + "\n";
  a.bundle = storage::write_bundle(storage::make_bundle("D1", period, trips, 0.0));
  return a;
}

Result reproducibility() {
  testutil::TempDir tmp("acceptance_repro");
  config::Config cfg;
  cfg.harsh.brake = -2.8;
  const auto a = produce(tmp.path() / "a", cfg);
  const auto b = produce(tmp.path() / "b", cfg);
  std::size_t differing = 0;
  for (const auto& [name, hash] : a.trips) {
    auto it = b.trips.find(name);
    differing += it == b.trips.end() || it->second != hash;
  }
  differing += a.trips.size() != b.trips.size();

  // The bundle also survives import and re-export unchanged.
  const auto store = tmp.path() / "store";
  storage::import_bundle(store, a.bundle);
  const auto period = calendar::parse_period("2026-W10");
  const auto again = storage::write_bundle(storage::make_bundle(
      "D1", period, storage::store_summaries(store, "D1", period.first_day, period.last_day, 0.0), 0.0));

  const bool pass = differing == 0 && a.report_csv == b.report_csv && a.report_json == b.report_json &&
                    a.bundle == b.bundle && again == a.bundle && storage::verify_bundle(a.bundle).ok;
  return {pass, fmt("%zu trip-directory files compared by sha256, %zu differ; reports %s; bundles %s (sha256 %.12s); "
                    "import+re-export %s",
                    a.trips.size(), differing, a.report_csv == b.report_csv && a.report_json == b.report_json
                                                   ? "identical"
                                                   : "DIFFER",
                    a.bundle == b.bundle ? "identical" : "DIFFER", storage::sha256_hex(a.bundle).c_str(),
                    again == a.bundle ? "identical" : "DIFFERS")};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Result()>> criteria[] = {
      {"end-to-end event recovery", end_to_end},
      {"clock sync", clock_sync},
      {"map matching accuracy", map_matching},
      {"oracle equivalence", oracle_equivalence},
      {"parser robustness", parser_robustness},
      {"DBI algebra", dbi_algebra},
      {"report shape", report_shape},
      {"reproducibility", reproducibility},
  };
  int passed = 0, n = 0;
  for (const auto& [name, run] : criteria) {
    ++n;
    Result r;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r = run();
    } catch (const std::exception& e) {
      r = {false, std::string("threw: ") + e.what()};
    }
    passed += r.pass;
    std::printf("%s  %d. %s [%.1fs]: %s\n", r.pass ? "PASS" : "FAIL", n, name, seconds_since(t0), r.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("acceptance: %d/%d criteria passed\n", passed, n);
  return passed == n ? 0 : 1;
}
