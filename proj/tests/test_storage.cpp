#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "drivesense/error.hpp"
#include "drivesense/storage.hpp"
#include "temp_dir.hpp"

using namespace drivesense;
using namespace drivesense::storage;

namespace {

const Context& ctx() {
  static const Context c{config::Config{}};
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << data;
}

std::map<std::string, std::string> dir_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

sim::DriveScript script_for(std::uint64_t seed, const std::string& trip_id, std::int64_t start_utc) {
  sim::RandomScriptOptions opt;
  opt.trip_id = trip_id;
  opt.start_utc = start_utc;
  return sim::random_script(ctx().network, seed, opt);
}

void run_all(const fs::path& dir) {
  for (auto s : kStages) run_stage(dir, s, ctx());
}

std::string error_text(const std::function<void()>& f, ErrorCode expected) {
  try {
    f();
  } catch (const Error& e) {
    CHECK(e.code() == expected);
    return e.what();
  }
  FAIL("no error thrown");
  return {};
}

}  // namespace

TEST_CASE("sha256 matches known vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("manifest survives a JSON round trip") {
  testutil::TempDir tmp("manifest");
  const auto dir = tmp.path() / "T1";
  write_simulated(dir, script_for(3, "T1", 1772438400), ctx().network);
  run_stage(dir, Stage::Ingest, ctx());
  run_stage(dir, Stage::Sync, ctx());
  const auto m = TripDir::open(dir).manifest();
  CHECK(m.clocks.has_value());
  CHECK(m.epoch_utc == 1772438400);
  const auto again = manifest_from_json(nlohmann::json::parse(to_json(m).dump()));
  CHECK(to_json(again).dump() == to_json(m).dump());
  CHECK(m.config == config::to_json(ctx().cfg));
}

TEST_CASE("stages run strictly in order and name the missing stage") {
  testutil::TempDir tmp("order");
  const auto dir = tmp.path() / "T1";
  write_simulated(dir, script_for(4, "T1", 1772438400), ctx().network);
  auto msg = error_text([&] { run_stage(dir, Stage::Dbi, ctx()); }, ErrorCode::StageOrder);
  CHECK(msg.find("ingest") != std::string::npos);
  run_stage(dir, Stage::Ingest, ctx());
  run_stage(dir, Stage::Sync, ctx());
  msg = error_text([&] { run_stage(dir, Stage::Match, ctx()); }, ErrorCode::StageOrder);
  CHECK(msg.find("events") != std::string::npos);
  run_stage(dir, Stage::Events, ctx());
  msg = error_text([&] { run_stage(dir, Stage::Dbi, ctx()); }, ErrorCode::StageOrder);
  CHECK(msg.find("match") != std::string::npos);
}

TEST_CASE("re-running any stage reproduces identical bytes") {
  testutil::TempDir tmp("replay");
  const auto dir = tmp.path() / "T1";
  write_simulated(dir, script_for(5, "T1", 1772438400), ctx().network);
  run_all(dir);
  const auto before = dir_contents(dir);
  for (auto s : kStages) {
    run_stage(dir, s, ctx());
    CHECK(dir_contents(dir) == before);
  }
  CHECK(TripDir::open(dir).done(Stage::Dbi));
  CHECK_FALSE(fs::exists(dir / ".lock"));
}

TEST_CASE("a changed config clears the later stages") {
  testutil::TempDir tmp("config_change");
  const auto dir = tmp.path() / "T1";
  write_simulated(dir, script_for(6, "T1", 1772438400), ctx().network);
  run_all(dir);
  config::Config cfg;
  cfg.harsh.brake = -2.0;
  const Context other(cfg);
  run_stage(dir, Stage::Events, other);
  const auto t = TripDir::open(dir);
  CHECK(t.done(Stage::Events));
  CHECK_FALSE(t.done(Stage::Match));
  CHECK_FALSE(t.done(Stage::Dbi));
  CHECK(t.manifest().config == config::to_json(cfg));
}

TEST_CASE("any single-byte corruption of a stream is caught before processing") {
  testutil::TempDir tmp("corrupt");
  const auto dir = tmp.path() / "T1";
  write_simulated(dir, script_for(7, "T1", 1772438400), ctx().network);
  run_stage(dir, Stage::Ingest, ctx());
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const auto name = std::string(kStreamFiles[rng() % kStreamFiles.size()]);
    const auto original = slurp(dir / name);
    auto bad = original;
    const auto at = rng() % bad.size();
    bad[at] = static_cast<char>(bad[at] ^ static_cast<char>(1 + rng() % 255));
    spit(dir / name, bad);
    const auto msg = error_text([&] { run_stage(dir, Stage::Sync, ctx()); }, ErrorCode::HashMismatch);
    CHECK(msg.find(name) != std::string::npos);
    spit(dir / name, original);
  }
  run_stage(dir, Stage::Sync, ctx());
}

TEST_CASE("corrupted stage outputs are caught when read") {
  testutil::TempDir tmp("corrupt_output");
  const auto dir = tmp.path() / "T1";
  write_simulated(dir, script_for(7, "T1", 1772438400), ctx().network);
  for (auto s : {Stage::Ingest, Stage::Sync}) run_stage(dir, s, ctx());
  auto text = slurp(dir / "clocks.json");
  text[text.size() / 2] = text[text.size() / 2] == '1' ? '2' : '1';
  spit(dir / "clocks.json", text);
  const auto msg = error_text([&] { run_stage(dir, Stage::Events, ctx()); }, ErrorCode::HashMismatch);
  CHECK(msg.find("clocks.json") != std::string::npos);
}

TEST_CASE("a second writer is refused while the lock is held") {
  testutil::TempDir tmp("lock");
  const auto dir = tmp.path() / "T1";
  write_simulated(dir, script_for(8, "T1", 1772438400), ctx().network);
  {
    DirLock held(dir);
    error_text([&] { run_stage(dir, Stage::Ingest, ctx()); }, ErrorCode::Locked);
    error_text([&] { DirLock second(dir); }, ErrorCode::Locked);
  }
  run_stage(dir, Stage::Ingest, ctx());
}

TEST_CASE("failed ingest writes its report and leaves the stage undone") {
  testutil::TempDir tmp("bad_ingest");
  const auto dir = tmp.path() / "T1";
  auto streams = sim::synthesize(script_for(9, "T1", 1772438400), ctx().network);
  // Swap two IMU lines: one non-monotonic step.
  auto& imu = streams.imu_csv;
  const auto l1 = imu.find('\n', imu.size() / 2) + 1;
  const auto l2 = imu.find('\n', l1) + 1;
  const auto l3 = imu.find('\n', l2) + 1;
  imu = imu.substr(0, l1) + imu.substr(l2, l3 - l2) + imu.substr(l1, l2 - l1) + imu.substr(l3);
  TripDir::create(dir, "T1", "D1",
                  {streams.gnss_nmea, streams.vision_nmea, imu, streams.obd_csv, streams.vision_jsonl});
  const auto msg = error_text([&] { run_stage(dir, Stage::Ingest, ctx()); }, ErrorCode::InvariantViolation);
  CHECK(msg.find("imu") != std::string::npos);
  CHECK(fs::exists(dir / "ingest.json"));
  CHECK(nlohmann::json::parse(slurp(dir / "ingest.json")).at("ok") == false);
  CHECK_FALSE(TripDir::open(dir).done(Stage::Ingest));
}

TEST_CASE("adopting raw files creates a manifest") {
  testutil::TempDir tmp("adopt");
  const auto src = tmp.path() / "src";
  write_simulated(src, script_for(10, "T1", 1772438400), ctx().network);
  const auto dir = tmp.path() / "raw";
  fs::create_directories(dir);
  for (auto name : kStreamFiles) fs::copy_file(src / name, dir / name);
  const auto t = TripDir::adopt(dir, "R1", "D9");
  CHECK(t.manifest().trip_id == "R1");
  CHECK(t.manifest().streams == TripDir::open(src).manifest().streams);
  run_all(dir);
  CHECK(TripDir::open(dir).done(Stage::Dbi));
}

TEST_CASE("tar writer and reader round trip") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TarEntry> entries;
    const int n = static_cast<int>(rng() % 5);
    for (int i = 0; i < n; ++i) {
      TarEntry e{"dir/file" + std::to_string(i) + ".bin", std::string(rng() % 1500, '\0')};
      for (auto& c : e.data) c = static_cast<char>(rng());
      entries.push_back(std::move(e));
    }
    const auto tar = write_tar(entries);
    CHECK(tar.size() % 512 == 0);
    const auto back = read_tar(tar);
    REQUIRE(back.size() == entries.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].name == entries[i].name);
      CHECK(back[i].data == entries[i].data);
    }
  }
}

TEST_CASE("tar headers are plain ustar with fixed metadata") {
  const auto tar = write_tar({{"a.txt", "hello"}});
  CHECK(tar.substr(257, 6) == std::string("ustar\0", 6));
  CHECK(tar.substr(136, 12) == std::string("00000000000\0", 12));  // mtime
  CHECK(tar.substr(108, 8) == std::string("0000000\0", 8));        // uid
  CHECK(tar.substr(124, 12) == std::string("00000000005\0", 12));  // size
  CHECK(tar.size() == 512 * 4);
}

TEST_CASE("empty period gives a valid bundle with zero trips") {
  const auto b = make_bundle("D1", calendar::parse_period("2026-Q2"), {}, 0.0);
  CHECK(b.trips.empty());
  CHECK(b.report.totals == dbi::DbiTotals{});
  CHECK(b.days.size() == 91);
  const auto archive = write_bundle(b);
  const auto v = verify_bundle(archive);
  CHECK(v.ok);
  CHECK(read_bundle(archive).report == b.report);
}

TEST_CASE("bundle export, verify, tamper, import and re-export") {
  testutil::TempDir tmp("bundle");
  const auto fleet = tmp.path() / "fleet";
  write_simulated(fleet / "T1", script_for(21, "T1", 1772438400), ctx().network);
  write_simulated(fleet / "T2", script_for(22, "T2", 1772611200), ctx().network);
  run_all(fleet / "T1");
  run_all(fleet / "T2");
  const auto period = calendar::parse_period("2026-W10");
  const auto trips = collect_summaries(fleet, "D1", period.first_day, period.last_day, 0.0);
  REQUIRE(trips.size() == 2);
  const auto archive = write_bundle(make_bundle("D1", period, trips, 0.0));
  REQUIRE(verify_bundle(archive).ok);

  SUBCASE("a tampered trip byte names the file and its hash") {
    const auto entries = read_tar(archive);
    const auto trip_pos = archive.find("\"trip_id\": \"T2\"");
    REQUIRE(trip_pos != std::string::npos);
    auto bad = archive;
    bad[trip_pos + 13] = '3';
    const auto v = verify_bundle(bad);
    CHECK_FALSE(v.ok);
    REQUIRE_FALSE(v.problems.empty());
    CHECK(v.problems.front().find("sha256 mismatch for trips/T2.json") != std::string::npos);
    error_text([&] { read_bundle(bad); }, ErrorCode::HashMismatch);
  }

  SUBCASE("every single-byte change anywhere fails verification") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 400; ++trial) {
      auto bad = archive;
      const auto at = rng() % bad.size();
      bad[at] = static_cast<char>(bad[at] ^ static_cast<char>(1 + rng() % 255));
      CHECK_FALSE(verify_bundle(bad).ok);
    }
  }

  SUBCASE("import is idempotent and re-export is byte-identical") {
    const auto store = tmp.path() / "store";
    import_bundle(store, archive);
    const auto once = dir_contents(store);
    import_bundle(store, archive);
    CHECK(dir_contents(store) == once);
    const auto again = write_bundle(
        make_bundle("D1", period, store_summaries(store, "D1", period.first_day, period.last_day, 0.0), 0.0));
    CHECK(again == archive);
    CHECK(read_bundle(again).report == read_bundle(archive).report);
    const auto index = nlohmann::json::parse(once.at("index.json"));
    CHECK(index.at("bundles").size() == 1);
    CHECK(index.at("bundles")[0].at("trips").size() == 2);
  }
}

TEST_CASE("export refuses periods with unfinished trips and lists them") {
  testutil::TempDir tmp("incomplete");
  const auto fleet = tmp.path() / "fleet";
  write_simulated(fleet / "T1", script_for(31, "T1", 1772438400), ctx().network);
  write_simulated(fleet / "T2", script_for(32, "T2", 1772524800), ctx().network);
  write_simulated(fleet / "T3", script_for(33, "T3", 1772524800), ctx().network);
  run_all(fleet / "T1");
  run_stage(fleet / "T2", Stage::Ingest, ctx());
  const auto period = calendar::parse_period("2026-W10");
  const auto msg = error_text([&] { collect_summaries(fleet, "D1", period.first_day, period.last_day, 0.0); },
                              ErrorCode::IncompleteTrips);
  CHECK(msg.find("T2") != std::string::npos);
  CHECK(msg.find("T3") != std::string::npos);
  CHECK(msg.find("T1") == std::string::npos);
  // A finished trip outside the period does not block it.
  const auto other = calendar::parse_period("2026-W20");
  CHECK_NOTHROW(collect_summaries(fleet / "T1", "D1", other.first_day, other.last_day, 0.0));
}

TEST_CASE("report covers whole periods around the trips") {
  dbi::TripSummary a, b;
  a.trip_id = "A";
  b.trip_id = "B";
  a.driver_id = b.driver_id = "D1";
  a.epoch_utc = calendar::parse_iso8601("2026-03-03T00:00:00Z");  // Tuesday, W10
  b.epoch_utc = calendar::parse_iso8601("2026-03-13T00:00:00Z");  // Friday, W11
  a.t_start = b.t_start = 3600.0;
  std::vector<dbi::TripSummary> trips{a, b};
  ReportRequest req;
  req.driver_id = "D1";
  const auto r = build_report(trips, req);
  CHECK(r.periods.size() == 2);
  CHECK(r.days.size() == 14);
  CHECK(r.days.front().period.id == "2026-03-02");
  CHECK(r.days.back().period.id == "2026-03-15");
  CHECK(r.periods[0].totals.n_trips == 1);
  req.period = calendar::PeriodKind::Month;
  CHECK(build_report(trips, req).days.size() == 31);
  req.driver_id = "nobody";
  error_text([&] { build_report(trips, req); }, ErrorCode::IncompleteTrips);
}
