#pragma once

// Trip directories with a hashed manifest, deterministic export bundles and
// the local report store they import into.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "drivesense/config.hpp"
#include "drivesense/dbi.hpp"
#include "drivesense/pipeline.hpp"
#include "drivesense/sim.hpp"

namespace drivesense::storage {

namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

std::string sha256_hex(std::string_view data);

// ---- trip directory ------------------------------------------------------------

enum class Stage { Ingest, Sync, Events, Match, Dbi };
inline constexpr std::array<Stage, 5> kStages = {Stage::Ingest, Stage::Sync, Stage::Events, Stage::Match, Stage::Dbi};
std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

struct FileEntry {
  std::string name;
  std::string sha256;
  friend bool operator==(const FileEntry&, const FileEntry&) = default;
};

struct StageRecord {
  std::vector<FileEntry> outputs;
  std::string config_sha256;  // effective config the stage ran with
  friend bool operator==(const StageRecord&, const StageRecord&) = default;
};

struct TripManifest {
  int schema_version = kSchemaVersion;
  std::string trip_id;
  std::string driver_id;
  std::int64_t epoch_utc = 0;
  std::vector<FileEntry> streams;  // raw inputs, verified before every stage
  std::vector<FileEntry> extras;   // simulator script and ground truth
  std::optional<pipeline::Clocks> clocks;
  std::array<std::optional<StageRecord>, 5> stages;
  nlohmann::ordered_json config;  // effective config of the last stage run
};

nlohmann::ordered_json to_json(const TripManifest& m);
TripManifest manifest_from_json(const nlohmann::json& j);

/// Raw stream file names inside a trip directory.
inline constexpr std::array<std::string_view, 5> kStreamFiles = {"gnss.nmea", "vision.nmea", "imu.csv", "obd.csv",
                                                                 "vision.jsonl"};

/// Exclusive writer lock on a trip directory or store. Throws Locked.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path file_;
};

class TripDir {
 public:
  /// Writes the raw streams (and extras) and a fresh manifest. Replaces an
  /// existing trip directory's content.
  static TripDir create(const fs::path& dir, const std::string& trip_id, const std::string& driver_id,
                        const pipeline::RawTrip& raw, const std::vector<std::pair<std::string, std::string>>& extras = {});
  /// Manifest from the stream files already in `dir`.
  static TripDir adopt(const fs::path& dir, const std::string& trip_id, const std::string& driver_id);
  static TripDir open(const fs::path& dir);
  static bool is_trip_dir(const fs::path& dir);

  const fs::path& path() const { return dir_; }
  const TripManifest& manifest() const { return m_; }
  /// Stored with the next complete().
  void set_epoch_utc(std::int64_t e) { m_.epoch_utc = e; }
  bool done(Stage s) const { return m_.stages[static_cast<std::size_t>(s)].has_value(); }

  /// Throws HashMismatch naming the file.
  void verify_streams() const;
  /// Throws StageOrder naming the first earlier stage that has not run.
  void require_before(Stage s) const;
  pipeline::RawTrip read_raw() const;
  /// Output of a completed stage, hash-checked.
  std::string read_output(Stage s, std::string_view name) const;

  /// Writes outputs, records their hashes and the config. Later stages are
  /// cleared when any output changed.
  void complete(Stage s, const std::vector<std::pair<std::string, std::string>>& outputs,
                const config::Config& cfg, std::optional<pipeline::Clocks> clocks = std::nullopt);
  /// Marks `s` and every later stage as not run.
  void reset_from(Stage s);

 private:
  void clear_after(Stage s);
  void save() const;
  fs::path dir_;
  TripManifest m_;
};

/// Synthesizes a script into a fresh trip directory; script.json and
/// truth.json are kept as extras.
TripDir write_simulated(const fs::path& dir, const sim::DriveScript& script, const net::RoadNetwork& network);

/// Shared inputs of the processing stages: the config plus the network and
/// weather it names (generated grid by default).
class Context {
 public:
  explicit Context(config::Config cfg);
  Context(const Context&) = delete;
  Context& operator=(const Context&) = delete;

  config::Config cfg;
  net::RoadNetwork network;
  net::SpatialIndex index;  // refers to `network`
  std::vector<fusion::WeatherRecord> weather;
};

/// Runs one stage on a trip directory under its lock: verifies hashes and the
/// stage order, then writes the stage outputs. Ingest failures throw
/// InvariantViolation after writing ingest.json.
void run_stage(const fs::path& dir, Stage s, const Context& ctx);

/// `root` itself when it is a trip directory, else its immediate trip
/// subdirectories, sorted by path.
std::vector<fs::path> list_trip_dirs(const fs::path& root);

/// Trip summaries of a driver whose local start day lies in [first_day,
/// last_day]. Throws IncompleteTrips listing trips of that driver and span
/// without a dbi stage.
std::vector<dbi::TripSummary> collect_summaries(const fs::path& root, const std::string& driver_id,
                                                std::int64_t first_day, std::int64_t last_day, double utc_offset_h);

// ---- reports -------------------------------------------------------------------

struct ReportRequest {
  std::string driver_id;
  calendar::PeriodKind period = calendar::PeriodKind::Week;
  std::optional<std::int64_t> from_day;  // default: first trip day
  std::optional<std::int64_t> to_day;    // default: last trip day
  double utc_offset_h = 0.0;
};

struct ReportOutput {
  std::vector<dbi::DbiReport> periods;
  std::vector<dbi::DbiReport> days;  // every day of the covered periods
};

/// Periods of the requested kind covering the span, and their days.
ReportOutput build_report(std::span<const dbi::TripSummary> trips, const ReportRequest& req);

// ---- export bundles ------------------------------------------------------------

struct TarEntry {
  std::string name;
  std::string data;
};

/// ustar with zero mtime/uid/gid, mode 0644, entries in the given order.
std::string write_tar(const std::vector<TarEntry>& entries);
/// Throws HashMismatch on a bad header checksum or truncated archive.
std::vector<TarEntry> read_tar(std::string_view archive);

struct Bundle {
  std::string driver_id;
  calendar::Period period;
  double utc_offset_h = 0.0;
  std::vector<dbi::TripSummary> trips;
  dbi::DbiReport report;
  std::vector<dbi::DbiReport> days;
};

Bundle make_bundle(const std::string& driver_id, const calendar::Period& period,
                   std::vector<dbi::TripSummary> trips, double utc_offset_h);
/// Deterministic archive: bundle.json, reports/*, trips/<trip_id>.json.
std::string write_bundle(const Bundle& b);

struct VerifyResult {
  bool ok = true;
  std::vector<std::string> problems;
  std::string root_sha256;
};

VerifyResult verify_bundle(std::string_view archive);
/// Verifies first; throws HashMismatch with the first problem.
Bundle read_bundle(std::string_view archive);

/// Store layout: index.json, trips/<driver>/<trip_id>.json, reports/<driver>/<period>.json.
void import_bundle(const fs::path& store, std::string_view archive);
std::vector<dbi::TripSummary> store_summaries(const fs::path& store, const std::string& driver_id,
                                              std::int64_t first_day, std::int64_t last_day, double utc_offset_h);

}  // namespace drivesense::storage
