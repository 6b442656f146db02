#include "drivesense/storage.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "drivesense/error.hpp"
#include "drivesense/sim.hpp"

namespace drivesense::storage {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr const char* kManifest = "manifest.json";
constexpr const char* kLockFile = ".lock";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write to a sibling temp file, then rename over the target.
void write_file(const fs::path& p, std::string_view data) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, what + ": " + e.what());
  }
}

ojson files_json(const std::vector<FileEntry>& files) {
  ojson a = ojson::array();
  for (const auto& f : files) a.push_back({{"name", f.name}, {"sha256", f.sha256}});
  return a;
}

std::vector<FileEntry> files_from(const json& a) {
  std::vector<FileEntry> out;
  for (const auto& f : a) out.push_back({f.at("name").get<std::string>(), f.at("sha256").get<std::string>()});
  return out;
}

std::size_t stage_index(Stage s) { return static_cast<std::size_t>(s); }

std::string date_of(std::int64_t day) { return calendar::format_date(calendar::civil_from_days(day)); }

}  // namespace

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::Io, "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 0xf];
  }
  return out;
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Sync: return "sync";
    case Stage::Events: return "events";
    case Stage::Match: return "match";
    case Stage::Dbi: return "dbi";
  }
  return "?";
}

Stage stage_from_string(std::string_view s) {
  for (auto st : kStages) {
    if (to_string(st) == s) return st;
  }
  throw Error(ErrorCode::UnknownKey, "unknown stage '" + std::string(s) + "'");
}

// ---- manifest -----------------------------------------------------------------

ojson to_json(const TripManifest& m) {
  ojson j;
  j["schema_version"] = m.schema_version;
  j["trip_id"] = m.trip_id;
  j["driver_id"] = m.driver_id;
  j["epoch_utc"] = m.epoch_utc;
  j["streams"] = files_json(m.streams);
  j["extras"] = files_json(m.extras);
  j["clocks"] = m.clocks ? pipeline::to_json(*m.clocks) : ojson(nullptr);
  ojson stages = ojson::object();
  for (auto s : kStages) {
    const auto& r = m.stages[stage_index(s)];
    stages[std::string(to_string(s))] =
        r ? ojson{{"done", true}, {"config_sha256", r->config_sha256}, {"outputs", files_json(r->outputs)}}
          : ojson{{"done", false}};
  }
  j["stages"] = std::move(stages);
  j["config"] = m.config.is_null() ? ojson::object() : m.config;
  return j;
}

TripManifest manifest_from_json(const json& j) {
  try {
    TripManifest m;
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kSchemaVersion) {
      throw Error(ErrorCode::InvariantViolation, "unsupported manifest schema_version " +
                                                     std::to_string(m.schema_version));
    }
    m.trip_id = j.at("trip_id").get<std::string>();
    m.driver_id = j.at("driver_id").get<std::string>();
    m.epoch_utc = j.at("epoch_utc").get<std::int64_t>();
    m.streams = files_from(j.at("streams"));
    m.extras = files_from(j.at("extras"));
    if (!j.at("clocks").is_null()) m.clocks = pipeline::clocks_from_json(j.at("clocks"));
    for (auto s : kStages) {
      const auto& r = j.at("stages").at(std::string(to_string(s)));
      if (r.at("done").get<bool>()) {
        m.stages[stage_index(s)] = StageRecord{files_from(r.at("outputs")), r.at("config_sha256").get<std::string>()};
      }
    }
    // Reassembled in key order; `j` may have come from an unordered parse.
    const auto& cfg = j.at("config");
    m.config = ojson::object();
    for (const auto& k : config::keys()) {
      const std::string name(k.name);
      if (cfg.contains(name)) m.config[name] = ojson::parse(cfg.at(name).dump());
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, std::string("malformed manifest: ") + e.what());
  }
}

// ---- lock ---------------------------------------------------------------------

DirLock::DirLock(const fs::path& dir) : file_(dir / kLockFile) {
  fs::create_directories(dir);
  const int fd = ::open(file_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) {
      throw Error(ErrorCode::Locked, dir.string() + " is locked by another writer (" + file_.string() + ")");
    }
    throw Error(ErrorCode::Io, "cannot create " + file_.string() + ": " + std::strerror(errno));
  }
  ::close(fd);
}

DirLock::~DirLock() {
  std::error_code ec;
  fs::remove(file_, ec);
}

// ---- trip directory -----------------------------------------------------------

namespace {

std::vector<std::pair<std::string, std::string>> stream_contents(const pipeline::RawTrip& raw) {
  return {{"gnss.nmea", raw.gnss_nmea},
          {"vision.nmea", raw.vision_nmea},
          {"imu.csv", raw.imu_csv},
          {"obd.csv", raw.obd_csv},
          {"vision.jsonl", raw.vision_jsonl}};
}

}  // namespace

TripDir TripDir::create(const fs::path& dir, const std::string& trip_id, const std::string& driver_id,
                        const pipeline::RawTrip& raw, const std::vector<std::pair<std::string, std::string>>& extras) {
  DirLock lock(dir);
  // Previous content would leave stale stage outputs behind.
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().filename() != kLockFile) fs::remove_all(entry.path());
  }
  TripDir t;
  t.dir_ = dir;
  t.m_.trip_id = trip_id;
  t.m_.driver_id = driver_id;
  for (const auto& [name, data] : stream_contents(raw)) {
    write_file(dir / name, data);
    t.m_.streams.push_back({name, sha256_hex(data)});
  }
  for (const auto& [name, data] : extras) {
    write_file(dir / name, data);
    t.m_.extras.push_back({name, sha256_hex(data)});
  }
  t.save();
  return t;
}

TripDir TripDir::adopt(const fs::path& dir, const std::string& trip_id, const std::string& driver_id) {
  DirLock lock(dir);
  TripDir t;
  t.dir_ = dir;
  t.m_.trip_id = trip_id;
  t.m_.driver_id = driver_id;
  for (auto name : kStreamFiles) {
    const auto p = dir / name;
    // A missing stream is recorded as empty; ingest reports it.
    const std::string data = fs::exists(p) ? read_file(p) : std::string();
    if (!fs::exists(p)) write_file(p, data);
    t.m_.streams.push_back({std::string(name), sha256_hex(data)});
  }
  t.save();
  return t;
}

TripDir TripDir::open(const fs::path& dir) {
  const auto p = dir / kManifest;
  if (!fs::exists(p)) throw Error(ErrorCode::Io, "no " + std::string(kManifest) + " in " + dir.string());
  TripDir t;
  t.dir_ = dir;
  t.m_ = manifest_from_json(parse_json(read_file(p), p.string()));
  return t;
}

bool TripDir::is_trip_dir(const fs::path& dir) { return fs::is_regular_file(dir / kManifest); }

void TripDir::verify_streams() const {
  for (const auto& f : m_.streams) {
    const auto actual = sha256_hex(read_file(dir_ / f.name));
    if (actual != f.sha256) {
      throw Error(ErrorCode::HashMismatch,
                  f.name + " in " + dir_.string() + ": manifest sha256 " + f.sha256 + ", file sha256 " + actual);
    }
  }
}

void TripDir::require_before(Stage s) const {
  for (auto prior : kStages) {
    if (prior == s) return;
    if (!done(prior)) {
      throw Error(ErrorCode::StageOrder, "stage " + std::string(to_string(s)) + " needs stage " +
                                             std::string(to_string(prior)) + " to have run first");
    }
  }
}

pipeline::RawTrip TripDir::read_raw() const {
  return {read_file(dir_ / "gnss.nmea"), read_file(dir_ / "vision.nmea"), read_file(dir_ / "imu.csv"),
          read_file(dir_ / "obd.csv"), read_file(dir_ / "vision.jsonl")};
}

std::string TripDir::read_output(Stage s, std::string_view name) const {
  const auto& r = m_.stages[stage_index(s)];
  if (!r) throw Error(ErrorCode::StageOrder, "stage " + std::string(to_string(s)) + " has not run");
  for (const auto& f : r->outputs) {
    if (f.name != name) continue;
    auto data = read_file(dir_ / f.name);
    const auto actual = sha256_hex(data);
    if (actual != f.sha256) {
      throw Error(ErrorCode::HashMismatch,
                  f.name + " in " + dir_.string() + ": manifest sha256 " + f.sha256 + ", file sha256 " + actual);
    }
    return data;
  }
  throw Error(ErrorCode::Io, "stage " + std::string(to_string(s)) + " has no output " + std::string(name));
}

void TripDir::complete(Stage s, const std::vector<std::pair<std::string, std::string>>& outputs,
                       const config::Config& cfg, std::optional<pipeline::Clocks> clocks) {
  const auto cfg_json = config::to_json(cfg);
  StageRecord rec;
  rec.config_sha256 = sha256_hex(cfg_json.dump());
  for (const auto& [name, data] : outputs) {
    write_file(dir_ / name, data);
    rec.outputs.push_back({name, sha256_hex(data)});
  }
  if (m_.stages[stage_index(s)] != rec) clear_after(s);
  m_.stages[stage_index(s)] = std::move(rec);
  if (clocks) m_.clocks = clocks;
  m_.config = cfg_json;
  save();
}

void TripDir::clear_after(Stage s) {
  for (auto later : kStages) {
    if (stage_index(later) > stage_index(s)) m_.stages[stage_index(later)].reset();
  }
  if (stage_index(s) < stage_index(Stage::Sync)) m_.clocks.reset();
}

void TripDir::reset_from(Stage s) {
  clear_after(s);
  m_.stages[stage_index(s)].reset();
  if (s == Stage::Sync) m_.clocks.reset();
  save();
}

void TripDir::save() const { write_file(dir_ / kManifest, dump(to_json(m_))); }

TripDir write_simulated(const fs::path& dir, const sim::DriveScript& script, const net::RoadNetwork& network) {
  const auto streams = sim::synthesize(script, network);
  const pipeline::RawTrip raw{streams.gnss_nmea, streams.vision_nmea, streams.imu_csv, streams.obd_csv,
                              streams.vision_jsonl};
  return TripDir::create(dir, script.trip_id, script.driver_id, raw,
                         {{"script.json", dump(sim::to_json(script))}, {"truth.json", dump(sim::to_json(streams.truth))}});
}

// ---- stages -------------------------------------------------------------------

Context::Context(config::Config c)
    : cfg(std::move(c)),
      network(cfg.network_file.empty() ? sim::gen_network(cfg.grid)
                                       : net::RoadNetwork::parse(read_file(cfg.network_file))),
      index(network),
      weather(cfg.weather_file.empty() ? std::vector<fusion::WeatherRecord>{}
                                       : fusion::parse_weather(read_file(cfg.weather_file))) {}

namespace {

pipeline::Ingested ingest_checked(const pipeline::RawTrip& raw, const config::Config& cfg) {
  auto in = pipeline::ingest(raw, cfg);
  for (const auto& c : in.checks) {
    if (!c.ok) {
      throw Error(ErrorCode::InvariantViolation,
                  "stream " + c.stream + " failed ingest" + (c.messages.empty() ? "" : ": " + c.messages.front()));
    }
  }
  return in;
}

pipeline::Synced synced_of(const TripDir& t, const config::Config& cfg) {
  const auto in = ingest_checked(t.read_raw(), cfg);
  const auto clocks = pipeline::clocks_from_json(parse_json(t.read_output(Stage::Sync, "clocks.json"), "clocks.json"));
  return pipeline::apply_clocks(in, clocks);
}

pipeline::EventsOutput events_of(const TripDir& t) {
  return pipeline::events_from(t.read_output(Stage::Events, "events.jsonl"),
                               parse_json(t.read_output(Stage::Events, "events_summary.json"), "events_summary.json"));
}

}  // namespace

void run_stage(const fs::path& dir, Stage s, const Context& ctx) {
  DirLock lock(dir);
  auto t = TripDir::open(dir);
  t.verify_streams();
  t.require_before(s);
  const auto& cfg = ctx.cfg;

  switch (s) {
    case Stage::Ingest: {
      const auto in = pipeline::ingest(t.read_raw(), cfg);
      ojson j;
      j["ok"] = in.ok();
      j["epoch_utc"] = in.epoch_utc;
      j["streams"] = pipeline::to_json(in.checks);
      const std::string out = dump(j);
      if (!in.ok()) {
        // The report is useful evidence, but the stage is not done.
        write_file(dir / "ingest.json", out);
        t.reset_from(Stage::Ingest);
        ingest_checked(t.read_raw(), cfg);
      }
      t.set_epoch_utc(in.epoch_utc);
      t.complete(s, {{"ingest.json", out}}, cfg);
      break;
    }
    case Stage::Sync: {
      const auto in = ingest_checked(t.read_raw(), cfg);
      const auto clocks = pipeline::estimate_clocks(in);
      t.complete(s, {{"clocks.json", dump(pipeline::to_json(clocks))}}, cfg, clocks);
      break;
    }
    case Stage::Events: {
      const auto ev = pipeline::detect_events(synced_of(t, cfg), cfg);
      t.complete(s, {{"events.jsonl", pipeline::events_jsonl(ev.events)},
                     {"events_summary.json", dump(pipeline::summary_json(ev))}},
                 cfg);
      break;
    }
    case Stage::Match: {
      const auto m = pipeline::match(synced_of(t, cfg), events_of(t), ctx.network, ctx.index, cfg);
      t.complete(s, {{"match.json", dump(pipeline::to_json(m))}}, cfg);
      break;
    }
    case Stage::Dbi: {
      const auto m = pipeline::match_from_json(parse_json(t.read_output(Stage::Match, "match.json"), "match.json"));
      const auto summary = pipeline::summarize({t.manifest().trip_id, t.manifest().driver_id}, synced_of(t, cfg),
                                               events_of(t), m, ctx.network, ctx.weather, cfg);
      t.complete(s, {{"trip_summary.json", dump(dbi::to_json(summary))}}, cfg);
      break;
    }
  }
}

std::vector<fs::path> list_trip_dirs(const fs::path& root) {
  if (TripDir::is_trip_dir(root)) return {root};
  std::vector<fs::path> out;
  if (!fs::is_directory(root)) throw Error(ErrorCode::Io, root.string() + " is not a directory");
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && TripDir::is_trip_dir(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

void sort_trips(std::vector<dbi::TripSummary>& trips) {
  std::sort(trips.begin(), trips.end(), [](const auto& a, const auto& b) { return a.trip_id < b.trip_id; });
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) { return a / b - ((a % b != 0) && ((a < 0) != (b < 0))); }

}  // namespace

std::vector<dbi::TripSummary> collect_summaries(const fs::path& root, const std::string& driver_id,
                                                std::int64_t first_day, std::int64_t last_day, double utc_offset_h) {
  std::vector<dbi::TripSummary> out;
  std::vector<std::string> offenders;
  for (const auto& dir : list_trip_dirs(root)) {
    const auto t = TripDir::open(dir);
    if (t.manifest().driver_id != driver_id) continue;
    if (t.done(Stage::Dbi)) {
      auto s = dbi::trip_summary_from_json(parse_json(t.read_output(Stage::Dbi, "trip_summary.json"),
                                                      (dir / "trip_summary.json").string()));
      const auto day = dbi::local_day(s, utc_offset_h);
      if (day >= first_day && day <= last_day) out.push_back(std::move(s));
      continue;
    }
    // Without a summary the trip's day is approximate (the ingest epoch) or
    // unknown; either way it may belong to the period.
    const auto epoch = t.manifest().epoch_utc;
    const auto day =
        floor_div(epoch + static_cast<std::int64_t>(std::llround(utc_offset_h * 3600.0)), 86400);
    if (epoch == 0 || (day >= first_day && day <= last_day)) offenders.push_back(t.manifest().trip_id);
  }
  if (!offenders.empty()) {
    std::string list;
    for (const auto& o : offenders) list += (list.empty() ? "" : ", ") + o;
    throw Error(ErrorCode::IncompleteTrips, "trips not at stage dbi: " + list);
  }
  sort_trips(out);
  return out;
}

// ---- reports ------------------------------------------------------------------

ReportOutput build_report(std::span<const dbi::TripSummary> trips, const ReportRequest& req) {
  std::optional<std::int64_t> lo = req.from_day, hi = req.to_day;
  for (const auto& t : trips) {
    if (t.driver_id != req.driver_id) continue;
    const auto d = dbi::local_day(t, req.utc_offset_h);
    if (!req.from_day) lo = lo ? std::min(*lo, d) : d;
    if (!req.to_day) hi = hi ? std::max(*hi, d) : d;
  }
  if (!lo || !hi) {
    throw Error(ErrorCode::IncompleteTrips, "no trips for driver " + req.driver_id + " and no date range given");
  }
  if (*lo > *hi) throw Error(ErrorCode::InvariantViolation, "report range starts after it ends");
  const auto first = calendar::period_containing(req.period, *lo).first_day;
  const auto last = calendar::period_containing(req.period, *hi).last_day;
  ReportOutput out;
  out.periods = dbi::compute_dbi(req.driver_id, trips, req.period, first, last, req.utc_offset_h);
  out.days = dbi::compute_dbi(req.driver_id, trips, calendar::PeriodKind::Day, first, last, req.utc_offset_h);
  return out;
}

// ---- tar ----------------------------------------------------------------------

namespace {

constexpr std::size_t kBlock = 512;

void put_octal(char* field, std::size_t width, std::uint64_t v) {
  // width - 1 digits, then NUL
  for (std::size_t i = width - 1; i-- > 0;) {
    field[i] = static_cast<char>('0' + (v & 7));
    v >>= 3;
  }
  field[width - 1] = '\0';
}

std::uint64_t get_octal(const char* field, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width && field[i] != '\0' && field[i] != ' '; ++i) {
    if (field[i] < '0' || field[i] > '7') throw Error(ErrorCode::HashMismatch, "tar header has a non-octal field");
    v = (v << 3) | static_cast<std::uint64_t>(field[i] - '0');
  }
  return v;
}

std::uint32_t header_sum(const char* h) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i < kBlock; ++i) {
    sum += (i >= 148 && i < 156) ? static_cast<std::uint32_t>(' ') : static_cast<unsigned char>(h[i]);
  }
  return sum;
}

}  // namespace

std::string write_tar(const std::vector<TarEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    if (e.name.empty() || e.name.size() > 99) throw Error(ErrorCode::Io, "tar entry name too long: " + e.name);
    char h[kBlock] = {};
    std::memcpy(h, e.name.data(), e.name.size());
    put_octal(h + 100, 8, 0644);
    put_octal(h + 108, 8, 0);
    put_octal(h + 116, 8, 0);
    put_octal(h + 124, 12, e.data.size());
    put_octal(h + 136, 12, 0);
    h[156] = '0';
    std::memcpy(h + 257, "ustar", 6);
    std::memcpy(h + 263, "00", 2);
    const auto sum = header_sum(h);
    put_octal(h + 148, 7, sum);
    h[155] = ' ';
    out.append(h, kBlock);
    out += e.data;
    out.append((kBlock - e.data.size() % kBlock) % kBlock, '\0');
  }
  out.append(2 * kBlock, '\0');
  return out;
}

std::vector<TarEntry> read_tar(std::string_view a) {
  std::vector<TarEntry> out;
  std::size_t pos = 0;
  while (true) {
    if (pos + kBlock > a.size()) throw Error(ErrorCode::HashMismatch, "tar archive is truncated");
    const char* h = a.data() + pos;
    if (std::all_of(h, h + kBlock, [](char c) { return c == '\0'; })) break;
    const auto stored = get_octal(h + 148, 8);
    if (stored != header_sum(h)) {
      throw Error(ErrorCode::HashMismatch, "tar header checksum mismatch for entry " + std::to_string(out.size()));
    }
    if (h[156] != '0' && h[156] != '\0') {
      throw Error(ErrorCode::HashMismatch, "unsupported tar entry type in entry " + std::to_string(out.size()));
    }
    TarEntry e;
    e.name.assign(h, strnlen(h, 100));
    const auto size = get_octal(h + 124, 12);
    pos += kBlock;
    if (pos + size > a.size()) throw Error(ErrorCode::HashMismatch, "tar archive is truncated in " + e.name);
    e.data.assign(a.substr(pos, size));
    pos += size + (kBlock - size % kBlock) % kBlock;
    out.push_back(std::move(e));
  }
  return out;
}

// ---- bundles ------------------------------------------------------------------

namespace {

constexpr const char* kBundleManifest = "bundle.json";

std::string root_hash(const std::vector<FileEntry>& files) {
  // sha256sum-style listing, sorted by name
  std::string listing;
  for (const auto& f : files) listing += f.sha256 + "  " + f.name + "\n";
  return sha256_hex(listing);
}

ojson period_json(const calendar::Period& p) {
  return ojson{{"kind", std::string(calendar::to_string(p.kind))},
               {"id", p.id},
               {"first_day", date_of(p.first_day)},
               {"last_day", date_of(p.last_day)}};
}

std::vector<TarEntry> bundle_payload(const Bundle& b) {
  std::vector<TarEntry> files;
  ojson days = ojson::array();
  for (const auto& d : b.days) days.push_back(dbi::to_json(d));
  files.push_back({"reports/daily_indices.csv", dbi::daily_indices_csv(b.days)});
  files.push_back({"reports/days.json", dump(days)});
  files.push_back({"reports/period.json", dump(dbi::to_json(b.report))});
  for (const auto& t : b.trips) files.push_back({"trips/" + t.trip_id + ".json", dump(dbi::to_json(t))});
  std::sort(files.begin(), files.end(), [](const auto& x, const auto& y) { return x.name < y.name; });
  return files;
}

}  // namespace

Bundle make_bundle(const std::string& driver_id, const calendar::Period& period, std::vector<dbi::TripSummary> trips,
                   double utc_offset_h) {
  Bundle b;
  b.driver_id = driver_id;
  b.period = period;
  b.utc_offset_h = utc_offset_h;
  std::erase_if(trips, [&](const dbi::TripSummary& t) {
    const auto d = dbi::local_day(t, utc_offset_h);
    return t.driver_id != driver_id || d < period.first_day || d > period.last_day;
  });
  sort_trips(trips);
  for (std::size_t i = 1; i < trips.size(); ++i) {
    if (trips[i].trip_id == trips[i - 1].trip_id) {
      throw Error(ErrorCode::InvariantViolation, "duplicate trip id " + trips[i].trip_id);
    }
  }
  b.trips = std::move(trips);
  b.report = dbi::compute_dbi(driver_id, b.trips, period.kind, period.first_day, period.last_day, utc_offset_h).at(0);
  b.days = dbi::compute_dbi(driver_id, b.trips, calendar::PeriodKind::Day, period.first_day, period.last_day,
                            utc_offset_h);
  return b;
}

std::string write_bundle(const Bundle& b) {
  auto files = bundle_payload(b);
  std::vector<FileEntry> listed;
  for (const auto& f : files) listed.push_back({f.name, sha256_hex(f.data)});
  ojson m;
  m["schema_version"] = kSchemaVersion;
  m["driver_id"] = b.driver_id;
  m["period"] = period_json(b.period);
  m["utc_offset_h"] = b.utc_offset_h;
  ojson ids = ojson::array();
  for (const auto& t : b.trips) ids.push_back(t.trip_id);
  m["trips"] = std::move(ids);
  m["files"] = files_json(listed);
  m["root_sha256"] = root_hash(listed);
  files.insert(files.begin(), TarEntry{kBundleManifest, dump(m)});
  return write_tar(files);
}

namespace {

struct Parsed {
  Bundle bundle;
  std::string root;
};

// Structural and hash checks; fills `problems`, returns the bundle when the
// content could be decoded.
std::optional<Parsed> check_bundle(std::string_view archive, std::vector<std::string>& problems) {
  std::vector<TarEntry> entries;
  try {
    entries = read_tar(archive);
  } catch (const Error& e) {
    problems.push_back(e.what());
    return std::nullopt;
  }
  if (entries.empty() || entries.front().name != kBundleManifest) {
    problems.push_back(std::string("first archive entry is not ") + kBundleManifest);
    return std::nullopt;
  }
  json m;
  try {
    m = json::parse(entries.front().data);
  } catch (const json::exception& e) {
    problems.push_back(std::string(kBundleManifest) + " is not valid JSON: " + e.what());
    return std::nullopt;
  }
  try {
    if (m.at("schema_version").get<int>() != kSchemaVersion) {
      problems.push_back("unsupported bundle schema_version");
      return std::nullopt;
    }
    std::map<std::string, const TarEntry*> by_name;
    for (std::size_t i = 1; i < entries.size(); ++i) {
      if (!by_name.emplace(entries[i].name, &entries[i]).second) {
        problems.push_back("duplicate archive entry " + entries[i].name);
      }
    }
    const auto listed = files_from(m.at("files"));
    std::set<std::string> seen;
    for (const auto& f : listed) {
      seen.insert(f.name);
      auto it = by_name.find(f.name);
      if (it == by_name.end()) {
        problems.push_back("listed file " + f.name + " is missing from the archive");
        continue;
      }
      const auto actual = sha256_hex(it->second->data);
      if (actual != f.sha256) {
        problems.push_back("sha256 mismatch for " + f.name + ": listed " + f.sha256 + ", content " + actual);
      }
    }
    for (const auto& [name, _] : by_name) {
      if (!seen.count(name)) problems.push_back("archive entry " + name + " is not listed in " + kBundleManifest);
    }
    const auto root = root_hash(listed);
    if (root != m.at("root_sha256").get<std::string>()) {
      problems.push_back("root_sha256 mismatch: listed " + m.at("root_sha256").get<std::string>() + ", computed " +
                         root);
    }

    const auto& pj = m.at("period");
    auto period = calendar::parse_period(pj.at("id").get<std::string>());
    if (std::string(calendar::to_string(period.kind)) != pj.at("kind").get<std::string>() ||
        date_of(period.first_day) != pj.at("first_day").get<std::string>() ||
        date_of(period.last_day) != pj.at("last_day").get<std::string>()) {
      problems.push_back("period " + period.id + " does not match its stated kind and days");
    }
    std::vector<dbi::TripSummary> trips;
    for (const auto& id : m.at("trips")) {
      auto it = by_name.find("trips/" + id.get<std::string>() + ".json");
      if (it == by_name.end()) {
        problems.push_back("trip " + id.get<std::string>() + " has no summary in the archive");
        continue;
      }
      trips.push_back(dbi::trip_summary_from_json(json::parse(it->second->data)));
    }
    Parsed p;
    p.root = root;
    p.bundle = make_bundle(m.at("driver_id").get<std::string>(), period, trips, m.at("utc_offset_h").get<double>());
    if (p.bundle.trips.size() != trips.size()) {
      problems.push_back("bundle lists trips outside its driver or period");
    }
    return p;
  } catch (const json::exception& e) {
    problems.push_back(std::string("malformed bundle content: ") + e.what());
  } catch (const Error& e) {
    problems.push_back(e.what());
  }
  return std::nullopt;
}

}  // namespace

VerifyResult verify_bundle(std::string_view archive) {
  VerifyResult r;
  auto parsed = check_bundle(archive, r.problems);
  if (parsed) {
    r.root_sha256 = parsed->root;
    // Reports must follow from the included trips, and the archive bytes from
    // the content.
    if (r.problems.empty() && write_bundle(parsed->bundle) != archive) {
      const auto canonical = bundle_payload(parsed->bundle);
      const auto entries = read_tar(archive);
      bool named = false;
      for (const auto& c : canonical) {
        auto it = std::find_if(entries.begin(), entries.end(), [&](const TarEntry& e) { return e.name == c.name; });
        if (it != entries.end() && it->data != c.data) {
          r.problems.push_back(c.name + " differs from the value recomputed from the included trips");
          named = true;
        }
      }
      if (!named) r.problems.push_back("archive is not in canonical form");
    }
  }
  r.ok = r.problems.empty();
  return r;
}

Bundle read_bundle(std::string_view archive) {
  std::vector<std::string> problems;
  auto parsed = check_bundle(archive, problems);
  if (!problems.empty() || !parsed) {
    throw Error(ErrorCode::HashMismatch, problems.empty() ? "unreadable bundle" : problems.front());
  }
  const auto v = verify_bundle(archive);
  if (!v.ok) throw Error(ErrorCode::HashMismatch, v.problems.front());
  return std::move(parsed->bundle);
}

// ---- report store -------------------------------------------------------------

void import_bundle(const fs::path& store, std::string_view archive) {
  const auto b = read_bundle(archive);
  const auto root = verify_bundle(archive).root_sha256;
  DirLock lock(store);
  for (const auto& t : b.trips) {
    write_file(store / "trips" / b.driver_id / (t.trip_id + ".json"), dump(dbi::to_json(t)));
  }
  write_file(store / "reports" / b.driver_id / (b.period.id + ".json"), dump(dbi::to_json(b.report)));

  const auto index_path = store / "index.json";
  std::map<std::pair<std::string, std::string>, ojson> bundles;
  if (fs::exists(index_path)) {
    const auto idx = parse_json(read_file(index_path), index_path.string());
    for (const auto& e : idx.at("bundles")) {
      bundles[{e.at("driver_id").get<std::string>(), e.at("period").get<std::string>()}] = ojson::parse(e.dump());
    }
  }
  ojson ids = ojson::array();
  for (const auto& t : b.trips) ids.push_back(t.trip_id);
  bundles[{b.driver_id, b.period.id}] =
      ojson{{"driver_id", b.driver_id}, {"period", b.period.id}, {"root_sha256", root}, {"trips", std::move(ids)}};
  ojson idx;
  idx["schema_version"] = kSchemaVersion;
  idx["bundles"] = ojson::array();
  for (auto& [_, e] : bundles) idx["bundles"].push_back(std::move(e));
  write_file(index_path, dump(idx));
}

std::vector<dbi::TripSummary> store_summaries(const fs::path& store, const std::string& driver_id,
                                              std::int64_t first_day, std::int64_t last_day, double utc_offset_h) {
  std::vector<dbi::TripSummary> out;
  const auto dir = store / "trips" / driver_id;
  if (!fs::is_directory(dir)) return out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto s = dbi::trip_summary_from_json(parse_json(read_file(f), f.string()));
    const auto d = dbi::local_day(s, utc_offset_h);
    if (d >= first_day && d <= last_day) out.push_back(std::move(s));
  }
  sort_trips(out);
  return out;
}

}  // namespace drivesense::storage
