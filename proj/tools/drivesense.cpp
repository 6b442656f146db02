// drivesense: command-line driver for simulation, the per-trip stages, reports
// and export bundles.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "drivesense/calendar.hpp"
#include "drivesense/config.hpp"
#include "drivesense/error.hpp"
#include "drivesense/sim.hpp"
#include "drivesense/storage.hpp"

namespace {

using namespace drivesense;
namespace fs = std::filesystem;

constexpr int kExitValidation = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config_file;
  std::string trip_dir;
  std::optional<std::uint64_t> seed;
  std::string format = "csv";

  // simulate
  std::string script_file;
  std::string trip_id;
  std::string driver_id;
  std::string start_utc;

  // report / export / import / verify
  std::string period = "week";
  std::string from, to;
  std::string store;
  std::string out;
  std::string bundle;
  bool list_keys = false;
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& data) {
  if (path.empty() || path == "-") {
    std::cout << data;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << data;
}

fs::path need_trip_dir(const Options& o) {
  if (o.trip_dir.empty()) throw UsageError("--trip-dir is required");
  return o.trip_dir;
}

const std::string& need(const std::string& v, const char* flag) {
  if (v.empty()) throw UsageError(std::string(flag) + " is required");
  return v;
}

std::int64_t day_of(const std::string& date) {
  try {
    const auto d = calendar::parse_date(date);
    return calendar::days_from_civil(d.year, d.month, d.day);
  } catch (const Error&) {
    throw UsageError("expected a date YYYY-MM-DD, got '" + date + "'");
  }
}

int cmd_simulate(const Options& o, const storage::Context& ctx) {
  const auto dir = need_trip_dir(o);
  sim::DriveScript script;
  if (!o.script_file.empty()) {
    script = sim::parse_script(read_text(o.script_file));
    if (o.seed) script.seed = *o.seed;
  } else {
    sim::RandomScriptOptions opt;
    if (!o.trip_id.empty()) opt.trip_id = o.trip_id;
    if (!o.driver_id.empty()) opt.driver_id = o.driver_id;
    if (!o.start_utc.empty()) opt.start_utc = calendar::parse_iso8601(o.start_utc);
    script = sim::random_script(ctx.network, o.seed.value_or(1), opt);
  }
  if (!o.trip_id.empty()) script.trip_id = o.trip_id;
  if (!o.driver_id.empty()) script.driver_id = o.driver_id;
  storage::write_simulated(dir, script, ctx.network);
  std::cout << "simulate: wrote trip " << script.trip_id << " to " << dir.string() << "\n";
  return 0;
}

int cmd_stage(storage::Stage s, const Options& o, const storage::Context& ctx) {
  const auto dir = need_trip_dir(o);
  if (s == storage::Stage::Ingest && !storage::TripDir::is_trip_dir(dir)) {
    if (o.driver_id.empty()) throw UsageError("--driver is required to ingest a directory without a manifest");
    const auto id = o.trip_id.empty() ? fs::absolute(dir).filename().string() : o.trip_id;
    storage::TripDir::adopt(dir, id, o.driver_id);
  }
  storage::run_stage(dir, s, ctx);
  std::cout << storage::to_string(s) << ": ok (" << storage::TripDir::open(dir).manifest().trip_id << ")\n";
  return 0;
}

// Every stage on the trip directory, or on each trip directory below it.
int cmd_run(const Options& o, const storage::Context& ctx) {
  const auto root = need_trip_dir(o);
  int failures = 0;
  for (const auto& dir : storage::list_trip_dirs(root)) {
    try {
      for (auto s : storage::kStages) storage::run_stage(dir, s, ctx);
      std::cout << "run: ok (" << dir.filename().string() << ")\n";
    } catch (const Error& e) {
      std::cerr << "run: " << dir.string() << ": " << e.what() << "\n";
      ++failures;
    }
  }
  return failures ? kExitValidation : 0;
}

std::vector<dbi::TripSummary> summaries_for(const Options& o, std::int64_t first, std::int64_t last,
                                            double utc_offset_h) {
  if (!o.store.empty()) return storage::store_summaries(o.store, o.driver_id, first, last, utc_offset_h);
  return storage::collect_summaries(need_trip_dir(o), o.driver_id, first, last, utc_offset_h);
}

int cmd_report(const Options& o, const storage::Context& ctx) {
  need(o.driver_id, "--driver");
  if (o.trip_dir.empty() && o.store.empty()) throw UsageError("--trip-dir or --store is required");
  storage::ReportRequest req;
  req.driver_id = o.driver_id;
  try {
    req.period = calendar::period_kind_from_string(o.period);
  } catch (const Error&) {
    throw UsageError("--period must be day, week, month or quarter");
  }
  if (!o.from.empty()) req.from_day = day_of(o.from);
  if (!o.to.empty()) req.to_day = day_of(o.to);
  req.utc_offset_h = ctx.cfg.travel.utc_offset_h;

  // Every trip of the driver; build_report picks the covered periods.
  const auto trips = summaries_for(o, INT64_MIN / 2, INT64_MAX / 2, req.utc_offset_h);
  const auto rep = storage::build_report(trips, req);
  if (o.format == "json") {
    nlohmann::ordered_json j;
    j["periods"] = nlohmann::ordered_json::array();
    for (const auto& r : rep.periods) j["periods"].push_back(dbi::to_json(r));
    j["days"] = nlohmann::ordered_json::array();
    for (const auto& r : rep.days) j["days"].push_back(dbi::to_json(r));
    write_text(o.out, j.dump(2) + "\n");
  } else {
    write_text(o.out, dbi::daily_indices_csv(rep.days));
  }
  return 0;
}

int cmd_export(const Options& o, const storage::Context& ctx) {
  need(o.driver_id, "--driver");
  need(o.out, "--out");
  if (o.trip_dir.empty() && o.store.empty()) throw UsageError("--trip-dir or --store is required");
  calendar::Period period;
  try {
    period = calendar::parse_period(o.period);
  } catch (const Error&) {
    throw UsageError("--period must be a period id such as 2026-03-02, 2026-W10, 2026-03 or 2026-Q1");
  }
  const double utc = ctx.cfg.travel.utc_offset_h;
  auto trips = summaries_for(o, period.first_day, period.last_day, utc);
  const auto archive = storage::write_bundle(storage::make_bundle(o.driver_id, period, std::move(trips), utc));
  write_text(o.out, archive);
  std::cout << "export: " << o.out << " sha256 " << storage::sha256_hex(archive) << "\n";
  return 0;
}

int cmd_verify(const Options& o) {
  const auto v = storage::verify_bundle(read_text(need(o.bundle, "BUNDLE")));
  if (!v.ok) {
    for (const auto& p : v.problems) std::cerr << "verify: " << p << "\n";
    return kExitValidation;
  }
  std::cout << "verify: ok root_sha256 " << v.root_sha256 << "\n";
  return 0;
}

int cmd_import(const Options& o) {
  need(o.store, "--store");
  storage::import_bundle(o.store, read_text(need(o.bundle, "BUNDLE")));
  std::cout << "import: ok into " << o.store << "\n";
  return 0;
}

int cmd_config(const Options& o, const storage::Context& ctx) {
  if (o.list_keys) {
    std::cout << config::key_table();
  } else {
    std::cout << config::to_json(ctx.cfg).dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drivesense: in-vehicle driving behavior pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;

  app.add_option("--config", o.config_file, "YAML config file (flat keys, see `drivesense config --keys`)");
  app.add_option("--trip-dir", o.trip_dir, "trip directory, or a directory of trip directories");
  app.add_option("--seed", o.seed, "simulation seed");
  app.add_option("--format", o.format, "report output format")->check(CLI::IsMember({"json", "csv"}));

  auto* simulate = app.add_subcommand("simulate", "synthesize a trip directory from a script or a seed");
  simulate->add_option("--script", o.script_file, "drive script JSON; random script from --seed otherwise");
  simulate->add_option("--trip-id", o.trip_id, "override the trip id");
  simulate->add_option("--driver", o.driver_id, "override the driver id");
  simulate->add_option("--start", o.start_utc, "start time of a random script, YYYY-MM-DDThh:mm:ssZ");

  auto* ingest = app.add_subcommand("ingest", "parse and validate the raw streams");
  ingest->add_option("--trip-id", o.trip_id, "trip id when creating a manifest (default: directory name)");
  ingest->add_option("--driver", o.driver_id, "driver id when creating a manifest");
  auto* sync = app.add_subcommand("sync", "fit the unit clocks to GPS time");
  auto* events = app.add_subcommand("events", "detect motion and vision events");
  auto* match = app.add_subcommand("match", "map-match the trajectory");
  auto* dbi_cmd = app.add_subcommand("dbi", "summarize the trip for the behavior indices");
  auto* run = app.add_subcommand("run", "every stage on each trip directory");

  auto* report = app.add_subcommand("report", "daily indices for the periods covering a driver's trips");
  report->add_option("--driver", o.driver_id, "driver id")->required();
  report->add_option("--period", o.period, "day, week, month or quarter");
  report->add_option("--from", o.from, "first day YYYY-MM-DD (default: first trip)");
  report->add_option("--to", o.to, "last day YYYY-MM-DD (default: last trip)");
  report->add_option("--store", o.store, "read trip summaries from a report store");
  report->add_option("--out", o.out, "output file (default: stdout)");

  auto* exp = app.add_subcommand("export", "write a bundle for one driver and period");
  exp->add_option("--driver", o.driver_id, "driver id")->required();
  exp->add_option("--period", o.period, "period id: 2026-03-02, 2026-W10, 2026-03 or 2026-Q1")->required();
  exp->add_option("--store", o.store, "export from a report store instead of trip directories");
  exp->add_option("--out", o.out, "bundle file")->required();

  auto* verify = app.add_subcommand("verify", "check a bundle's hashes and content");
  verify->add_option("BUNDLE", o.bundle, "bundle file")->required();

  auto* imp = app.add_subcommand("import", "import a verified bundle into a report store");
  imp->add_option("BUNDLE", o.bundle, "bundle file")->required();
  imp->add_option("--store", o.store, "report store directory")->required();

  auto* cfg_cmd = app.add_subcommand("config", "print the effective config");
  cfg_cmd->add_flag("--keys", o.list_keys, "print the key table instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    const storage::Context ctx(config::load_config(o.config_file));
    if (simulate->parsed()) return cmd_simulate(o, ctx);
    if (ingest->parsed()) return cmd_stage(storage::Stage::Ingest, o, ctx);
    if (sync->parsed()) return cmd_stage(storage::Stage::Sync, o, ctx);
    if (events->parsed()) return cmd_stage(storage::Stage::Events, o, ctx);
    if (match->parsed()) return cmd_stage(storage::Stage::Match, o, ctx);
    if (dbi_cmd->parsed()) return cmd_stage(storage::Stage::Dbi, o, ctx);
    if (run->parsed()) return cmd_run(o, ctx);
    if (report->parsed()) return cmd_report(o, ctx);
    if (exp->parsed()) return cmd_export(o, ctx);
    if (verify->parsed()) return cmd_verify(o);
    if (imp->parsed()) return cmd_import(o);
    if (cfg_cmd->parsed()) return cmd_config(o, ctx);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}
