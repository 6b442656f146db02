#include "drivesense/ingest.hpp"

#include <array>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "drivesense/error.hpp"
#include "text_util.hpp"

namespace drivesense::ingest {

using detail::split;
using detail::to_double;
using detail::to_int;

namespace {

[[noreturn]] void malformed(const std::string& field, std::string_view detail = {}) {
  std::string msg = "field '" + field + "'";
  if (!detail.empty()) msg += ": " + std::string(detail);
  throw Error(ErrorCode::MalformedField, msg);
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

constexpr char kHex[] = "0123456789ABCDEF";

void append_hex_byte(std::string& out, std::uint8_t b) {
  out.push_back(kHex[b >> 4]);
  out.push_back(kHex[b & 0x0F]);
}

std::optional<double> parse_time_of_day(std::string_view s, const char* field) {
  if (s.empty()) return std::nullopt;
  if (s.size() < 6) malformed(field, "expected hhmmss[.ss]");
  for (int i = 0; i < 6; ++i) {
    if (s[i] < '0' || s[i] > '9') malformed(field, "expected hhmmss[.ss]");
  }
  const int hh = (s[0] - '0') * 10 + (s[1] - '0');
  const int mm = (s[2] - '0') * 10 + (s[3] - '0');
  auto ss = to_double(s.substr(4));
  if (!ss || hh > 23 || mm > 59 || *ss < 0.0 || *ss >= 61.0) malformed(field, "out of range");
  return hh * 3600.0 + mm * 60.0 + *ss;
}

/// ddmm.mmmm (lat) or dddmm.mmmm (lon) plus hemisphere letter.
std::optional<double> parse_coordinate(std::string_view value, std::string_view hemi,
                                       int deg_digits, const char* field) {
  if (value.empty() && hemi.empty()) return std::nullopt;
  if (value.size() < static_cast<std::size_t>(deg_digits + 2)) malformed(field, "too short");
  auto deg = to_int(value.substr(0, deg_digits));
  auto minutes = to_double(value.substr(deg_digits));
  if (!deg || !minutes || *deg < 0 || *minutes < 0.0 || *minutes >= 60.0) malformed(field);
  if (value[deg_digits] < '0' || value[deg_digits] > '9') malformed(field);
  double v = static_cast<double>(*deg) + *minutes / 60.0;
  const double limit = deg_digits == 2 ? 90.0 : 180.0;
  if (v > limit) malformed(field, "out of range");
  if (hemi == "S" || hemi == "W") {
    v = -v;
  } else if (!(hemi == "N" && deg_digits == 2) && !(hemi == "E" && deg_digits == 3)) {
    malformed(std::string(field) + "_hemisphere");
  }
  return v;
}

void append_coordinate(std::string& out, double v, int deg_digits, char pos, char neg) {
  const long long total = std::llround(std::fabs(v) * 60.0 * 1e6);  // micro-minutes
  const long long deg = total / 60'000'000LL;
  const long long rem = total % 60'000'000LL;
  char buf[32];
  std::snprintf(buf, sizeof buf, deg_digits == 2 ? "%02lld%02lld.%06lld" : "%03lld%02lld.%06lld",
                deg, rem / 1'000'000LL, rem % 1'000'000LL);
  out += buf;
  out.push_back(',');
  out.push_back(v < 0.0 ? neg : pos);
}

void append_time_of_day(std::string& out, double tod) {
  const long long cs = std::llround(tod * 100.0);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%02lld%02lld%02lld.%02lld", cs / 360000, (cs / 6000) % 60,
                (cs / 100) % 60, cs % 100);
  out += buf;
}

std::string finish_sentence(std::string body) {
  const std::uint8_t cs = nmea_checksum(body);
  std::string out = "$" + body + "*";
  append_hex_byte(out, cs);
  return out;
}

int gga_quality_digit(FixQuality q) {
  switch (q) {
    case FixQuality::NoFix: return 0;
    case FixQuality::Gps: return 1;
    case FixQuality::Dgps: return 2;
    case FixQuality::RtkFixed: return 4;
    case FixQuality::RtkFloat: return 5;
  }
  return 0;
}

FixQuality gga_quality_from_digit(std::string_view s) {
  if (s == "0") return FixQuality::NoFix;
  if (s == "1") return FixQuality::Gps;
  if (s == "2") return FixQuality::Dgps;
  if (s == "4") return FixQuality::RtkFixed;
  if (s == "5") return FixQuality::RtkFloat;
  malformed("fix_quality", "unsupported indicator '" + std::string(s) + "'");
}

GnssFix parse_gga(const std::vector<std::string_view>& f) {
  if (f.size() != 15) malformed("field_count", "GGA needs 14 fields");
  GnssFix fix;
  fix.sentence = SentenceKind::Gga;
  fix.utc_time_of_day_s = parse_time_of_day(f[1], "time");
  fix.quality = gga_quality_from_digit(f[6]);
  auto lat = parse_coordinate(f[2], f[3], 2, "latitude");
  auto lon = parse_coordinate(f[4], f[5], 3, "longitude");
  if (lat.has_value() != lon.has_value()) malformed("longitude", "position half present");
  if (fix.quality != FixQuality::NoFix) {
    if (!lat) malformed("latitude", "missing for a valid fix");
    fix.position = LatLon{*lat, *lon};
  }
  if (!f[7].empty()) {
    auto n = to_int(f[7]);
    if (!n || *n < 0 || *n > 99) malformed("n_sats");
    fix.n_sats = static_cast<int>(*n);
  }
  if (!f[8].empty()) {
    auto h = to_double(f[8]);
    if (!h || *h < 0.0) malformed("hdop");
    fix.hdop = *h;
  }
  if (!f[9].empty()) {
    auto a = to_double(f[9]);
    if (!a) malformed("altitude");
    if (f[10] != "M") malformed("altitude_units");
    if (fix.quality != FixQuality::NoFix) fix.alt_m = *a;
  }
  return fix;
}

GnssFix parse_rmc(const std::vector<std::string_view>& f) {
  if (f.size() != 12 && f.size() != 13) malformed("field_count", "RMC needs 11 or 12 fields");
  GnssFix fix;
  fix.sentence = SentenceKind::Rmc;
  fix.utc_time_of_day_s = parse_time_of_day(f[1], "time");
  if (f[2] != "A" && f[2] != "V") malformed("status");
  FixQuality q = f[2] == "A" ? FixQuality::Gps : FixQuality::NoFix;
  if (f.size() == 13) {
    const auto mode = f[12];
    if (mode == "N") q = FixQuality::NoFix;
    else if (mode == "A") q = FixQuality::Gps;
    else if (mode == "D") q = FixQuality::Dgps;
    else if (mode == "F") q = FixQuality::RtkFloat;
    else if (mode == "R") q = FixQuality::RtkFixed;
    else malformed("mode");
    if ((f[2] == "V") != (q == FixQuality::NoFix)) malformed("mode", "disagrees with status");
  }
  fix.quality = q;
  auto lat = parse_coordinate(f[3], f[4], 2, "latitude");
  auto lon = parse_coordinate(f[5], f[6], 3, "longitude");
  if (lat.has_value() != lon.has_value()) malformed("longitude", "position half present");
  if (q != FixQuality::NoFix) {
    if (!lat) malformed("latitude", "missing for a valid fix");
    fix.position = LatLon{*lat, *lon};
  }
  if (!f[7].empty()) {
    auto v = to_double(f[7]);
    if (!v || *v < 0.0) malformed("speed");
    fix.speed_knots = *v;
  }
  if (!f[8].empty()) {
    auto v = to_double(f[8]);
    if (!v || *v < 0.0 || *v >= 360.0) malformed("course");
    fix.course_deg = *v;
  }
  if (!f[9].empty()) {
    if (f[9].size() != 6) malformed("date");
    auto dd = to_int(f[9].substr(0, 2));
    auto mo = to_int(f[9].substr(2, 2));
    auto yy = to_int(f[9].substr(4, 2));
    if (!dd || !mo || !yy || *dd < 1 || *dd > 31 || *mo < 1 || *mo > 12) malformed("date");
    fix.utc_date = UtcDate{static_cast<int>(*yy < 80 ? 2000 + *yy : 1900 + *yy),
                           static_cast<int>(*mo), static_cast<int>(*dd)};
  }
  return fix;
}

}  // namespace

std::uint8_t nmea_checksum(std::string_view payload) {
  std::uint8_t cs = 0;
  for (char c : payload) cs ^= static_cast<std::uint8_t>(c);
  return cs;
}

GnssFix parse_nmea_sentence(std::string_view line) {
  line = detail::trim_eol(line);
  if (line.empty() || line.front() != '$') malformed("framing", "missing '$'");
  if (line.size() < 4 || line[line.size() - 3] != '*') malformed("checksum", "missing '*hh'");
  const std::string_view payload = line.substr(1, line.size() - 4);
  const int hi = hex_value(line[line.size() - 2]);
  const int lo = hex_value(line[line.size() - 1]);
  if (hi < 0 || lo < 0) malformed("checksum", "non-hex digits");
  if (payload.find_first_of("$*") != std::string_view::npos) malformed("framing", "stray delimiter");
  const auto expected = static_cast<std::uint8_t>(hi * 16 + lo);
  const auto actual = nmea_checksum(payload);
  if (expected != actual) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "computed %02X, sentence says %02X", actual, expected);
    throw Error(ErrorCode::ChecksumMismatch, buf);
  }
  const auto fields = split(payload, ',');
  const auto id = fields.front();
  if (id.size() != 5) malformed("sentence_id");
  const auto type = id.substr(2);
  if (type == "GGA") return parse_gga(fields);
  if (type == "RMC") return parse_rmc(fields);
  throw Error(ErrorCode::UnsupportedSentenceType, std::string(id));
}

std::string encode_gga(const GnssFix& fix, std::string_view talker) {
  std::string b(talker);
  b += "GGA,";
  if (fix.utc_time_of_day_s) append_time_of_day(b, *fix.utc_time_of_day_s);
  b.push_back(',');
  if (fix.position && fix.quality != FixQuality::NoFix) {
    append_coordinate(b, fix.position->lat, 2, 'N', 'S');
    b.push_back(',');
    append_coordinate(b, fix.position->lon, 3, 'E', 'W');
  } else {
    b += ",,,";
  }
  b.push_back(',');
  b += std::to_string(gga_quality_digit(fix.quality));
  char buf[16];
  std::snprintf(buf, sizeof buf, ",%02d,", fix.n_sats);
  b += buf;
  detail::append_fixed(b, fix.hdop, 1);
  b.push_back(',');
  if (fix.alt_m && fix.quality != FixQuality::NoFix) detail::append_fixed(b, *fix.alt_m, 3);
  b += ",M,0.0,M,,";
  return finish_sentence(std::move(b));
}

std::string encode_rmc(const GnssFix& fix, std::string_view talker) {
  std::string b(talker);
  b += "RMC,";
  if (fix.utc_time_of_day_s) append_time_of_day(b, *fix.utc_time_of_day_s);
  const bool valid = fix.quality != FixQuality::NoFix && fix.position.has_value();
  b += valid ? ",A," : ",V,";
  if (valid) {
    append_coordinate(b, fix.position->lat, 2, 'N', 'S');
    b.push_back(',');
    append_coordinate(b, fix.position->lon, 3, 'E', 'W');
  } else {
    b += ",,,";
  }
  b.push_back(',');
  if (fix.speed_knots) detail::append_fixed(b, *fix.speed_knots, 2);
  b.push_back(',');
  if (fix.course_deg) detail::append_fixed(b, *fix.course_deg, 1);
  b.push_back(',');
  if (fix.utc_date) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d%02d%02d", fix.utc_date->day, fix.utc_date->month,
                  fix.utc_date->year % 100);
    b += buf;
  }
  b += ",,,";
  switch (valid ? fix.quality : FixQuality::NoFix) {
    case FixQuality::NoFix: b.push_back('N'); break;
    case FixQuality::Gps: b.push_back('A'); break;
    case FixQuality::Dgps: b.push_back('D'); break;
    case FixQuality::RtkFloat: b.push_back('F'); break;
    case FixQuality::RtkFixed: b.push_back('R'); break;
  }
  return finish_sentence(std::move(b));
}

std::string encode_fix_json(const GnssFix& fix) {
  nlohmann::json j;
  j["t"] = fix.t;
  j["sentence"] = fix.sentence == SentenceKind::Gga ? "gga" : "rmc";
  j["quality"] = std::string(to_string(fix.quality));
  if (fix.position) {
    j["lat"] = fix.position->lat;
    j["lon"] = fix.position->lon;
  }
  if (fix.alt_m) j["alt_m"] = *fix.alt_m;
  j["hdop"] = fix.hdop;
  j["n_sats"] = fix.n_sats;
  if (fix.utc_time_of_day_s) j["utc_tod_s"] = *fix.utc_time_of_day_s;
  if (fix.utc_date) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", fix.utc_date->year, fix.utc_date->month,
                  fix.utc_date->day);
    j["utc_date"] = buf;
  }
  if (fix.speed_knots) j["speed_knots"] = *fix.speed_knots;
  if (fix.course_deg) j["course_deg"] = *fix.course_deg;
  return j.dump();
}

GnssFix parse_fix_json(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    malformed("json", e.what());
  }
  GnssFix fix;
  try {
    fix.t = j.at("t").get<double>();
    const auto sentence = j.at("sentence").get<std::string>();
    if (sentence != "gga" && sentence != "rmc") malformed("sentence");
    fix.sentence = sentence == "gga" ? SentenceKind::Gga : SentenceKind::Rmc;
    fix.quality = fix_quality_from_string(j.at("quality").get<std::string>());
    if (j.contains("lat")) fix.position = LatLon{j.at("lat").get<double>(), j.at("lon").get<double>()};
    if (j.contains("alt_m")) fix.alt_m = j.at("alt_m").get<double>();
    fix.hdop = j.at("hdop").get<double>();
    fix.n_sats = j.at("n_sats").get<int>();
    if (j.contains("utc_tod_s")) fix.utc_time_of_day_s = j.at("utc_tod_s").get<double>();
    if (j.contains("utc_date")) {
      const auto s = j.at("utc_date").get<std::string>();
      UtcDate d;
      if (std::sscanf(s.c_str(), "%d-%d-%d", &d.year, &d.month, &d.day) != 3) malformed("utc_date");
      fix.utc_date = d;
    }
    if (j.contains("speed_knots")) fix.speed_knots = j.at("speed_knots").get<double>();
    if (j.contains("course_deg")) fix.course_deg = j.at("course_deg").get<double>();
  } catch (const nlohmann::json::exception& e) {
    malformed("json", e.what());
  }
  if (fix.quality == FixQuality::NoFix) fix.position.reset();
  return fix;
}

// ---- OBD ---------------------------------------------------------------------

namespace {
double decode_rpm(std::span<const std::uint8_t> d) { return (256.0 * d[0] + d[1]) / 4.0; }
double decode_speed(std::span<const std::uint8_t> d) { return static_cast<double>(d[0]); }
double decode_pedal(std::span<const std::uint8_t> d) { return 100.0 * d[0] / 255.0; }

constexpr std::array<PidSpec, 3> kPidTable{{
    {kPidEngineRpm, 2, ObdQuantity::Rpm, &decode_rpm, 0.0, 16383.75},
    {kPidVehicleSpeed, 1, ObdQuantity::SpeedKph, &decode_speed, 0.0, 255.0},
    {kPidPedalPositionD, 1, ObdQuantity::PedalPct, &decode_pedal, 0.0, 100.0},
}};
}  // namespace

std::span<const PidSpec> pid_table() { return kPidTable; }

const PidSpec* find_pid(std::uint8_t pid) {
  for (const auto& s : kPidTable) {
    if (s.pid == pid) return &s;
  }
  return nullptr;
}

ObdReading decode_obd_frame(const RawObdFrame& frame) {
  const PidSpec* spec = find_pid(frame.pid);
  if (!spec) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "PID 0x%02X", frame.pid);
    throw Error(ErrorCode::UnsupportedPid, buf);
  }
  if (frame.data.size() != spec->payload_len) {
    char buf[80];
    std::snprintf(buf, sizeof buf, "PID 0x%02X expects %zu bytes, got %zu", frame.pid,
                  spec->payload_len, frame.data.size());
    throw Error(ErrorCode::PayloadLengthMismatch, buf);
  }
  return {frame.t, frame.pid, spec->quantity, spec->decode(frame.data)};
}

RawObdFrame encode_obd_value(double t, std::uint8_t pid, double value) {
  RawObdFrame f{t, pid, {}};
  switch (pid) {
    case kPidEngineRpm: {
      const long long raw = std::clamp<long long>(std::llround(value * 4.0), 0, 65535);
      f.data = {static_cast<std::uint8_t>(raw >> 8), static_cast<std::uint8_t>(raw & 0xFF)};
      break;
    }
    case kPidVehicleSpeed:
      f.data = {static_cast<std::uint8_t>(std::clamp<long long>(std::llround(value), 0, 255))};
      break;
    case kPidPedalPositionD:
      f.data = {static_cast<std::uint8_t>(
          std::clamp<long long>(std::llround(value * 255.0 / 100.0), 0, 255))};
      break;
    default: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "PID 0x%02X", pid);
      throw Error(ErrorCode::UnsupportedPid, buf);
    }
  }
  return f;
}

RawObdFrame parse_obd_line(std::string_view line) {
  line = detail::trim_eol(line);
  const auto f = split(line, ',');
  if (f.size() != 3) throw Error(ErrorCode::FieldCount, "OBD line needs 3 fields, got " + std::to_string(f.size()));
  auto t = to_double(f[0]);
  if (!t || !std::isfinite(*t)) throw Error(ErrorCode::NonNumeric, "field 't'");
  auto hex_bytes = [](std::string_view s, const char* name) {
    if (s.empty() || s.size() % 2 != 0) throw Error(ErrorCode::NonNumeric, std::string("field '") + name + "'");
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i < s.size(); i += 2) {
      const int hi = hex_value(s[i]);
      const int lo = hex_value(s[i + 1]);
      if (hi < 0 || lo < 0) throw Error(ErrorCode::NonNumeric, std::string("field '") + name + "'");
      out.push_back(static_cast<std::uint8_t>(hi * 16 + lo));
    }
    return out;
  };
  const auto pid = hex_bytes(f[1], "pid");
  if (pid.size() != 1) throw Error(ErrorCode::NonNumeric, "field 'pid'");
  auto data = hex_bytes(f[2], "data");
  if (data.size() > 4) throw Error(ErrorCode::PayloadLengthMismatch, "payload longer than 4 bytes");
  return {*t, pid[0], std::move(data)};
}

std::string encode_obd_line(const RawObdFrame& frame) {
  std::string out;
  detail::append_fixed(out, frame.t, 6);
  out.push_back(',');
  append_hex_byte(out, frame.pid);
  out.push_back(',');
  for (auto b : frame.data) append_hex_byte(out, b);
  return out;
}

// ---- IMU ---------------------------------------------------------------------

ImuSample parse_imu_record(std::string_view line) {
  line = detail::trim_eol(line);
  std::array<double, 10> v{};
  std::size_t n = 0;
  std::size_t start = 0;
  static constexpr const char* kNames[] = {"t", "ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz"};
  while (true) {
    const auto pos = line.find(',', start);
    const auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    if (n < v.size()) {
      auto d = to_double(field);
      if (!d || !std::isfinite(*d)) throw Error(ErrorCode::NonNumeric, std::string("field '") + kNames[n] + "'");
      v[n] = *d;
    }
    ++n;
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (n != 10) throw Error(ErrorCode::FieldCount, "IMU line needs 10 fields, got " + std::to_string(n));
  return {v[0], {v[1], v[2], v[3]}, {v[4], v[5], v[6]}, {v[7], v[8], v[9]}};
}

void append_imu_record(std::string& out, const ImuSample& s) {
  detail::append_fixed(out, s.t, 6);
  for (double a : {s.accel.x, s.accel.y, s.accel.z}) {
    out.push_back(',');
    detail::append_fixed(out, a, 4);
  }
  for (double g : {s.gyro.x, s.gyro.y, s.gyro.z}) {
    out.push_back(',');
    detail::append_fixed(out, g, 5);
  }
  for (double m : {s.mag.x, s.mag.y, s.mag.z}) {
    out.push_back(',');
    detail::append_fixed(out, m, 2);
  }
}

std::string encode_imu_record(const ImuSample& s) {
  std::string out;
  append_imu_record(out, s);
  return out;
}

bool ImuExcursion::operator()(double, double, std::span<const ImuSample> w) const {
  for (const auto& s : w) {
    if (std::fabs(s.accel.norm() - 9.81) > accel_dev) return true;
    if (s.gyro.norm() > gyro_rate) return true;
  }
  return false;
}

// ---- Vision ------------------------------------------------------------------

namespace {

vision_kind::Light light_from(const std::string& s) {
  if (s == "red") return vision_kind::Light::Red;
  if (s == "yellow") return vision_kind::Light::Yellow;
  if (s == "green") return vision_kind::Light::Green;
  malformed("state", "unknown light state '" + s + "'");
}

template <class T>
T attr(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) malformed(key, "missing");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    malformed(key, "wrong type");
  }
}

}  // namespace

VisionEvent parse_vision_event(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::trim_eol(line));
  } catch (const nlohmann::json::exception& e) {
    malformed("json", e.what());
  }
  if (!j.is_object()) malformed("json", "not an object");
  VisionEvent ev;
  ev.t = attr<double>(j, "t");
  const auto camera = attr<std::string>(j, "camera");
  if (camera == "driver") ev.camera = Camera::Driver;
  else if (camera == "front") ev.camera = Camera::Front;
  else malformed("camera", "unknown camera '" + camera + "'");
  const auto kind = attr<std::string>(j, "kind");
  namespace vk = vision_kind;
  if (kind == "eye_state") {
    const auto s = attr<std::string>(j, "state");
    if (s != "open" && s != "closed") malformed("state");
    ev.kind = vk::EyeState{s == "closed"};
  } else if (kind == "yawn") {
    const auto s = attr<std::string>(j, "mouth");
    if (s != "open" && s != "closed") malformed("mouth");
    ev.kind = vk::Yawn{s == "open"};
  } else if (kind == "head_pose") {
    ev.kind = vk::HeadPose{attr<double>(j, "yaw_deg"), attr<double>(j, "pitch_deg")};
  } else if (kind == "phone_use") {
    ev.kind = vk::PhoneUse{};
  } else if (kind == "smoking") {
    ev.kind = vk::Smoking{};
  } else if (kind == "traffic_light") {
    ev.kind = vk::TrafficLight{light_from(attr<std::string>(j, "state"))};
  } else if (kind == "stop_sign") {
    ev.kind = vk::StopSign{};
  } else if (kind == "front_taillight") {
    const auto s = attr<std::string>(j, "state");
    if (s != "on" && s != "off") malformed("state");
    ev.kind = vk::FrontTaillight{s == "on"};
  } else if (kind == "lane_crossing") {
    ev.kind = vk::LaneCrossing{};
  } else if (kind == "near_collision") {
    const double d = attr<double>(j, "distance_m");
    if (!(d >= 0.0)) malformed("distance_m", "negative");
    ev.kind = vk::NearCollision{d};
  } else if (kind == "pedestrian") {
    ev.kind = vk::Pedestrian{attr<bool>(j, "crossing")};
  } else {
    throw Error(ErrorCode::UnknownKind, "vision kind '" + kind + "'");
  }
  if (camera_for(ev.kind) != ev.camera) {
    throw Error(ErrorCode::CameraKindMismatch,
                camera + " camera cannot emit '" + kind + "'");
  }
  return ev;
}

std::string encode_vision_event(const VisionEvent& e) {
  namespace vk = vision_kind;
  std::string out = "{\"t\":";
  detail::append_shortest(out, e.t);
  out += e.camera == Camera::Driver ? ",\"camera\":\"driver\"" : ",\"camera\":\"front\"";
  out += ",\"kind\":\"";
  out += kind_name(e.kind);
  out += '"';
  std::visit(
      [&out](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, vk::EyeState>) {
          out += k.closed ? ",\"state\":\"closed\"" : ",\"state\":\"open\"";
        } else if constexpr (std::is_same_v<K, vk::Yawn>) {
          out += k.mouth_open ? ",\"mouth\":\"open\"" : ",\"mouth\":\"closed\"";
        } else if constexpr (std::is_same_v<K, vk::HeadPose>) {
          out += ",\"yaw_deg\":";
          detail::append_shortest(out, k.yaw_deg);
          out += ",\"pitch_deg\":";
          detail::append_shortest(out, k.pitch_deg);
        } else if constexpr (std::is_same_v<K, vk::TrafficLight>) {
          out += ",\"state\":\"";
          out += to_string(k.state);
          out += '"';
        } else if constexpr (std::is_same_v<K, vk::FrontTaillight>) {
          out += k.on ? ",\"state\":\"on\"" : ",\"state\":\"off\"";
        } else if constexpr (std::is_same_v<K, vk::NearCollision>) {
          out += ",\"distance_m\":";
          detail::append_shortest(out, k.distance_m);
        } else if constexpr (std::is_same_v<K, vk::Pedestrian>) {
          out += k.crossing ? ",\"crossing\":true" : ",\"crossing\":false";
        }
      },
      e.kind);
  out += '}';
  return out;
}

// ---- Invariants --------------------------------------------------------------

std::optional<std::string> check_invariants(const GnssFix& r) {
  if (!std::isfinite(r.t)) return "t not finite";
  if (r.quality == FixQuality::NoFix && r.position) return "NoFix record carries a position";
  if (r.position) {
    if (!(std::fabs(r.position->lat) <= 90.0)) return "latitude out of range";
    if (!(std::fabs(r.position->lon) <= 180.0)) return "longitude out of range";
  }
  if (!(r.hdop >= 0.0)) return "hdop negative";
  if (r.n_sats < 0) return "n_sats negative";
  return std::nullopt;
}

std::optional<std::string> check_invariants(const ObdReading& r) {
  if (!std::isfinite(r.t)) return "t not finite";
  const PidSpec* spec = find_pid(r.pid);
  if (!spec) return "pid not in decode table";
  if (!(r.value >= spec->min_value && r.value <= spec->max_value)) return "value out of range";
  return std::nullopt;
}

std::optional<std::string> check_invariants(const RawObdFrame& r) {
  if (!std::isfinite(r.t)) return "t not finite";
  const PidSpec* spec = find_pid(r.pid);
  if (!spec) return "pid not in decode table";
  if (r.data.size() != spec->payload_len) return "payload length mismatch";
  return std::nullopt;
}

std::optional<std::string> check_invariants(const ImuSample& r) {
  for (double v : {r.t, r.accel.x, r.accel.y, r.accel.z, r.gyro.x, r.gyro.y, r.gyro.z, r.mag.x,
                   r.mag.y, r.mag.z}) {
    if (!std::isfinite(v)) return "non-finite component";
  }
  if (!(r.accel.norm() < kImuAccelSanityBound)) return "|accel| above sanity bound";
  return std::nullopt;
}

std::optional<std::string> check_invariants(const VisionEvent& r) {
  if (!std::isfinite(r.t)) return "t not finite";
  if (camera_for(r.kind) != r.camera) return "camera/kind mismatch";
  if (auto* nc = std::get_if<vision_kind::NearCollision>(&r.kind); nc && !(nc->distance_m >= 0.0)) {
    return "negative distance";
  }
  return std::nullopt;
}

}  // namespace drivesense::ingest
