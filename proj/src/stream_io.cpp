#include "drivesense/stream_io.hpp"

#include <fstream>
#include <sstream>

#include "drivesense/calendar.hpp"
#include "drivesense/error.hpp"
#include "drivesense/ingest.hpp"
#include "text_util.hpp"

namespace drivesense::io {

std::string format_header(const StreamHeader& h) {
  return "# drivesense stream=" + h.stream + " unit=" + h.unit +
         " epoch_utc=" + calendar::format_iso8601(h.epoch_utc) + " units=" + h.units;
}

StreamHeader parse_header(std::string_view line) {
  line = detail::trim_eol(line);
  constexpr std::string_view prefix = "# drivesense ";
  if (line.substr(0, prefix.size()) != prefix) {
    throw Error(ErrorCode::MalformedField, "stream header missing");
  }
  StreamHeader h;
  bool have_epoch = false;
  for (auto tok : detail::split(line.substr(prefix.size()), ' ')) {
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos) continue;
    const auto key = tok.substr(0, eq);
    const auto val = tok.substr(eq + 1);
    if (key == "stream") h.stream = val;
    else if (key == "unit") h.unit = val;
    else if (key == "units") h.units = val;
    else if (key == "epoch_utc") {
      h.epoch_utc = calendar::parse_iso8601(val);
      have_epoch = true;
    }
  }
  if (!have_epoch) throw Error(ErrorCode::MalformedField, "stream header lacks epoch_utc");
  return h;
}

namespace {

template <class R, class ParseLine>
ParsedStream<R> read_lines(std::string_view text, ParseLine&& parse_line) {
  ParsedStream<R> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = detail::trim_eol(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (!header_seen) {
        try {
          out.header = parse_header(line);
          header_seen = true;
        } catch (const Error& e) {
          out.errors.push_back({line_no, e.what()});
        }
      }
      continue;
    }
    try {
      out.records.push_back(parse_line(line));
    } catch (const Error& e) {
      out.errors.push_back({line_no, e.what()});
    }
  }
  if (!header_seen) out.errors.push_back({0, "stream header missing"});
  return out;
}

}  // namespace

ParsedStream<GnssFix> read_gnss(std::string_view text) {
  return read_lines<GnssFix>(text, [](std::string_view line) {
    const auto sp = line.find(' ');
    if (sp == std::string_view::npos) throw Error(ErrorCode::FieldCount, "missing receipt time");
    auto t = detail::to_double(line.substr(0, sp));
    if (!t) throw Error(ErrorCode::NonNumeric, "receipt time");
    GnssFix fix = ingest::parse_nmea_sentence(line.substr(sp + 1));
    fix.t = *t;
    return fix;
  });
}

ParsedStream<ImuSample> read_imu(std::string_view text) {
  return read_lines<ImuSample>(text, [](std::string_view l) { return ingest::parse_imu_record(l); });
}

ParsedStream<RawObdFrame> read_obd(std::string_view text) {
  return read_lines<RawObdFrame>(text, [](std::string_view l) { return ingest::parse_obd_line(l); });
}

ParsedStream<VisionEvent> read_vision(std::string_view text) {
  return read_lines<VisionEvent>(text, [](std::string_view l) { return ingest::parse_vision_event(l); });
}

std::string write_gnss(const StreamHeader& h, std::span<const GnssFix> fixes) {
  std::string out = format_header(h) + "\n";
  for (const auto& f : fixes) {
    detail::append_fixed(out, f.t, 6);
    out.push_back(' ');
    out += f.sentence == SentenceKind::Gga ? ingest::encode_gga(f) : ingest::encode_rmc(f);
    out.push_back('\n');
  }
  return out;
}

std::string write_imu(const StreamHeader& h, std::span<const ImuSample> samples) {
  std::string out = format_header(h) + "\n";
  out.reserve(out.size() + samples.size() * 72);
  for (const auto& s : samples) {
    ingest::append_imu_record(out, s);
    out.push_back('\n');
  }
  return out;
}

std::string write_obd(const StreamHeader& h, std::span<const RawObdFrame> frames) {
  std::string out = format_header(h) + "\n";
  for (const auto& f : frames) {
    out += ingest::encode_obd_line(f);
    out.push_back('\n');
  }
  return out;
}

std::string write_vision(const StreamHeader& h, std::span<const VisionEvent> events) {
  std::string out = format_header(h) + "\n";
  for (const auto& e : events) {
    out += ingest::encode_vision_event(e);
    out.push_back('\n');
  }
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& p, std::string_view content) {
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, p);
}

}  // namespace drivesense::io
