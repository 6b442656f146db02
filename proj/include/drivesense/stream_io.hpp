#pragma once

// Whole-file readers/writers for the per-trip stream files. Every file starts
// with one header comment:
//   # drivesense stream=<name> unit=<telemetry|vision> epoch_utc=<iso> units=<...>
// Readers collect per-line failures instead of stopping at the first one.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drivesense/records.hpp"

namespace drivesense::io {

struct StreamHeader {
  std::string stream;
  std::string unit;
  std::int64_t epoch_utc = 0;
  std::string units;
};

std::string format_header(const StreamHeader& h);
StreamHeader parse_header(std::string_view line);

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

template <class R>
struct ParsedStream {
  StreamHeader header;
  std::vector<R> records;
  std::vector<LineError> errors;
};

/// "<t_unit> <NMEA sentence>" per line.
ParsedStream<GnssFix> read_gnss(std::string_view text);
ParsedStream<ImuSample> read_imu(std::string_view text);
ParsedStream<RawObdFrame> read_obd(std::string_view text);
ParsedStream<VisionEvent> read_vision(std::string_view text);

std::string write_gnss(const StreamHeader& h, std::span<const GnssFix> fixes);
std::string write_imu(const StreamHeader& h, std::span<const ImuSample> samples);
std::string write_obd(const StreamHeader& h, std::span<const RawObdFrame> frames);
std::string write_vision(const StreamHeader& h, std::span<const VisionEvent> events);

std::string read_file(const std::filesystem::path& p);
/// Writes via a temporary file and rename.
void write_file(const std::filesystem::path& p, std::string_view content);

}  // namespace drivesense::io
