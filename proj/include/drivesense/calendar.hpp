#pragma once

// UTC calendar helpers: ISO-8601 timestamps, days, ISO weeks, months.

#include <cstdint>
#include <string>
#include <string_view>

#include "drivesense/records.hpp"

namespace drivesense::calendar {

/// Days since 1970-01-01.
std::int64_t days_from_civil(int y, int m, int d);
UtcDate civil_from_days(std::int64_t days);

/// "YYYY-MM-DDThh:mm:ssZ" -> unix seconds. Throws MalformedField.
std::int64_t parse_iso8601(std::string_view s);
std::string format_iso8601(std::int64_t unix_s);

std::string format_date(const UtcDate& d);
UtcDate parse_date(std::string_view s);

/// Unix seconds at 00:00:00Z of the given date.
std::int64_t unix_of(const UtcDate& d);

enum class PeriodKind { Day, Week, Month, Quarter };

PeriodKind period_kind_from_string(std::string_view s);
std::string_view to_string(PeriodKind k);

struct Period {
  PeriodKind kind = PeriodKind::Day;
  std::string id;         // 2026-03-02 | 2026-W10 | 2026-03 | 2026-Q1
  std::int64_t first_day = 0;  // inclusive, days since epoch
  std::int64_t last_day = 0;   // inclusive
  friend bool operator==(const Period&, const Period&) = default;
};

/// Period of a given kind containing the day.
Period period_containing(PeriodKind kind, std::int64_t day);
/// Parses an identifier; the kind is inferred from its shape.
Period parse_period(std::string_view id);

}  // namespace drivesense::calendar
