#include "drivesense/calendar.hpp"

#include <chrono>
#include <cstdio>

#include "drivesense/error.hpp"

namespace drivesense::calendar {

namespace chr = std::chrono;

std::int64_t days_from_civil(int y, int m, int d) {
  const chr::year_month_day ymd{chr::year{y}, chr::month{static_cast<unsigned>(m)},
                                chr::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) {
    throw Error(ErrorCode::MalformedField, "invalid date");
  }
  return chr::sys_days{ymd}.time_since_epoch().count();
}

UtcDate civil_from_days(std::int64_t days) {
  const chr::year_month_day ymd{chr::sys_days{chr::days{days}}};
  return {static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month())),
          static_cast<int>(static_cast<unsigned>(ymd.day()))};
}

std::int64_t parse_iso8601(std::string_view s) {
  int y, mo, d, h, mi, sec;
  char z = 0;
  const std::string str(s);
  if (std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &sec, &z) != 7 ||
      z != 'Z' || h > 23 || mi > 59 || sec > 59 || str.size() != 20) {
    throw Error(ErrorCode::MalformedField, "timestamp '" + str + "' (want YYYY-MM-DDThh:mm:ssZ)");
  }
  return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + sec;
}

std::string format_iso8601(std::int64_t unix_s) {
  std::int64_t days = unix_s / 86400;
  std::int64_t rem = unix_s % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const UtcDate d = civil_from_days(days);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", d.year, d.month, d.day,
                static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60),
                static_cast<int>(rem % 60));
  return buf;
}

std::string format_date(const UtcDate& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month, d.day);
  return buf;
}

UtcDate parse_date(std::string_view s) {
  int y, m, d;
  const std::string str(s);
  if (str.size() != 10 || std::sscanf(str.c_str(), "%4d-%2d-%2d", &y, &m, &d) != 3) {
    throw Error(ErrorCode::MalformedField, "date '" + str + "'");
  }
  days_from_civil(y, m, d);  // validates
  return {y, m, d};
}

std::int64_t unix_of(const UtcDate& d) { return days_from_civil(d.year, d.month, d.day) * 86400; }

PeriodKind period_kind_from_string(std::string_view s) {
  if (s == "day") return PeriodKind::Day;
  if (s == "week") return PeriodKind::Week;
  if (s == "month") return PeriodKind::Month;
  if (s == "quarter") return PeriodKind::Quarter;
  throw Error(ErrorCode::MalformedField, "period kind '" + std::string(s) + "'");
}

std::string_view to_string(PeriodKind k) {
  switch (k) {
    case PeriodKind::Day: return "day";
    case PeriodKind::Week: return "week";
    case PeriodKind::Month: return "month";
    case PeriodKind::Quarter: return "quarter";
  }
  return "day";
}

namespace {

// Monday of ISO week 1 of the ISO year.
std::int64_t iso_week1_monday(int iso_year) {
  const std::int64_t jan4 = days_from_civil(iso_year, 1, 4);
  const unsigned wd = chr::weekday{chr::sys_days{chr::days{jan4}}}.iso_encoding();  // 1..7
  return jan4 - (wd - 1);
}

}  // namespace

Period period_containing(PeriodKind kind, std::int64_t day) {
  const UtcDate d = civil_from_days(day);
  Period p;
  p.kind = kind;
  char buf[32];
  switch (kind) {
    case PeriodKind::Day:
      p.id = format_date(d);
      p.first_day = p.last_day = day;
      break;
    case PeriodKind::Week: {
      const unsigned wd = chr::weekday{chr::sys_days{chr::days{day}}}.iso_encoding();
      const std::int64_t monday = day - (wd - 1);
      // ISO year is the year of that week's Thursday.
      const int iso_year = civil_from_days(monday + 3).year;
      const std::int64_t week = (monday - iso_week1_monday(iso_year)) / 7 + 1;
      std::snprintf(buf, sizeof buf, "%04d-W%02lld", iso_year, static_cast<long long>(week));
      p.id = buf;
      p.first_day = monday;
      p.last_day = monday + 6;
      break;
    }
    case PeriodKind::Month: {
      std::snprintf(buf, sizeof buf, "%04d-%02d", d.year, d.month);
      p.id = buf;
      p.first_day = days_from_civil(d.year, d.month, 1);
      p.last_day = (d.month == 12 ? days_from_civil(d.year + 1, 1, 1)
                                  : days_from_civil(d.year, d.month + 1, 1)) - 1;
      break;
    }
    case PeriodKind::Quarter: {
      const int q = (d.month - 1) / 3;
      std::snprintf(buf, sizeof buf, "%04d-Q%d", d.year, q + 1);
      p.id = buf;
      p.first_day = days_from_civil(d.year, q * 3 + 1, 1);
      p.last_day = (q == 3 ? days_from_civil(d.year + 1, 1, 1)
                           : days_from_civil(d.year, q * 3 + 4, 1)) - 1;
      break;
    }
  }
  return p;
}

Period parse_period(std::string_view id) {
  const std::string s(id);
  int y = 0, n = 0;
  char tail = 0;
  if (s.size() == 10) {
    const UtcDate d = parse_date(s);
    return period_containing(PeriodKind::Day, days_from_civil(d.year, d.month, d.day));
  }
  if (s.size() == 8 && std::sscanf(s.c_str(), "%4d-W%2d%c", &y, &n, &tail) == 2) {
    const std::int64_t monday = iso_week1_monday(y) + (n - 1) * 7;
    Period p = period_containing(PeriodKind::Week, monday);
    if (p.id != s) throw Error(ErrorCode::MalformedField, "period '" + s + "'");
    return p;
  }
  if (s.size() == 7 && std::sscanf(s.c_str(), "%4d-Q%1d%c", &y, &n, &tail) == 2 && n >= 1 && n <= 4) {
    return period_containing(PeriodKind::Quarter, days_from_civil(y, (n - 1) * 3 + 1, 1));
  }
  if (s.size() == 7 && std::sscanf(s.c_str(), "%4d-%2d%c", &y, &n, &tail) == 2 && n >= 1 && n <= 12) {
    return period_containing(PeriodKind::Month, days_from_civil(y, n, 1));
  }
  throw Error(ErrorCode::MalformedField, "period '" + s + "'");
}

}  // namespace drivesense::calendar
