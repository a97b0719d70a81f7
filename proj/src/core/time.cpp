#include "icms/time.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>

#include <absl/time/civil_time.h>

#include "icms/error.hpp"

namespace icms {
namespace {

absl::Time to_absl(Instant t) {
  return absl::FromUnixSeconds(t.time_since_epoch().count());
}

Instant from_absl(absl::Time t) {
  // floor for fractional seconds before the epoch as well as after
  return Instant{std::chrono::seconds{absl::ToUnixSeconds(t)}};
}

absl::CivilSecond civil(Instant t, const absl::TimeZone& zone) {
  return absl::ToCivilSecond(to_absl(t), zone);
}

Date to_date(const absl::CivilDay& d) {
  return Date{std::chrono::year{static_cast<int>(d.year())},
              std::chrono::month{static_cast<unsigned>(d.month())},
              std::chrono::day{static_cast<unsigned>(d.day())}};
}

}  // namespace

Instant parse_instant(std::string_view text) {
  absl::Time t;
  std::string err;
  if (!absl::ParseTime(absl::RFC3339_full, std::string(text), &t, &err)) {
    throw Error(ErrorCode::Validation,
                "invalid RFC 3339 instant '" + std::string(text) + "': " + err);
  }
  return from_absl(t);
}

std::string format_instant(Instant t) {
  return absl::FormatTime("%Y-%m-%d%ET%H:%M:%SZ", to_absl(t), absl::UTCTimeZone());
}

Date parse_date(std::string_view text) {
  auto bad = [&] {
    return Error(ErrorCode::Validation, "invalid date '" + std::string(text) + "', expected YYYY-MM-DD");
  };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw bad();
  int y = 0;
  unsigned m = 0, d = 0;
  auto field = [&](std::size_t pos, std::size_t len, auto& out) {
    auto [p, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
    if (ec != std::errc{} || p != text.data() + pos + len) throw bad();
  };
  field(0, 4, y);
  field(5, 2, m);
  field(8, 2, d);
  Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) throw bad();
  return date;
}

std::string format_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

Instant floor_hour(Instant t) { return std::chrono::floor<std::chrono::hours>(t); }

std::string_view to_string(DayType d) {
  return d == DayType::workday ? "workday" : "weekend";
}

DayType day_type(Date date, std::span<const Date> holidays) {
  const std::chrono::weekday wd{std::chrono::sys_days{date}};
  if (wd == std::chrono::Saturday || wd == std::chrono::Sunday) return DayType::weekend;
  if (std::find(holidays.begin(), holidays.end(), date) != holidays.end()) return DayType::weekend;
  return DayType::workday;
}

LocalCalendar::LocalCalendar() : zone_(absl::UTCTimeZone()) {}

LocalCalendar::LocalCalendar(const std::string& timezone, std::span<const Date> holidays)
    : holidays_(holidays.begin(), holidays.end()) {
  if (!absl::LoadTimeZone(timezone, &zone_)) {
    throw ConfigError("timezone", "timezone: unknown zone '" + timezone + "'");
  }
}

int LocalCalendar::hour(Instant t) const { return civil(t, zone_).hour(); }
int LocalCalendar::minute(Instant t) const { return civil(t, zone_).minute(); }
int LocalCalendar::second(Instant t) const { return civil(t, zone_).second(); }

Date LocalCalendar::date(Instant t) const {
  return to_date(absl::CivilDay(civil(t, zone_)));
}

bool LocalCalendar::is_holiday(Instant t) const { return holidays_.contains(date(t)); }

DayType LocalCalendar::day_type(Instant t) const { return day_type(date(t)); }

DayType LocalCalendar::day_type(Date d) const {
  const std::chrono::weekday wd{std::chrono::sys_days{d}};
  if (wd == std::chrono::Saturday || wd == std::chrono::Sunday) return DayType::weekend;
  return holidays_.contains(d) ? DayType::weekend : DayType::workday;
}

Instant LocalCalendar::at_local(Date date, int hour) const {
  const absl::CivilHour ch(static_cast<int>(date.year()), static_cast<unsigned>(date.month()),
                           static_cast<unsigned>(date.day()), hour);
  // pre is the earlier mapping for repeated times; for skipped times trans is
  // the instant the clock jumped, which is the first one at or after ch.
  const auto info = zone_.At(ch);
  if (info.kind == absl::TimeZone::TimeInfo::SKIPPED) return from_absl(info.trans);
  return from_absl(info.pre);
}

}  // namespace icms
