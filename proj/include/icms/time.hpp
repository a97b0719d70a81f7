#pragma once

#include <chrono>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <absl/time/time.h>

namespace icms {

// UTC instant, second precision.
using Instant = std::chrono::sys_seconds;
using Date = std::chrono::year_month_day;

inline constexpr std::chrono::seconds kHour{3600};

// RFC 3339 in, "YYYY-MM-DDTHH:MM:SSZ" out. Fractional seconds are floored.
Instant parse_instant(std::string_view text);
std::string format_instant(Instant t);

// "YYYY-MM-DD"
Date parse_date(std::string_view text);
std::string format_date(Date d);

Instant floor_hour(Instant t);

enum class DayType { workday, weekend };

std::string_view to_string(DayType d);

// Saturdays, Sundays and listed holidays are weekend-type days.
DayType day_type(Date date, std::span<const Date> holidays);

// Everything that needs "local" time goes through here: hour of day, local
// date and day type are evaluated in one configured IANA zone.
class LocalCalendar {
 public:
  LocalCalendar();
  LocalCalendar(const std::string& timezone, std::span<const Date> holidays);

  int hour(Instant t) const;
  int minute(Instant t) const;
  int second(Instant t) const;
  Date date(Instant t) const;
  bool is_holiday(Instant t) const;
  DayType day_type(Instant t) const;
  DayType day_type(Date d) const;

  // First instant whose local wall time is at or after (date, hour:00).
  Instant at_local(Date date, int hour) const;

  const absl::TimeZone& zone() const { return zone_; }

 private:
  absl::TimeZone zone_;
  std::set<Date> holidays_;
};

}  // namespace icms
