#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "icms/time.hpp"

namespace icms {

// [start, end) in local hours; wraps past midnight when start > end.
struct NightWindow {
  int start = 22;
  int end = 6;

  bool contains(int hour) const {
    return start < end ? (hour >= start && hour < end) : (hour >= start || hour < end);
  }
  bool operator==(const NightWindow&) const = default;
};

struct Config {
  int cadence = 15;  // minutes
  NightWindow night_window;
  double speeding_ratio_threshold = 1.0;
  int frequency_horizon_days = 7;
  std::array<double, 2> frequency_bands{3.0, 10.0};
  double dedup_radius_m = 25.0;
  int max_gap_hours = 3;
  double outlier_k = 3.0;
  double dim_level = 0.3;
  int min_block_hours = 1;
  std::array<double, 2> urgency_cuts{0.5, 0.8};
  std::vector<Date> holidays;
  std::string timezone = "Europe/Lisbon";

  bool operator==(const Config&) const = default;
};

// Applies defaults for absent keys and rejects unknown keys or any invariant
// violation with a ConfigError naming the field.
Config validate_config(const nlohmann::json& raw);
Config load_config(const std::string& path);
nlohmann::json to_json(const Config& c);

LocalCalendar make_calendar(const Config& c);

}  // namespace icms
