#include "icms/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "icms/error.hpp"

namespace icms {
namespace {

using nlohmann::json;

const std::set<std::string> kKnownKeys = {
    "cadence",        "night_window",   "speeding_ratio_threshold", "frequency_horizon_days",
    "frequency_bands", "dedup_radius_m", "max_gap_hours",            "outlier_k",
    "dim_level",      "min_block_hours", "urgency_cuts",            "holidays",
    "timezone"};

int positive_int(const json& raw, const char* key, int fallback) {
  if (!raw.contains(key)) return fallback;
  const auto& v = raw.at(key);
  if (!v.is_number_integer()) throw ConfigError(key, std::string(key) + " must be an integer");
  const auto n = v.get<long long>();
  if (n <= 0 || n > 1'000'000) throw ConfigError(key, std::string(key) + " must be a positive integer");
  return static_cast<int>(n);
}

double real(const json& raw, const char* key, double fallback) {
  if (!raw.contains(key)) return fallback;
  const auto& v = raw.at(key);
  if (!v.is_number()) throw ConfigError(key, std::string(key) + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(key, std::string(key) + " must be finite");
  return d;
}

std::array<double, 2> cut_points(const json& raw, const char* key, std::array<double, 2> fallback) {
  if (!raw.contains(key)) return fallback;
  const auto& v = raw.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw ConfigError(key, std::string(key) + " must be an array of two numbers");
  }
  std::array<double, 2> cuts{v[0].get<double>(), v[1].get<double>()};
  if (!(cuts[0] < cuts[1])) {
    throw ConfigError(key, std::string(key) + ": cut points must be strictly increasing");
  }
  return cuts;
}

}  // namespace

Config validate_config(const json& raw) {
  if (raw.is_null()) return validate_config(json::object());
  if (!raw.is_object()) throw ConfigError("", "config must be a JSON object");
  for (const auto& [key, _] : raw.items()) {
    if (!kKnownKeys.contains(key)) throw ConfigError(key, "unknown config key '" + key + "'");
  }

  Config c;
  c.cadence = positive_int(raw, "cadence", c.cadence);
  if (60 % c.cadence != 0) throw ConfigError("cadence", "cadence must divide 60");

  if (raw.contains("night_window")) {
    const auto& v = raw.at("night_window");
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
      throw ConfigError("night_window", "night_window must be [start_hour, end_hour]");
    }
    const int s = v[0].get<int>();
    const int e = v[1].get<int>();
    if (s < 0 || s > 23 || e < 0 || e > 23) {
      throw ConfigError("night_window", "night_window hours must lie in 0..23");
    }
    if (s == e) throw ConfigError("night_window", "night_window must not be empty");
    c.night_window = {s, e};
  }

  c.speeding_ratio_threshold = real(raw, "speeding_ratio_threshold", c.speeding_ratio_threshold);
  if (c.speeding_ratio_threshold < 0) {
    throw ConfigError("speeding_ratio_threshold", "speeding_ratio_threshold must be >= 0");
  }
  c.frequency_horizon_days = positive_int(raw, "frequency_horizon_days", c.frequency_horizon_days);
  c.frequency_bands = cut_points(raw, "frequency_bands", c.frequency_bands);
  if (c.frequency_bands[0] < 0) throw ConfigError("frequency_bands", "frequency_bands must be >= 0");

  c.dedup_radius_m = real(raw, "dedup_radius_m", c.dedup_radius_m);
  if (c.dedup_radius_m <= 0) throw ConfigError("dedup_radius_m", "dedup_radius_m must be > 0");
  c.max_gap_hours = positive_int(raw, "max_gap_hours", c.max_gap_hours);
  c.outlier_k = real(raw, "outlier_k", c.outlier_k);
  if (c.outlier_k <= 0) throw ConfigError("outlier_k", "outlier_k must be > 0");
  c.dim_level = real(raw, "dim_level", c.dim_level);
  if (!(c.dim_level > 0.0 && c.dim_level < 1.0)) {
    throw ConfigError("dim_level", "dim_level must lie in (0, 1)");
  }
  c.min_block_hours = positive_int(raw, "min_block_hours", c.min_block_hours);
  c.urgency_cuts = cut_points(raw, "urgency_cuts", c.urgency_cuts);
  if (!(c.urgency_cuts[0] > 0.0 && c.urgency_cuts[1] < 1.0)) {
    throw ConfigError("urgency_cuts", "urgency_cuts must lie in (0, 1)");
  }

  if (raw.contains("holidays")) {
    const auto& v = raw.at("holidays");
    if (!v.is_array()) throw ConfigError("holidays", "holidays must be an array of dates");
    std::set<Date> seen;
    for (const auto& d : v) {
      if (!d.is_string()) throw ConfigError("holidays", "holidays must be an array of dates");
      try {
        seen.insert(parse_date(d.get<std::string>()));
      } catch (const Error& e) {
        throw ConfigError("holidays", std::string("holidays: ") + e.what());
      }
    }
    c.holidays.assign(seen.begin(), seen.end());
  }

  if (raw.contains("timezone")) {
    if (!raw.at("timezone").is_string()) throw ConfigError("timezone", "timezone must be a string");
    c.timezone = raw.at("timezone").get<std::string>();
  }
  make_calendar(c);  // rejects unknown zones
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("", path + ": " + e.what());
  }
  return validate_config(doc);
}

json to_json(const Config& c) {
  auto holidays = json::array();
  for (const auto& d : c.holidays) holidays.push_back(format_date(d));
  return {{"cadence", c.cadence},
          {"night_window", {c.night_window.start, c.night_window.end}},
          {"speeding_ratio_threshold", c.speeding_ratio_threshold},
          {"frequency_horizon_days", c.frequency_horizon_days},
          {"frequency_bands", {c.frequency_bands[0], c.frequency_bands[1]}},
          {"dedup_radius_m", c.dedup_radius_m},
          {"max_gap_hours", c.max_gap_hours},
          {"outlier_k", c.outlier_k},
          {"dim_level", c.dim_level},
          {"min_block_hours", c.min_block_hours},
          {"urgency_cuts", {c.urgency_cuts[0], c.urgency_cuts[1]}},
          {"holidays", holidays},
          {"timezone", c.timezone}};
}

LocalCalendar make_calendar(const Config& c) {
  return LocalCalendar(c.timezone, c.holidays);
}

}  // namespace icms
