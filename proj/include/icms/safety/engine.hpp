#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "icms/config.hpp"
#include "icms/ingestion.hpp"
#include "icms/safety/features.hpp"
#include "icms/safety/rule.hpp"
#include "icms/types.hpp"

namespace icms::safety {

// Largest cadence-grid instant <= ts. The grid is anchored at local
// midnight; cadence must divide 60 so every local hour starts a window.
Instant window_start(Instant ts, int cadence_min, const LocalCalendar& cal);

// All events must belong to post and fall inside
// [start, start + cadence); anything else is an Error{Contract}.
WindowFeatures compute_window_features(std::span<const RadarReading> vehicles,
                                       std::span<const PedestrianCount> pedestrians,
                                       const SmartPost& post, Instant start, int cadence_min,
                                       const LocalCalendar& cal);

// Features for every (post, window) holding at least one vehicle or
// pedestrian reading, ordered by (window_start, post_id). Radar readings are
// vehicle-class filtered here.
std::vector<WindowFeatures> compute_features(const ingest::PostStreamBatch<RadarReading>& radar,
                                             const ingest::PostStreamBatch<PedestrianCount>& pedestrians,
                                             const PostRegistry& posts, int cadence_min,
                                             const LocalCalendar& cal);

struct Violation {
  std::uint64_t rule_id = 0;
  std::string post_id;
  Instant window_start;
  Severity severity = Severity::warning;
  WindowFeatures feature_snapshot;

  bool operator==(const Violation&) const = default;
};

// One violation per firing (enabled rule, window), ordered by
// (window_start, rule_id, post_id).
std::vector<Violation> evaluate_windows(std::span<const Rule> rules, std::span<const WindowFeatures> features);

enum class FrequencyBand { low, medium, high };
std::string_view to_string(FrequencyBand b);

struct FrequencyLevel {
  std::string post_id;
  std::uint64_t rule_id = 0;
  long count = 0;
  FrequencyBand band = FrequencyBand::low;

  bool operator==(const FrequencyLevel&) const = default;
};

// Counts (post, rule) violations with window_start in (now - horizon, now].
FrequencyLevel frequency_level(std::span<const Violation> violations, const std::string& post_id,
                               std::uint64_t rule_id, Instant now, const Config& config);

FrequencyBand frequency_band(long count, const std::array<double, 2>& bands);

struct HourlyRatio {
  std::string street_id;
  double threshold = 0.0;
  std::array<long, 24> speeding{};
  std::array<long, 24> pedestrians{};
  std::array<double, 24> ratio{};  // speeding / max(pedestrians, 1)
  std::array<bool, 24> exceeded{};
};

// Aggregates all posts on the street over local dates [from, to].
HourlyRatio hourly_speeding_ratio(const std::string& street_id, Date from, Date to,
                                  std::span<const WindowFeatures> features, const PostRegistry& posts,
                                  const LocalCalendar& cal, double threshold);

nlohmann::json to_json(const WindowFeatures& f);
nlohmann::json to_json(const Violation& v);
nlohmann::json to_json(const FrequencyLevel& f);
nlohmann::json to_json(const HourlyRatio& r);
nlohmann::json to_json(const Rule& r);

}  // namespace icms::safety
