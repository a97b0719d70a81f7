#include "icms/safety/engine.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "icms/error.hpp"

namespace icms::safety {
namespace {

using nlohmann::json;

bool is_vehicle(const RadarReading& r) {
  return r.object_class == ObjectClass::light_vehicle || r.object_class == ObjectClass::heavy_vehicle;
}

struct WindowBucket {
  std::vector<RadarReading> vehicles;
  std::vector<PedestrianCount> pedestrians;
};

}  // namespace

Instant window_start(Instant ts, int cadence_min, const LocalCalendar& cal) {
  const int offset = (cal.minute(ts) % cadence_min) * 60 + cal.second(ts);
  return ts - std::chrono::seconds{offset};
}

WindowFeatures compute_window_features(std::span<const RadarReading> vehicles,
                                       std::span<const PedestrianCount> pedestrians,
                                       const SmartPost& post, Instant start, int cadence_min,
                                       const LocalCalendar& cal) {
  const Instant end = start + std::chrono::minutes{cadence_min};
  auto check = [&](const std::string& post_id, Instant ts) {
    if (post_id != post.post_id) {
      throw Error(ErrorCode::Contract, "event for post " + post_id + " passed to window of " + post.post_id);
    }
    if (ts < start || ts >= end) {
      throw Error(ErrorCode::Contract, "event at " + format_instant(ts) + " outside window starting " +
                                           format_instant(start));
    }
  };

  WindowFeatures f;
  f.post_id = post.post_id;
  f.window_start = start;
  f.hour_of_day = cal.hour(start);

  double sum = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  for (const auto& r : vehicles) {
    check(r.post_id, r.timestamp);
    if (!is_vehicle(r)) throw Error(ErrorCode::Contract, "non-vehicle radar reading in vehicle list");
    lo = f.vehicle_count == 0 ? r.speed : std::min(lo, r.speed);
    hi = f.vehicle_count == 0 ? r.speed : std::max(hi, r.speed);
    sum += r.speed;
    ++f.vehicle_count;
    if (r.speed > post.speed_limit) ++f.speeding_count;
  }
  for (const auto& p : pedestrians) {
    check(p.post_id, p.timestamp);
    f.pedestrian_count += p.count;
  }
  if (f.vehicle_count > 0) {
    // rounding in the running sum must not push the mean past the extremes
    f.avg_speed = std::clamp(sum / static_cast<double>(f.vehicle_count), lo, hi);
  }
  return f;
}

std::vector<WindowFeatures> compute_features(const ingest::PostStreamBatch<RadarReading>& radar,
                                             const ingest::PostStreamBatch<PedestrianCount>& pedestrians,
                                             const PostRegistry& posts, int cadence_min,
                                             const LocalCalendar& cal) {
  std::set<std::string> post_ids;
  for (const auto& [id, _] : radar) post_ids.insert(id);
  for (const auto& [id, _] : pedestrians) post_ids.insert(id);

  std::vector<WindowFeatures> out;
  for (const auto& id : post_ids) {
    const SmartPost* post = posts.find(id);
    if (post == nullptr) continue;
    std::map<Instant, WindowBucket> buckets;
    if (auto it = radar.find(id); it != radar.end()) {
      for (const auto& r : it->second) {
        if (is_vehicle(r)) buckets[window_start(r.timestamp, cadence_min, cal)].vehicles.push_back(r);
      }
    }
    if (auto it = pedestrians.find(id); it != pedestrians.end()) {
      for (const auto& p : it->second) {
        buckets[window_start(p.timestamp, cadence_min, cal)].pedestrians.push_back(p);
      }
    }
    for (const auto& [start, b] : buckets) {
      out.push_back(compute_window_features(b.vehicles, b.pedestrians, *post, start, cadence_min, cal));
    }
  }
  std::sort(out.begin(), out.end(), [](const WindowFeatures& a, const WindowFeatures& b) {
    return std::tie(a.window_start, a.post_id) < std::tie(b.window_start, b.post_id);
  });
  return out;
}

std::vector<Violation> evaluate_windows(std::span<const Rule> rules, std::span<const WindowFeatures> features) {
  std::vector<const Rule*> active;
  for (const auto& r : rules) {
    if (r.enabled) active.push_back(&r);
  }
  std::sort(active.begin(), active.end(), [](const Rule* a, const Rule* b) { return a->rule_id < b->rule_id; });

  std::vector<Violation> out;
  for (const auto& f : features) {
    for (const Rule* r : active) {
      if (auto sev = eval_rule(*r, f)) {
        out.push_back(Violation{r->rule_id, f.post_id, f.window_start, *sev, f});
      }
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) {
    return std::tie(a.window_start, a.rule_id, a.post_id) < std::tie(b.window_start, b.rule_id, b.post_id);
  });
  return out;
}

std::string_view to_string(FrequencyBand b) {
  switch (b) {
    case FrequencyBand::low: return "low";
    case FrequencyBand::medium: return "medium";
    case FrequencyBand::high: return "high";
  }
  return "low";
}

FrequencyBand frequency_band(long count, const std::array<double, 2>& bands) {
  const auto c = static_cast<double>(count);
  if (c < bands[0]) return FrequencyBand::low;
  if (c < bands[1]) return FrequencyBand::medium;
  return FrequencyBand::high;
}

FrequencyLevel frequency_level(std::span<const Violation> violations, const std::string& post_id,
                               std::uint64_t rule_id, Instant now, const Config& config) {
  const Instant since = now - std::chrono::days{config.frequency_horizon_days};
  FrequencyLevel level{post_id, rule_id, 0, FrequencyBand::low};
  for (const auto& v : violations) {
    if (v.post_id == post_id && v.rule_id == rule_id && v.window_start > since && v.window_start <= now) {
      ++level.count;
    }
  }
  level.band = frequency_band(level.count, config.frequency_bands);
  return level;
}

HourlyRatio hourly_speeding_ratio(const std::string& street_id, Date from, Date to,
                                  std::span<const WindowFeatures> features, const PostRegistry& posts,
                                  const LocalCalendar& cal, double threshold) {
  if (to < from) throw Error(ErrorCode::Argument, "date range is empty");
  const auto on_street = posts.on_street(street_id);
  if (on_street.empty()) throw Error(ErrorCode::NotFound, "unknown street_id '" + street_id + "'");
  std::set<std::string, std::less<>> ids;
  for (const auto& p : on_street) ids.insert(p.post_id);

  HourlyRatio r;
  r.street_id = street_id;
  r.threshold = threshold;
  for (const auto& f : features) {
    if (!ids.contains(f.post_id)) continue;
    const Date d = cal.date(f.window_start);
    if (d < from || to < d) continue;
    r.speeding[f.hour_of_day] += f.speeding_count;
    r.pedestrians[f.hour_of_day] += f.pedestrian_count;
  }
  for (int h = 0; h < 24; ++h) {
    r.ratio[h] = static_cast<double>(r.speeding[h]) / static_cast<double>(std::max(r.pedestrians[h], 1L));
    r.exceeded[h] = r.ratio[h] > threshold;
  }
  return r;
}

json to_json(const WindowFeatures& f) {
  return {{"post_id", f.post_id},
          {"window_start", format_instant(f.window_start)},
          {"avg_speed", f.avg_speed ? json(*f.avg_speed) : json(nullptr)},
          {"vehicle_count", f.vehicle_count},
          {"speeding_count", f.speeding_count},
          {"pedestrian_count", f.pedestrian_count},
          {"hour_of_day", f.hour_of_day}};
}

json to_json(const Violation& v) {
  return {{"rule_id", v.rule_id},
          {"post_id", v.post_id},
          {"window_start", format_instant(v.window_start)},
          {"severity", to_string(v.severity)},
          {"features", to_json(v.feature_snapshot)}};
}

json to_json(const FrequencyLevel& f) {
  return {{"post_id", f.post_id}, {"rule_id", f.rule_id}, {"count", f.count}, {"band", to_string(f.band)}};
}

json to_json(const HourlyRatio& r) {
  json hours = json::array();
  for (int h = 0; h < 24; ++h) {
    hours.push_back({{"hour", h},
                     {"speeding", r.speeding[h]},
                     {"pedestrians", r.pedestrians[h]},
                     {"ratio", r.ratio[h]},
                     {"exceeded", r.exceeded[h]}});
  }
  return {{"street_id", r.street_id}, {"threshold", r.threshold}, {"hours", hours}};
}

json to_json(const Rule& r) {
  return {{"id", r.rule_id},
          {"name", r.name},
          {"text", r.text},
          {"pretty", pretty_print(r.parsed)},
          {"severity", to_string(r.severity())},
          {"enabled", r.enabled}};
}

}  // namespace icms::safety
