#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "icms/types.hpp"

namespace icms::ingest {

enum class FeedKind { radar, pedestrian, detection };

std::string_view to_string(FeedKind k);
std::optional<FeedKind> feed_kind_from(std::string_view s);

using Event = std::variant<RadarReading, PedestrianCount, DetectionEvent>;
using SensorEvent = std::variant<RadarReading, PedestrianCount>;

// One JSONL object -> typed event. Throws ParseError (with byte offset),
// Error{Schema} naming a missing/mistyped field, or Error{Validation}.
Event parse_record(FeedKind kind, std::string_view line);
Event parse_record(FeedKind kind, const nlohmann::json& obj);
inline Event parse_record(FeedKind kind, const char* line) { return parse_record(kind, std::string_view(line)); }
inline Event parse_record(FeedKind kind, const std::string& line) {
  return parse_record(kind, std::string_view(line));
}

RadarReading parse_radar(std::string_view line);
PedestrianCount parse_pedestrian(std::string_view line);
DetectionEvent parse_detection(std::string_view line);

nlohmann::json to_json(const RadarReading& r);
nlohmann::json to_json(const PedestrianCount& p);
nlohmann::json to_json(const DetectionEvent& d);
nlohmann::json to_json(const Event& e);

// Splits a request body or file into records: a JSON array of objects, or
// JSON Lines (blank lines skipped). Errors carry the 1-based record line.
std::vector<nlohmann::json> split_feed(std::string_view body);

// Parses every record of a feed; all or nothing.
std::vector<Event> parse_feed(FeedKind kind, std::string_view body);

// Keeps light and heavy vehicles, order preserved.
std::vector<RadarReading> filter_vehicle_classes(std::span<const RadarReading> readings);

template <typename E>
using PostStreamBatch = std::map<std::string, std::vector<E>, std::less<>>;

template <typename E>
struct Segregated {
  PostStreamBatch<E> batch;
  std::vector<E> dead_letter;  // events naming a post_id absent from the registry
};

Segregated<RadarReading> segregate_by_post(std::span<const RadarReading> events, const PostRegistry& posts);
Segregated<PedestrianCount> segregate_by_post(std::span<const PedestrianCount> events,
                                              const PostRegistry& posts);

struct SegregatedFeeds {
  PostStreamBatch<RadarReading> radar;
  PostStreamBatch<PedestrianCount> pedestrians;
  std::vector<SensorEvent> dead_letter;
};

SegregatedFeeds segregate_by_post(std::span<const SensorEvent> events, const PostRegistry& posts);

}  // namespace icms::ingest
