#include "icms/ingestion.hpp"

#include <algorithm>
#include <climits>
#include <cmath>

#include "icms/error.hpp"

namespace icms::ingest {
namespace {

using nlohmann::json;

const json& field(const json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end() || it->is_null()) {
    throw Error(ErrorCode::Schema, std::string("missing required field '") + name + "'");
  }
  return *it;
}

std::string string_field(const json& obj, const char* name) {
  const auto& v = field(obj, name);
  if (!v.is_string()) throw Error(ErrorCode::Schema, std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

double number_field(const json& obj, const char* name) {
  const auto& v = field(obj, name);
  if (!v.is_number()) throw Error(ErrorCode::Schema, std::string("field '") + name + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw Error(ErrorCode::Validation, std::string(name) + " must be finite");
  return d;
}

json parse_object(std::string_view line) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), e.byte);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("unrepresentable JSON: ") + e.what());
  }
  if (!obj.is_object()) throw Error(ErrorCode::Schema, "record must be a JSON object");
  return obj;
}

RadarReading radar_from(const json& obj) {
  RadarReading r;
  r.post_id = string_field(obj, "post_id");
  r.timestamp = parse_instant(string_field(obj, "ts"));
  r.object_class = object_class_from(string_field(obj, "class"));
  r.speed = number_field(obj, "speed_kmh");
  if (r.speed < 0) throw Error(ErrorCode::Validation, "speed must be ≥ 0");
  return r;
}

PedestrianCount pedestrian_from(const json& obj) {
  PedestrianCount p;
  p.post_id = string_field(obj, "post_id");
  p.timestamp = parse_instant(string_field(obj, "ts"));
  const auto& c = field(obj, "count");
  if (!c.is_number_integer()) throw Error(ErrorCode::Schema, "field 'count' must be an integer");
  if (c.is_number_unsigned() && c.get<std::uint64_t>() > static_cast<std::uint64_t>(LONG_MAX)) {
    throw Error(ErrorCode::Validation, "count out of range");
  }
  p.count = c.get<long>();
  if (p.count < 0) throw Error(ErrorCode::Validation, "count must be ≥ 0");
  return p;
}

DetectionEvent detection_from(const json& obj) {
  DetectionEvent d;
  d.source_id = string_field(obj, "source_id");
  d.timestamp = parse_instant(string_field(obj, "ts"));
  const auto cls = string_field(obj, "class");
  const auto parsed = detection_class_from(cls);
  if (!parsed) throw Error(ErrorCode::Validation, "class must be one of pothole, flood, fire (got '" + cls + "')");
  d.detection_class = *parsed;
  d.confidence = number_field(obj, "confidence");
  if (d.confidence < 0.0 || d.confidence > 1.0) {
    throw Error(ErrorCode::Validation, "confidence must lie in [0, 1]");
  }
  d.location = {number_field(obj, "lat"), number_field(obj, "lon")};
  if (!valid(d.location)) throw Error(ErrorCode::Validation, "lat/lon out of range");
  if (auto it = obj.find("image_ref"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorCode::Schema, "field 'image_ref' must be a string");
    d.image_ref = it->get<std::string>();
  }
  return d;
}

template <typename E>
void sort_streams(PostStreamBatch<E>& batch) {
  for (auto& [_, list] : batch) {
    std::stable_sort(list.begin(), list.end(),
                     [](const E& a, const E& b) { return a.timestamp < b.timestamp; });
  }
}

template <typename E>
Segregated<E> segregate(std::span<const E> events, const PostRegistry& posts) {
  Segregated<E> out;
  for (const auto& e : events) {
    if (posts.contains(e.post_id)) {
      auto it = out.batch.find(e.post_id);
      if (it == out.batch.end()) it = out.batch.emplace(e.post_id, std::vector<E>{}).first;
      it->second.push_back(e);
    } else {
      out.dead_letter.push_back(e);
    }
  }
  sort_streams(out.batch);
  return out;
}

}  // namespace

std::string_view to_string(FeedKind k) {
  switch (k) {
    case FeedKind::radar: return "radar";
    case FeedKind::pedestrian: return "pedestrian";
    case FeedKind::detection: return "detection";
  }
  return "radar";
}

std::optional<FeedKind> feed_kind_from(std::string_view s) {
  if (s == "radar") return FeedKind::radar;
  if (s == "pedestrian") return FeedKind::pedestrian;
  if (s == "detection") return FeedKind::detection;
  return std::nullopt;
}

Event parse_record(FeedKind kind, const json& obj) {
  if (!obj.is_object()) throw Error(ErrorCode::Schema, "record must be a JSON object");
  switch (kind) {
    case FeedKind::radar: return radar_from(obj);
    case FeedKind::pedestrian: return pedestrian_from(obj);
    case FeedKind::detection: return detection_from(obj);
  }
  throw Error(ErrorCode::Argument, "unknown feed kind");
}

Event parse_record(FeedKind kind, std::string_view line) { return parse_record(kind, parse_object(line)); }

RadarReading parse_radar(std::string_view line) { return radar_from(parse_object(line)); }
PedestrianCount parse_pedestrian(std::string_view line) { return pedestrian_from(parse_object(line)); }
DetectionEvent parse_detection(std::string_view line) { return detection_from(parse_object(line)); }

json to_json(const RadarReading& r) {
  return {{"post_id", r.post_id},
          {"ts", format_instant(r.timestamp)},
          {"class", to_string(r.object_class)},
          {"speed_kmh", r.speed}};
}

json to_json(const PedestrianCount& p) {
  return {{"post_id", p.post_id}, {"ts", format_instant(p.timestamp)}, {"count", p.count}};
}

json to_json(const DetectionEvent& d) {
  json j = {{"source_id", d.source_id},
            {"ts", format_instant(d.timestamp)},
            {"class", to_string(d.detection_class)},
            {"confidence", d.confidence},
            {"lat", d.location.lat},
            {"lon", d.location.lon}};
  if (d.image_ref) j["image_ref"] = *d.image_ref;
  return j;
}

json to_json(const Event& e) {
  return std::visit([](const auto& v) { return to_json(v); }, e);
}

std::vector<json> split_feed(std::string_view body) {
  std::size_t first = body.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};

  std::vector<json> records;
  if (body[first] == '[') {
    json arr;
    try {
      arr = json::parse(body);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON array: ") + e.what(), e.byte);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Parse, std::string("unrepresentable JSON: ") + e.what());
    }
    for (auto& item : arr) records.push_back(std::move(item));
    return records;
  }

  std::size_t pos = 0;
  int line_no = 0;
  while (pos < body.size()) {
    std::size_t end = body.find('\n', pos);
    if (end == std::string_view::npos) end = body.size();
    std::string_view line = body.substr(pos, end - pos);
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
      try {
        records.push_back(json::parse(line));
      } catch (const json::parse_error& e) {
        throw ParseError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what(), pos + e.byte - 1);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": unrepresentable JSON: " + e.what());
      }
    } else {
      records.emplace_back();  // placeholder keeps line numbers aligned
    }
    pos = end + 1;
  }
  std::erase_if(records, [](const json& j) { return j.is_null(); });
  return records;
}

std::vector<Event> parse_feed(FeedKind kind, std::string_view body) {
  std::vector<Event> out;
  const auto records = split_feed(body);
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      out.push_back(parse_record(kind, records[i]));
    } catch (const Error& e) {
      throw Error(e.code(), "record " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

std::vector<RadarReading> filter_vehicle_classes(std::span<const RadarReading> readings) {
  std::vector<RadarReading> out;
  out.reserve(readings.size());
  std::copy_if(readings.begin(), readings.end(), std::back_inserter(out), [](const RadarReading& r) {
    return r.object_class == ObjectClass::light_vehicle || r.object_class == ObjectClass::heavy_vehicle;
  });
  return out;
}

Segregated<RadarReading> segregate_by_post(std::span<const RadarReading> events, const PostRegistry& posts) {
  return segregate(events, posts);
}

Segregated<PedestrianCount> segregate_by_post(std::span<const PedestrianCount> events,
                                              const PostRegistry& posts) {
  return segregate(events, posts);
}

SegregatedFeeds segregate_by_post(std::span<const SensorEvent> events, const PostRegistry& posts) {
  SegregatedFeeds out;
  for (const auto& ev : events) {
    std::visit(
        [&](const auto& e) {
          using E = std::decay_t<decltype(e)>;
          if (!posts.contains(e.post_id)) {
            out.dead_letter.push_back(e);
            return;
          }
          if constexpr (std::is_same_v<E, RadarReading>) {
            out.radar[e.post_id].push_back(e);
          } else {
            out.pedestrians[e.post_id].push_back(e);
          }
        },
        ev);
  }
  sort_streams(out.radar);
  sort_streams(out.pedestrians);
  return out;
}

}  // namespace icms::ingest
