#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "icms/geo.hpp"
#include "icms/time.hpp"

namespace icms {

struct SmartPost {
  std::string post_id;
  std::string street_id;
  LatLon location;
  int speed_limit = 50;  // km/h
  int lamp_count = 0;
  double lamp_wattage = 0.0;  // W per lamp
  bool dimmable = false;

  bool operator==(const SmartPost&) const = default;
};

enum class ObjectClass { light_vehicle, heavy_vehicle, other };

std::string_view to_string(ObjectClass c);
// Anything outside the two vehicle classes collapses to other.
ObjectClass object_class_from(std::string_view s);

struct RadarReading {
  std::string post_id;
  Instant timestamp;
  ObjectClass object_class = ObjectClass::other;
  double speed = 0.0;  // km/h

  bool operator==(const RadarReading&) const = default;
};

struct PedestrianCount {
  std::string post_id;
  Instant timestamp;
  // pedestrians observed since the post's previous reading
  long count = 0;

  bool operator==(const PedestrianCount&) const = default;
};

enum class DetectionClass { pothole, flood, fire };

std::string_view to_string(DetectionClass c);
std::optional<DetectionClass> detection_class_from(std::string_view s);

struct DetectionEvent {
  std::string source_id;
  Instant timestamp;
  DetectionClass detection_class = DetectionClass::pothole;
  double confidence = 0.0;
  LatLon location;
  std::optional<std::string> image_ref;

  bool operator==(const DetectionEvent&) const = default;
};

enum class Severity { warning, danger };

std::string_view to_string(Severity s);
std::optional<Severity> severity_from(std::string_view s);

// Known smart posts keyed by post_id. Immutable once built.
class PostRegistry {
 public:
  PostRegistry() = default;
  explicit PostRegistry(std::vector<SmartPost> posts);

  const SmartPost* find(std::string_view post_id) const;
  bool contains(std::string_view post_id) const { return find(post_id) != nullptr; }
  std::vector<SmartPost> on_street(std::string_view street_id) const;
  std::vector<std::string> streets() const;
  const std::vector<SmartPost>& all() const { return posts_; }
  bool empty() const { return posts_.empty(); }

 private:
  std::vector<SmartPost> posts_;  // sorted by post_id
  std::map<std::string, std::size_t, std::less<>> index_;
};

nlohmann::json to_json(const SmartPost& p);
SmartPost smart_post_from_json(const nlohmann::json& j);
PostRegistry load_posts(const std::string& path);
nlohmann::json to_json(const PostRegistry& posts);

}  // namespace icms
