#include "icms/types.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "icms/error.hpp"

namespace icms {

std::string_view to_string(ObjectClass c) {
  switch (c) {
    case ObjectClass::light_vehicle: return "light_vehicle";
    case ObjectClass::heavy_vehicle: return "heavy_vehicle";
    case ObjectClass::other: return "other";
  }
  return "other";
}

ObjectClass object_class_from(std::string_view s) {
  if (s == "light_vehicle") return ObjectClass::light_vehicle;
  if (s == "heavy_vehicle") return ObjectClass::heavy_vehicle;
  return ObjectClass::other;
}

std::string_view to_string(DetectionClass c) {
  switch (c) {
    case DetectionClass::pothole: return "pothole";
    case DetectionClass::flood: return "flood";
    case DetectionClass::fire: return "fire";
  }
  return "pothole";
}

std::optional<DetectionClass> detection_class_from(std::string_view s) {
  if (s == "pothole") return DetectionClass::pothole;
  if (s == "flood") return DetectionClass::flood;
  if (s == "fire") return DetectionClass::fire;
  return std::nullopt;
}

std::string_view to_string(Severity s) { return s == Severity::warning ? "warning" : "danger"; }

std::optional<Severity> severity_from(std::string_view s) {
  if (s == "warning") return Severity::warning;
  if (s == "danger") return Severity::danger;
  return std::nullopt;
}

PostRegistry::PostRegistry(std::vector<SmartPost> posts) : posts_(std::move(posts)) {
  std::sort(posts_.begin(), posts_.end(),
            [](const SmartPost& a, const SmartPost& b) { return a.post_id < b.post_id; });
  for (std::size_t i = 0; i < posts_.size(); ++i) {
    if (!index_.emplace(posts_[i].post_id, i).second) {
      throw Error(ErrorCode::Validation, "duplicate post_id '" + posts_[i].post_id + "'");
    }
  }
}

const SmartPost* PostRegistry::find(std::string_view post_id) const {
  auto it = index_.find(post_id);
  return it == index_.end() ? nullptr : &posts_[it->second];
}

std::vector<SmartPost> PostRegistry::on_street(std::string_view street_id) const {
  std::vector<SmartPost> out;
  for (const auto& p : posts_) {
    if (p.street_id == street_id) out.push_back(p);
  }
  return out;
}

std::vector<std::string> PostRegistry::streets() const {
  std::set<std::string> s;
  for (const auto& p : posts_) s.insert(p.street_id);
  return {s.begin(), s.end()};
}

nlohmann::json to_json(const SmartPost& p) {
  return {{"post_id", p.post_id},       {"street_id", p.street_id},   {"lat", p.location.lat},
          {"lon", p.location.lon},       {"speed_limit", p.speed_limit}, {"lamp_count", p.lamp_count},
          {"lamp_wattage", p.lamp_wattage}, {"dimmable", p.dimmable}};
}

SmartPost smart_post_from_json(const nlohmann::json& j) {
  auto require = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw Error(ErrorCode::Schema, std::string("post: missing field '") + key + "'");
    return j.at(key);
  };
  SmartPost p;
  try {
    p.post_id = require("post_id").get<std::string>();
    p.street_id = require("street_id").get<std::string>();
    p.location = {require("lat").get<double>(), require("lon").get<double>()};
    p.speed_limit = require("speed_limit").get<int>();
    p.lamp_count = j.value("lamp_count", 0);
    p.lamp_wattage = j.value("lamp_wattage", 0.0);
    p.dimmable = j.value("dimmable", false);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("post: ") + e.what());
  }
  if (!valid(p.location)) throw Error(ErrorCode::Validation, "post " + p.post_id + ": coordinates out of range");
  if (p.speed_limit <= 0) throw Error(ErrorCode::Validation, "post " + p.post_id + ": speed_limit must be > 0");
  if (p.lamp_count < 0) throw Error(ErrorCode::Validation, "post " + p.post_id + ": lamp_count must be >= 0");
  if (p.lamp_wattage < 0) throw Error(ErrorCode::Validation, "post " + p.post_id + ": lamp_wattage must be >= 0");
  return p;
}

PostRegistry load_posts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open posts file " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, path + ": " + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorCode::Schema, path + ": expected a JSON array of posts");
  std::vector<SmartPost> posts;
  for (const auto& j : doc) posts.push_back(smart_post_from_json(j));
  return PostRegistry(std::move(posts));
}

nlohmann::json to_json(const PostRegistry& posts) {
  auto arr = nlohmann::json::array();
  for (const auto& p : posts.all()) arr.push_back(to_json(p));
  return arr;
}

}  // namespace icms
