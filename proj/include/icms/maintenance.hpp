#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "icms/config.hpp"
#include "icms/types.hpp"

namespace icms::maintenance {

enum class Urgency { routine, elevated, urgent };
enum class IssueStatus { open, acknowledged, resolved };
enum class Transition { acknowledge, resolve };

std::string_view to_string(Urgency u);
std::optional<Urgency> urgency_from(std::string_view s);
std::string_view to_string(IssueStatus s);
std::optional<IssueStatus> issue_status_from(std::string_view s);
std::optional<Transition> transition_from(std::string_view s);

// routine below cuts[0], elevated in [cuts[0], cuts[1]), urgent from cuts[1].
Urgency urgency_band(double confidence, const std::array<double, 2>& cuts);

struct MaintenanceIssue {
  std::uint64_t issue_id = 0;
  DetectionClass detection_class = DetectionClass::pothole;
  LatLon location;  // of the first detection
  double max_confidence = 0.0;
  long detection_count = 0;
  Instant first_seen;
  Instant last_seen;
  IssueStatus status = IssueStatus::open;
  Urgency urgency = Urgency::routine;
  std::vector<std::string> image_refs;

  bool operator==(const MaintenanceIssue&) const = default;
};

struct IngestOutcome {
  std::uint64_t issue_id = 0;
  bool created = false;
};

struct IssueFilter {
  std::optional<IssueStatus> status;
  std::optional<DetectionClass> detection_class;
  std::optional<Urgency> min_urgency;
};

// Single-writer state machine over deduplicated issues. Callers serialise
// mutations; const members are safe to call on a snapshot copy.
class Registry {
 public:
  Registry() = default;
  Registry(double dedup_radius_m, std::array<double, 2> urgency_cuts)
      : radius_m_(dedup_radius_m), cuts_(urgency_cuts) {}
  explicit Registry(const Config& c) : Registry(c.dedup_radius_m, c.urgency_cuts) {}

  // Merges into the nearest non-resolved issue of the same class within the
  // dedup radius (ties: oldest), otherwise opens a new issue.
  IngestOutcome ingest(const DetectionEvent& event);

  const MaintenanceIssue& transition(std::uint64_t issue_id, Transition action);
  // Throws exactly what transition() would, without changing anything.
  void check_transition(std::uint64_t issue_id, Transition action) const;

  // Sorted by urgency desc, max_confidence desc, last_seen desc, id asc.
  std::vector<MaintenanceIssue> list(const IssueFilter& filter = {}) const;

  const MaintenanceIssue* find(std::uint64_t issue_id) const;
  const std::vector<MaintenanceIssue>& issues() const { return issues_; }
  std::size_t size() const { return issues_.size(); }

 private:
  double radius_m_ = 25.0;
  std::array<double, 2> cuts_{0.5, 0.8};
  std::vector<MaintenanceIssue> issues_;  // creation order, id = index + 1
};

nlohmann::json to_json(const MaintenanceIssue& issue);
// One issue per line.
std::string export_jsonl(const std::vector<MaintenanceIssue>& issues);
nlohmann::json to_geojson(const std::vector<MaintenanceIssue>& issues);

}  // namespace icms::maintenance
