#include "icms/maintenance.hpp"

#include <algorithm>
#include <tuple>

#include "icms/error.hpp"

namespace icms::maintenance {

using nlohmann::json;

std::string_view to_string(Urgency u) {
  switch (u) {
    case Urgency::routine: return "routine";
    case Urgency::elevated: return "elevated";
    case Urgency::urgent: return "urgent";
  }
  return "routine";
}

std::optional<Urgency> urgency_from(std::string_view s) {
  if (s == "routine") return Urgency::routine;
  if (s == "elevated") return Urgency::elevated;
  if (s == "urgent") return Urgency::urgent;
  return std::nullopt;
}

std::string_view to_string(IssueStatus s) {
  switch (s) {
    case IssueStatus::open: return "open";
    case IssueStatus::acknowledged: return "acknowledged";
    case IssueStatus::resolved: return "resolved";
  }
  return "open";
}

std::optional<IssueStatus> issue_status_from(std::string_view s) {
  if (s == "open") return IssueStatus::open;
  if (s == "acknowledged") return IssueStatus::acknowledged;
  if (s == "resolved") return IssueStatus::resolved;
  return std::nullopt;
}

std::optional<Transition> transition_from(std::string_view s) {
  if (s == "acknowledge") return Transition::acknowledge;
  if (s == "resolve") return Transition::resolve;
  return std::nullopt;
}

Urgency urgency_band(double confidence, const std::array<double, 2>& cuts) {
  if (confidence < cuts[0]) return Urgency::routine;
  if (confidence < cuts[1]) return Urgency::elevated;
  return Urgency::urgent;
}

IngestOutcome Registry::ingest(const DetectionEvent& event) {
  if (!(event.confidence >= 0.0 && event.confidence <= 1.0)) {
    throw Error(ErrorCode::Validation, "confidence must lie in [0, 1]");
  }
  if (!valid(event.location)) throw Error(ErrorCode::Validation, "lat/lon out of range");

  MaintenanceIssue* best = nullptr;
  double best_distance = 0.0;
  for (auto& issue : issues_) {
    if (issue.status == IssueStatus::resolved || issue.detection_class != event.detection_class) continue;
    const double d = haversine_m(issue.location, event.location);
    if (d > radius_m_) continue;
    // issues_ is in creation order, so strict < keeps the oldest on ties
    if (best == nullptr || d < best_distance) {
      best = &issue;
      best_distance = d;
    }
  }

  if (best != nullptr) {
    best->max_confidence = std::max(best->max_confidence, event.confidence);
    best->last_seen = std::max(best->last_seen, event.timestamp);
    best->first_seen = std::min(best->first_seen, event.timestamp);
    ++best->detection_count;
    if (event.image_ref) best->image_refs.push_back(*event.image_ref);
    best->urgency = urgency_band(best->max_confidence, cuts_);
    return {best->issue_id, false};
  }

  MaintenanceIssue issue;
  issue.issue_id = issues_.size() + 1;
  issue.detection_class = event.detection_class;
  issue.location = event.location;
  issue.max_confidence = event.confidence;
  issue.detection_count = 1;
  issue.first_seen = event.timestamp;
  issue.last_seen = event.timestamp;
  issue.urgency = urgency_band(event.confidence, cuts_);
  if (event.image_ref) issue.image_refs.push_back(*event.image_ref);
  issues_.push_back(std::move(issue));
  return {issues_.back().issue_id, true};
}

void Registry::check_transition(std::uint64_t issue_id, Transition action) const {
  const MaintenanceIssue* issue = find(issue_id);
  if (issue == nullptr) throw Error(ErrorCode::NotFound, "unknown issue " + std::to_string(issue_id));
  const IssueStatus from = issue->status;
  const IssueStatus to = action == Transition::acknowledge ? IssueStatus::acknowledged : IssueStatus::resolved;
  const bool legal = (from == IssueStatus::open && to == IssueStatus::acknowledged) ||
                     (from == IssueStatus::acknowledged && to == IssueStatus::resolved);
  if (!legal) {
    throw Error(ErrorCode::State, "issue " + std::to_string(issue_id) + " cannot move from " +
                                      std::string(to_string(from)) + " to " + std::string(to_string(to)));
  }
}

const MaintenanceIssue& Registry::transition(std::uint64_t issue_id, Transition action) {
  check_transition(issue_id, action);
  MaintenanceIssue& issue = issues_[issue_id - 1];
  issue.status = action == Transition::acknowledge ? IssueStatus::acknowledged : IssueStatus::resolved;
  return issue;
}

std::vector<MaintenanceIssue> Registry::list(const IssueFilter& filter) const {
  std::vector<MaintenanceIssue> out;
  for (const auto& i : issues_) {
    if (filter.status && i.status != *filter.status) continue;
    if (filter.detection_class && i.detection_class != *filter.detection_class) continue;
    if (filter.min_urgency && i.urgency < *filter.min_urgency) continue;
    out.push_back(i);
  }
  std::sort(out.begin(), out.end(), [](const MaintenanceIssue& a, const MaintenanceIssue& b) {
    return std::make_tuple(b.urgency, b.max_confidence, b.last_seen, a.issue_id) <
           std::make_tuple(a.urgency, a.max_confidence, a.last_seen, b.issue_id);
  });
  return out;
}

const MaintenanceIssue* Registry::find(std::uint64_t issue_id) const {
  if (issue_id == 0 || issue_id > issues_.size()) return nullptr;
  return &issues_[issue_id - 1];
}

json to_json(const MaintenanceIssue& i) {
  return {{"issue_id", i.issue_id},
          {"class", to_string(i.detection_class)},
          {"lat", i.location.lat},
          {"lon", i.location.lon},
          {"max_confidence", i.max_confidence},
          {"detection_count", i.detection_count},
          {"first_seen", format_instant(i.first_seen)},
          {"last_seen", format_instant(i.last_seen)},
          {"status", to_string(i.status)},
          {"urgency", to_string(i.urgency)},
          {"image_refs", i.image_refs}};
}

std::string export_jsonl(const std::vector<MaintenanceIssue>& issues) {
  std::string out;
  for (const auto& i : issues) {
    out += to_json(i).dump();
    out += '\n';
  }
  return out;
}

json to_geojson(const std::vector<MaintenanceIssue>& issues) {
  json features = json::array();
  for (const auto& i : issues) {
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Point"}, {"coordinates", {i.location.lon, i.location.lat}}}},
                        {"properties",
                         {{"issue_id", i.issue_id},
                          {"class", to_string(i.detection_class)},
                          {"urgency", to_string(i.urgency)},
                          {"max_confidence", i.max_confidence},
                          {"status", to_string(i.status)}}}});
  }
  return {{"type", "FeatureCollection"}, {"features", features}};
}

}  // namespace icms::maintenance
