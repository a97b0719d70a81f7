#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "icms/config.hpp"
#include "icms/energy.hpp"
#include "icms/ingestion.hpp"
#include "icms/maintenance.hpp"
#include "icms/safety/engine.hpp"
#include "icms/service/event_log.hpp"
#include "icms/types.hpp"

namespace icms::service {

// Record kinds written to the event log.
namespace kinds {
inline constexpr const char* radar = "radar";
inline constexpr const char* pedestrian = "pedestrian";
inline constexpr const char* detection = "detection";
inline constexpr const char* rule_upsert = "rule_upsert";
inline constexpr const char* rule_delete = "rule_delete";
inline constexpr const char* issue_transition = "issue_transition";
inline constexpr const char* train = "train";
}  // namespace kinds

struct TrainingOutcome {
  std::vector<energy::ForecastModel> trained;
  std::map<std::string, std::string> skipped;  // street -> reason
};

struct ViolationQuery {
  std::optional<std::string> post_id;
  std::optional<Instant> from;  // inclusive
  std::optional<Instant> to;    // exclusive
};

// The whole engine state as a deterministic fold over log records: the same
// record sequence always produces the same state. Not internally
// synchronised for writes; CityService serialises apply() calls.
class CityState {
 public:
  CityState(Config config, PostRegistry posts);
  CityState(const CityState&) = delete;
  CityState& operator=(const CityState&) = delete;

  // Throws whatever apply() would throw for this record, without mutating.
  void check(const std::string& kind, const nlohmann::json& payload) const;
  void apply(const LogRecord& record);

  const Config& config() const { return config_; }
  const PostRegistry& posts() const { return posts_; }
  const LocalCalendar& calendar() const { return calendar_; }
  std::uint64_t last_sequence() const { return last_sequence_; }

  std::shared_ptr<const std::vector<safety::Rule>> rules() const { return rules_; }
  std::optional<safety::Rule> rule(std::uint64_t id) const;
  std::uint64_t next_rule_id() const { return next_rule_id_; }

  const ingest::PostStreamBatch<RadarReading>& radar() const { return radar_; }
  const ingest::PostStreamBatch<PedestrianCount>& pedestrians() const { return pedestrians_; }
  const std::vector<ingest::SensorEvent>& dead_letter() const { return dead_letter_; }
  const maintenance::Registry& registry() const { return registry_; }
  const std::map<std::string, energy::ForecastModel>& models() const { return models_; }
  const TrainingOutcome& last_training() const { return last_training_; }
  std::optional<Instant> latest_event() const { return latest_event_; }
  long event_count(const std::string& kind) const;

  std::shared_ptr<const std::vector<safety::WindowFeatures>> features() const;
  std::vector<safety::Violation> violations(const ViolationQuery& q = {}) const;
  // One level per (post, rule) pair among the given violations.
  std::vector<safety::FrequencyLevel> frequency_levels(const std::vector<safety::Violation>& v, Instant now) const;
  safety::HourlyRatio hourly_ratio(const std::string& street_id, Date from, Date to,
                                   std::optional<double> threshold) const;

  energy::MovementSeries observed_series(const std::string& street_id) const;
  const energy::ForecastModel& model(const std::string& street_id) const;
  energy::Forecast forecast(const std::string& street_id, std::optional<Instant> from) const;
  std::vector<energy::ActivityBlock> blocks(const std::string& street_id, std::optional<Date> date,
                                            energy::BlockBasis basis) const;
  std::vector<energy::DimmingRecommendation> recommendations(const std::string& street_id, std::optional<Date> date,
                                                             energy::BlockBasis basis,
                                                             std::optional<double> dim_level) const;

  // Canonical JSON of everything derived from the log (no receive times).
  nlohmann::json export_state() const;

 private:
  void require_street(const std::string& street_id) const;
  void add_sensor_event(const ingest::SensorEvent& e);
  TrainingOutcome train(Instant from, Instant to) const;
  void publish_rules();

  Config config_;
  PostRegistry posts_;
  LocalCalendar calendar_;
  std::uint64_t last_sequence_ = 0;

  std::map<std::uint64_t, safety::Rule> rule_map_;
  std::shared_ptr<const std::vector<safety::Rule>> rules_;
  std::uint64_t next_rule_id_ = 1;

  ingest::PostStreamBatch<RadarReading> radar_;
  ingest::PostStreamBatch<PedestrianCount> pedestrians_;
  std::vector<ingest::SensorEvent> dead_letter_;
  long radar_count_ = 0;
  long pedestrian_count_ = 0;
  long detection_count_ = 0;
  std::optional<Instant> latest_event_;

  maintenance::Registry registry_;
  std::map<std::string, energy::ForecastModel> models_;
  TrainingOutcome last_training_;

  mutable std::mutex cache_mu_;
  mutable std::shared_ptr<const std::vector<safety::WindowFeatures>> features_cache_;
};

}  // namespace icms::service
