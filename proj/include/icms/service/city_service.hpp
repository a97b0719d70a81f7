#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "icms/service/city_state.hpp"
#include "icms/service/event_log.hpp"

namespace icms::service {

struct IngestResult {
  long accepted = 0;
  long quarantined = 0;
  std::uint64_t last_sequence = 0;
};

// Owns the event log and the state rebuilt from it. Every write is validated,
// appended durably, then applied under one writer lock; readers share a lock
// and never see a half-applied request.
class CityService {
 public:
  using Clock = std::function<std::string()>;  // RFC 3339 receive time

  CityService(Config config, PostRegistry posts, const std::filesystem::path& data_dir, Clock clock = {});

  static constexpr const char* kLogFile = "events.log";

  IngestResult ingest(ingest::FeedKind kind, std::string_view body);

  safety::Rule create_rule(const std::string& name, const std::string& text, bool enabled);
  safety::Rule update_rule(std::uint64_t id, const std::string& name, const std::string& text, bool enabled);
  void delete_rule(std::uint64_t id);
  maintenance::MaintenanceIssue transition_issue(std::uint64_t id, maintenance::Transition action);
  TrainingOutcome train(Instant from, Instant to);

  template <typename F>
  auto read(F&& f) const {
    auto lock = shared();
    return f(static_cast<const CityState&>(*state_));
  }

  nlohmann::json export_state() const;
  std::uint64_t last_sequence() const;

 private:
  void commit(const std::vector<EventLog::Entry>& entries);

  // A waiting writer holds gate_, so new readers queue behind it instead of
  // starving it.
  std::shared_lock<std::shared_mutex> shared() const {
    std::lock_guard gate(gate_);
    return std::shared_lock(mu_);
  }
  std::unique_lock<std::shared_mutex> exclusive() {
    std::lock_guard gate(gate_);
    return std::unique_lock(mu_);
  }

  mutable std::mutex gate_;
  mutable std::shared_mutex mu_;
  std::unique_ptr<CityState> state_;
  std::unique_ptr<EventLog> log_;
  Clock clock_;
};

// Rebuilds state from a log file without opening it for writing.
std::unique_ptr<CityState> recover_state(const Config& config, const PostRegistry& posts,
                                         const std::filesystem::path& log_file);

}  // namespace icms::service
