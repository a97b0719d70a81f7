#include "icms/service/city_service.hpp"

#include <chrono>

#include "icms/error.hpp"

namespace icms::service {
namespace {

using nlohmann::json;

std::string wall_clock() {
  return format_instant(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
}

void replay_into(CityState& state, const std::vector<LogRecord>& records) {
  for (const auto& r : records) {
    try {
      state.apply(r);
    } catch (const RecoveryError&) {
      throw;
    } catch (const std::exception& e) {
      throw RecoveryError("cannot apply record " + std::to_string(r.sequence) + ": " + e.what(), r.sequence);
    }
  }
}

}  // namespace

CityService::CityService(Config config, PostRegistry posts, const std::filesystem::path& data_dir, Clock clock)
    : clock_(clock ? std::move(clock) : Clock(wall_clock)) {
  std::error_code ec;
  std::filesystem::create_directories(data_dir, ec);
  if (ec) throw Error(ErrorCode::Storage, "cannot create data dir " + data_dir.string() + ": " + ec.message());
  auto [log, records] = EventLog::open(data_dir / kLogFile);
  state_ = std::make_unique<CityState>(std::move(config), std::move(posts));
  replay_into(*state_, records);
  log_ = std::make_unique<EventLog>(std::move(log));
}

void CityService::commit(const std::vector<EventLog::Entry>& entries) {
  // caller holds the writer lock
  for (const auto& [kind, payload] : entries) state_->check(kind, payload);
  const auto seqs = log_->append(entries, clock_());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    state_->apply(LogRecord{seqs[i], entries[i].first, entries[i].second, {}});
  }
}

IngestResult CityService::ingest(ingest::FeedKind kind, std::string_view body) {
  const auto records = ingest::split_feed(body);
  std::vector<EventLog::Entry> entries;
  entries.reserve(records.size());
  IngestResult result;

  auto lock = exclusive();
  for (std::size_t i = 0; i < records.size(); ++i) {
    ingest::Event ev;
    try {
      ev = ingest::parse_record(kind, records[i]);
    } catch (const Error& e) {
      throw Error(e.code(), "record " + std::to_string(i + 1) + ": " + e.what());
    }
    const bool known = std::visit(
        [&](const auto& x) {
          if constexpr (std::is_same_v<std::decay_t<decltype(x)>, DetectionEvent>) {
            return true;
          } else {
            return state_->posts().contains(x.post_id);
          }
        },
        ev);
    ++(known ? result.accepted : result.quarantined);
    entries.emplace_back(std::string(ingest::to_string(kind)), records[i]);
  }
  commit(entries);
  result.last_sequence = log_->last_sequence();
  return result;
}

safety::Rule CityService::create_rule(const std::string& name, const std::string& text, bool enabled) {
  auto lock = exclusive();
  const auto id = state_->next_rule_id();
  commit({{kinds::rule_upsert, json{{"id", id}, {"name", name}, {"text", text}, {"enabled", enabled}}}});
  return *state_->rule(id);
}

safety::Rule CityService::update_rule(std::uint64_t id, const std::string& name, const std::string& text,
                                      bool enabled) {
  auto lock = exclusive();
  if (!state_->rule(id)) throw Error(ErrorCode::NotFound, "unknown rule " + std::to_string(id));
  commit({{kinds::rule_upsert, json{{"id", id}, {"name", name}, {"text", text}, {"enabled", enabled}}}});
  return *state_->rule(id);
}

void CityService::delete_rule(std::uint64_t id) {
  auto lock = exclusive();
  commit({{kinds::rule_delete, json{{"id", id}}}});
}

maintenance::MaintenanceIssue CityService::transition_issue(std::uint64_t id, maintenance::Transition action) {
  auto lock = exclusive();
  const char* verb = action == maintenance::Transition::acknowledge ? "acknowledge" : "resolve";
  commit({{kinds::issue_transition, json{{"id", id}, {"action", verb}}}});
  return *state_->registry().find(id);
}

TrainingOutcome CityService::train(Instant from, Instant to) {
  auto lock = exclusive();
  commit({{kinds::train, json{{"from", format_instant(from)}, {"to", format_instant(to)}}}});
  return state_->last_training();
}

json CityService::export_state() const {
  auto lock = shared();
  return state_->export_state();
}

std::uint64_t CityService::last_sequence() const {
  auto lock = shared();
  return log_->last_sequence();
}

std::unique_ptr<CityState> recover_state(const Config& config, const PostRegistry& posts,
                                         const std::filesystem::path& log_file) {
  auto state = std::make_unique<CityState>(config, posts);
  replay_into(*state, read_log(log_file).records);
  return state;
}

}  // namespace icms::service
