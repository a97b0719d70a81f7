#include "icms/service/city_state.hpp"

#include <algorithm>
#include <set>

#include "icms/error.hpp"

namespace icms::service {
namespace {

using nlohmann::json;

std::uint64_t id_field(const json& payload) {
  if (!payload.contains("id") || !payload.at("id").is_number_unsigned()) {
    throw Error(ErrorCode::Schema, "payload needs a positive integer 'id'");
  }
  return payload.at("id").get<std::uint64_t>();
}

safety::Rule rule_from_payload(const json& payload) {
  const auto id = id_field(payload);
  if (!payload.contains("text") || !payload.at("text").is_string()) {
    throw Error(ErrorCode::Schema, "rule needs a string 'text'");
  }
  const std::string name = payload.value("name", std::string{});
  const bool enabled = payload.value("enabled", true);
  return safety::make_rule(id, name, payload.at("text").get<std::string>(), enabled);
}

std::pair<Instant, Instant> train_range(const json& payload) {
  if (!payload.contains("from") || !payload.contains("to") || !payload.at("from").is_string() ||
      !payload.at("to").is_string()) {
    throw Error(ErrorCode::Schema, "train needs RFC 3339 'from' and 'to'");
  }
  const Instant from = parse_instant(payload.at("from").get<std::string>());
  const Instant to = parse_instant(payload.at("to").get<std::string>());
  if (!(from < to)) throw Error(ErrorCode::Argument, "train range must satisfy from < to");
  return {from, to};
}

std::pair<std::uint64_t, maintenance::Transition> transition_fields(const json& payload) {
  const auto id = id_field(payload);
  const auto action = payload.contains("action") && payload.at("action").is_string()
                          ? maintenance::transition_from(payload.at("action").get<std::string>())
                          : std::nullopt;
  if (!action) throw Error(ErrorCode::Schema, "transition action must be 'acknowledge' or 'resolve'");
  return {id, *action};
}

template <typename E>
void insert_ordered(std::vector<E>& list, E e) {
  if (list.empty() || !(e.timestamp < list.back().timestamp)) {
    list.push_back(std::move(e));
    return;
  }
  auto pos = std::upper_bound(list.begin(), list.end(), e.timestamp,
                              [](Instant t, const E& x) { return t < x.timestamp; });
  list.insert(pos, std::move(e));
}

}  // namespace

CityState::CityState(Config config, PostRegistry posts)
    : config_(std::move(config)),
      posts_(std::move(posts)),
      calendar_(make_calendar(config_)),
      rules_(std::make_shared<const std::vector<safety::Rule>>()),
      registry_(config_) {}

void CityState::check(const std::string& kind, const json& payload) const {
  if (auto feed = ingest::feed_kind_from(kind)) {
    ingest::parse_record(*feed, payload);
  } else if (kind == kinds::rule_upsert) {
    rule_from_payload(payload);
  } else if (kind == kinds::rule_delete) {
    const auto id = id_field(payload);
    if (!rule_map_.contains(id)) throw Error(ErrorCode::NotFound, "unknown rule " + std::to_string(id));
  } else if (kind == kinds::issue_transition) {
    const auto [id, action] = transition_fields(payload);
    registry_.check_transition(id, action);
  } else if (kind == kinds::train) {
    train_range(payload);
  } else {
    throw Error(ErrorCode::Validation, "unknown record kind '" + kind + "'");
  }
}

void CityState::apply(const LogRecord& record) {
  const auto& kind = record.kind;
  const auto& payload = record.payload;
  if (auto feed = ingest::feed_kind_from(kind)) {
    auto event = ingest::parse_record(*feed, payload);
    if (auto* d = std::get_if<DetectionEvent>(&event)) {
      registry_.ingest(*d);
      ++detection_count_;
      latest_event_ = std::max(latest_event_.value_or(d->timestamp), d->timestamp);
    } else if (auto* r = std::get_if<RadarReading>(&event)) {
      add_sensor_event(*r);
    } else {
      add_sensor_event(std::get<PedestrianCount>(event));
    }
  } else if (kind == kinds::rule_upsert) {
    auto rule = rule_from_payload(payload);
    next_rule_id_ = std::max(next_rule_id_, rule.rule_id + 1);
    rule_map_[rule.rule_id] = std::move(rule);
    publish_rules();
  } else if (kind == kinds::rule_delete) {
    const auto id = id_field(payload);
    if (rule_map_.erase(id) == 0) throw Error(ErrorCode::NotFound, "unknown rule " + std::to_string(id));
    publish_rules();
  } else if (kind == kinds::issue_transition) {
    const auto [id, action] = transition_fields(payload);
    registry_.transition(id, action);
  } else if (kind == kinds::train) {
    const auto [from, to] = train_range(payload);
    last_training_ = train(from, to);
    for (const auto& m : last_training_.trained) models_[m.street_id] = m;
  } else {
    throw Error(ErrorCode::Validation, "unknown record kind '" + kind + "'");
  }
  last_sequence_ = record.sequence;
}

void CityState::add_sensor_event(const ingest::SensorEvent& e) {
  std::visit(
      [&](const auto& ev) {
        using E = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<E, RadarReading>) {
          ++radar_count_;
        } else {
          ++pedestrian_count_;
        }
        if (!posts_.contains(ev.post_id)) {
          dead_letter_.push_back(ev);
          return;
        }
        latest_event_ = std::max(latest_event_.value_or(ev.timestamp), ev.timestamp);
        if constexpr (std::is_same_v<E, RadarReading>) {
          insert_ordered(radar_[ev.post_id], ev);
        } else {
          insert_ordered(pedestrians_[ev.post_id], ev);
        }
      },
      e);
  std::lock_guard lock(cache_mu_);
  features_cache_.reset();
}

void CityState::publish_rules() {
  std::vector<safety::Rule> snapshot;
  snapshot.reserve(rule_map_.size());
  for (const auto& [_, r] : rule_map_) snapshot.push_back(r);
  rules_ = std::make_shared<const std::vector<safety::Rule>>(std::move(snapshot));
}

std::optional<safety::Rule> CityState::rule(std::uint64_t id) const {
  auto it = rule_map_.find(id);
  if (it == rule_map_.end()) return std::nullopt;
  return it->second;
}

long CityState::event_count(const std::string& kind) const {
  if (kind == kinds::radar) return radar_count_;
  if (kind == kinds::pedestrian) return pedestrian_count_;
  if (kind == kinds::detection) return detection_count_;
  return 0;
}

TrainingOutcome CityState::train(Instant from, Instant to) const {
  TrainingOutcome out;
  for (const auto& street : posts_.streets()) {
    try {
      const auto raw = energy::build_movement_series(street, radar_, pedestrians_, posts_, std::pair{from, to});
      const auto clean = energy::preprocess_series(raw, config_);
      out.trained.push_back(energy::fit_model(clean, calendar_));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InsufficientData) throw;
      out.skipped[street] = e.what();
    }
  }
  return out;
}

std::shared_ptr<const std::vector<safety::WindowFeatures>> CityState::features() const {
  std::lock_guard lock(cache_mu_);
  if (!features_cache_) {
    features_cache_ = std::make_shared<const std::vector<safety::WindowFeatures>>(
        safety::compute_features(radar_, pedestrians_, posts_, config_.cadence, calendar_));
  }
  return features_cache_;
}

std::vector<safety::Violation> CityState::violations(const ViolationQuery& q) const {
  const auto feats = features();
  const auto rules = rules_;
  auto all = safety::evaluate_windows(*rules, *feats);
  std::erase_if(all, [&](const safety::Violation& v) {
    return (q.post_id && v.post_id != *q.post_id) || (q.from && v.window_start < *q.from) ||
           (q.to && !(v.window_start < *q.to));
  });
  return all;
}

std::vector<safety::FrequencyLevel> CityState::frequency_levels(const std::vector<safety::Violation>& v,
                                                                Instant now) const {
  std::set<std::pair<std::string, std::uint64_t>> pairs;
  for (const auto& x : v) pairs.emplace(x.post_id, x.rule_id);
  const auto all = violations();
  std::vector<safety::FrequencyLevel> out;
  for (const auto& [post, rule] : pairs) out.push_back(safety::frequency_level(all, post, rule, now, config_));
  return out;
}

safety::HourlyRatio CityState::hourly_ratio(const std::string& street_id, Date from, Date to,
                                            std::optional<double> threshold) const {
  const auto feats = features();
  return safety::hourly_speeding_ratio(street_id, from, to, *feats, posts_, calendar_,
                                       threshold.value_or(config_.speeding_ratio_threshold));
}

void CityState::require_street(const std::string& street_id) const {
  if (posts_.on_street(street_id).empty()) throw Error(ErrorCode::NotFound, "unknown street_id '" + street_id + "'");
}

energy::MovementSeries CityState::observed_series(const std::string& street_id) const {
  require_street(street_id);
  return energy::build_movement_series(street_id, radar_, pedestrians_, posts_);
}

const energy::ForecastModel& CityState::model(const std::string& street_id) const {
  require_street(street_id);
  auto it = models_.find(street_id);
  if (it == models_.end()) throw Error(ErrorCode::NotFound, "no trained model for street '" + street_id + "'");
  return it->second;
}

energy::Forecast CityState::forecast(const std::string& street_id, std::optional<Instant> from) const {
  const auto& m = model(street_id);
  const Instant start = from ? *from : latest_event_.value_or(m.trained_to + kHour);
  return energy::forecast_24h(m, start, calendar_);
}

std::vector<energy::ActivityBlock> CityState::blocks(const std::string& street_id, std::optional<Date> date,
                                                     energy::BlockBasis basis) const {
  std::vector<energy::ActivityBlock> out;
  if (basis == energy::BlockBasis::observed) {
    out = energy::find_zero_blocks(observed_series(street_id), config_.night_window, config_.min_block_hours,
                                   calendar_);
  } else {
    std::optional<Instant> from;
    if (date) from = calendar_.at_local(*date, config_.night_window.start);
    out = energy::find_zero_blocks(forecast(street_id, from), config_.night_window, config_.min_block_hours,
                                   calendar_);
  }
  if (date) {
    std::erase_if(out, [&](const energy::ActivityBlock& b) {
      return energy::night_of(b.start, config_.night_window, calendar_) != *date;
    });
  }
  return out;
}

std::vector<energy::DimmingRecommendation> CityState::recommendations(const std::string& street_id,
                                                                      std::optional<Date> date,
                                                                      energy::BlockBasis basis,
                                                                      std::optional<double> dim_level) const {
  const double level = dim_level.value_or(config_.dim_level);
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::Validation, "dim_level must lie in (0, 1)");
  const auto b = blocks(street_id, date, basis);
  const auto street_posts = posts_.on_street(street_id);
  return energy::recommend(b, street_posts, level);
}

json CityState::export_state() const {
  json rules = json::array();
  for (const auto& r : *rules_) rules.push_back(safety::to_json(r));

  const auto feats = features();
  json violations = json::array();
  for (const auto& v : safety::evaluate_windows(*rules_, *feats)) violations.push_back(safety::to_json(v));

  json models = json::object();
  for (const auto& [street, m] : models_) models[street] = energy::to_json(m);

  json issues = json::array();
  for (const auto& i : registry_.issues()) issues.push_back(maintenance::to_json(i));

  json dead = json::array();
  for (const auto& e : dead_letter_) {
    dead.push_back(std::visit([](const auto& ev) { return ingest::to_json(ev); }, e));
  }

  return {{"last_sequence", last_sequence_},
          {"events",
           {{"radar", radar_count_},
            {"pedestrian", pedestrian_count_},
            {"detection", detection_count_},
            {"quarantined", dead_letter_.size()}}},
          {"latest_event", latest_event_ ? json(format_instant(*latest_event_)) : json(nullptr)},
          {"rules", rules},
          {"windows", feats->size()},
          {"violations", violations},
          {"models", models},
          {"training_skipped", last_training_.skipped},
          {"issues", issues},
          {"dead_letter", dead}};
}

}  // namespace icms::service
