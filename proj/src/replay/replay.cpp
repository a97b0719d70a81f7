#include "icms/replay/replay.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "icms/energy.hpp"
#include "icms/ingestion.hpp"
#include "icms/maintenance.hpp"
#include "icms/safety/engine.hpp"

namespace icms::replay {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr std::array<const char*, 6> kDatasetFiles{"posts.json",  "config.json",       "rules.json",
                                                   "radar.jsonl", "pedestrians.jsonl", "detections.jsonl"};

std::optional<std::string> read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

long line_of(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<long>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

json parse_json_file(const fs::path& file, const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // the parser reports the 1-based offset of the offending byte
    throw DataFileError(ErrorCode::Parse, file, line_of(text, e.byte == 0 ? 0 : e.byte - 1), e.what());
  } catch (const json::exception& e) {
    throw DataFileError(ErrorCode::Parse, file, 0, e.what());
  }
}

template <typename E>
void read_feed(const fs::path& file, ingest::FeedKind kind, std::vector<E>& out) {
  const auto text = read_file(file);
  if (!text) return;
  std::size_t pos = 0;
  long line_no = 0;
  while (pos < text->size()) {
    std::size_t eol = text->find('\n', pos);
    if (eol == std::string::npos) eol = text->size();
    ++line_no;
    std::string_view line(text->data() + pos, eol - pos);
    pos = eol + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(std::get<E>(ingest::parse_record(kind, line)));
    } catch (const Error& e) {
      throw DataFileError(e.code(), file, line_no, e.what());
    }
  }
}

std::vector<safety::Rule> read_rules(const fs::path& file) {
  const auto text = read_file(file);
  if (!text) return {};
  const json j = parse_json_file(file, *text);
  if (!j.is_array()) throw DataFileError(ErrorCode::Schema, file, 0, "rules file must hold a JSON array");
  std::vector<safety::Rule> rules;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& r = j[i];
    const auto where = "rule " + std::to_string(i + 1) + ": ";
    if (!r.is_object() || !r.contains("text") || !r.at("text").is_string()) {
      throw DataFileError(ErrorCode::Schema, file, 0, where + "needs a string 'text'");
    }
    try {
      const auto id = r.value("id", static_cast<std::uint64_t>(i + 1));
      rules.push_back(safety::make_rule(id, r.value("name", std::string{}), r.at("text").get<std::string>(),
                                        r.value("enabled", true)));
    } catch (const Error& e) {
      throw DataFileError(e.code(), file, 0, where + e.what());
    } catch (const json::exception& e) {
      throw DataFileError(ErrorCode::Schema, file, 0, where + e.what());
    }
  }
  return rules;
}

template <typename E>
void partition_events(const std::vector<E>& in, Instant boundary, std::vector<E>& before, std::vector<E>& after) {
  for (const auto& e : in) (e.timestamp < boundary ? before : after).push_back(e);
}

json count_map(std::initializer_list<const char*> keys) {
  json j = json::object();
  for (const char* k : keys) j[k] = 0;
  return j;
}

json dataset_section(const Dataset& d, const std::string& id, const std::optional<std::pair<Instant, Instant>>& range,
                     std::optional<Instant> boundary, std::size_t quarantined) {
  auto instant_or_null = [](std::optional<Instant> t) { return t ? json(format_instant(*t)) : json(nullptr); };
  return {{"id", id},
          {"posts", d.posts.all().size()},
          {"streets", d.posts.streets().size()},
          {"events", {{"radar", d.radar.size()}, {"pedestrian", d.pedestrians.size()}, {"detection", d.detections.size()}}},
          {"quarantined", quarantined},
          {"from", instant_or_null(range ? std::optional(range->first) : std::nullopt)},
          {"to", instant_or_null(range ? std::optional(range->second) : std::nullopt)},
          {"boundary", instant_or_null(boundary)}};
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataFileError(ErrorCode::NotFound, dir, 0, "dataset directory not found");
  Dataset d;
  const auto posts_file = dir / "posts.json";
  if (auto text = read_file(posts_file)) {
    const json j = parse_json_file(posts_file, *text);
    if (!j.is_array()) throw DataFileError(ErrorCode::Schema, posts_file, 0, "posts file must hold a JSON array");
    std::vector<SmartPost> posts;
    for (std::size_t i = 0; i < j.size(); ++i) {
      try {
        posts.push_back(smart_post_from_json(j[i]));
      } catch (const Error& e) {
        throw DataFileError(e.code(), posts_file, 0, "post " + std::to_string(i + 1) + ": " + e.what());
      }
    }
    try {
      d.posts = PostRegistry(std::move(posts));
    } catch (const Error& e) {
      throw DataFileError(e.code(), posts_file, 0, e.what());
    }
  }
  read_feed(dir / "radar.jsonl", ingest::FeedKind::radar, d.radar);
  read_feed(dir / "pedestrians.jsonl", ingest::FeedKind::pedestrian, d.pedestrians);
  read_feed(dir / "detections.jsonl", ingest::FeedKind::detection, d.detections);
  d.rules = read_rules(dir / "rules.json");
  return d;
}

Config load_dataset_config(const fs::path& dir, const std::optional<fs::path>& config_path) {
  if (config_path) return load_config(config_path->string());
  if (fs::exists(dir / "config.json")) return load_config((dir / "config.json").string());
  return Config{};
}

std::string dataset_hash(const fs::path& dir) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::Contract, "SHA-256 unavailable");
  }
  for (const char* name : kDatasetFiles) {
    const auto text = read_file(dir / name);
    if (!text) continue;
    const std::string header = std::string(name) + '\0' + std::to_string(text->size()) + '\0';
    EVP_DigestUpdate(ctx.get(), header.data(), header.size());
    EVP_DigestUpdate(ctx.get(), text->data(), text->size());
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 0xf];
  }
  return "sha256:" + hex;
}

std::optional<std::pair<Instant, Instant>> time_range(const Dataset& d) {
  std::optional<std::pair<Instant, Instant>> r;
  auto extend = [&](Instant t) {
    if (!r) {
      r = std::pair{t, t};
    } else {
      r->first = std::min(r->first, t);
      r->second = std::max(r->second, t);
    }
  };
  for (const auto& e : d.radar) extend(e.timestamp);
  for (const auto& e : d.pedestrians) extend(e.timestamp);
  for (const auto& e : d.detections) extend(e.timestamp);
  return r;
}

std::pair<Dataset, Dataset> split_train_holdout(const Dataset& d, Instant boundary, const LocalCalendar& cal) {
  if (const auto range = time_range(d)) {
    const Instant lo = cal.at_local(cal.date(range->first), 0);
    const Instant hi = cal.at_local(Date{std::chrono::sys_days{cal.date(range->second)} + std::chrono::days{1}}, 0);
    if (boundary < lo || boundary > hi) {
      throw Error(ErrorCode::Argument, "boundary " + format_instant(boundary) + " lies outside the dataset range [" +
                                           format_instant(lo) + ", " + format_instant(hi) + "]");
    }
  }
  Dataset train{d.posts, {}, {}, {}, d.rules};
  Dataset holdout{d.posts, {}, {}, {}, d.rules};
  partition_events(d.radar, boundary, train.radar, holdout.radar);
  partition_events(d.pedestrians, boundary, train.pedestrians, holdout.pedestrians);
  partition_events(d.detections, boundary, train.detections, holdout.detections);
  return {std::move(train), std::move(holdout)};
}

Instant default_boundary(const Dataset& d, const LocalCalendar& cal) {
  const auto range = time_range(d);
  if (!range) throw Error(ErrorCode::Argument, "an empty dataset has no default boundary");
  const Date first = cal.date(range->first);
  const Date next{std::chrono::year_month_day{first.year(), first.month(), std::chrono::day{1}} +
                  std::chrono::months{1}};
  return cal.at_local(next, 0);
}

json run_replay(const Dataset& d, const Config& config, std::optional<Instant> boundary,
                const std::string& dataset_id) {
  const LocalCalendar cal = make_calendar(config);
  const auto range = time_range(d);
  if (range && !boundary) boundary = default_boundary(d, cal);

  const auto radar = ingest::segregate_by_post(d.radar, d.posts);
  const auto peds = ingest::segregate_by_post(d.pedestrians, d.posts);
  const std::size_t quarantined = radar.dead_letter.size() + peds.dead_letter.size();
  const auto streets = d.posts.streets();

  // forecasting under the train/holdout protocol
  json forecast = json::object();
  if (range) {
    const auto [train, holdout] = split_train_holdout(d, *boundary, cal);
    const auto train_radar = ingest::segregate_by_post(train.radar, d.posts).batch;
    const auto train_peds = ingest::segregate_by_post(train.pedestrians, d.posts).batch;
    const auto hold_radar = ingest::segregate_by_post(holdout.radar, d.posts).batch;
    const auto hold_peds = ingest::segregate_by_post(holdout.pedestrians, d.posts).batch;
    const Instant series_from = floor_hour(range->first);
    const Instant series_to = floor_hour(range->second) + kHour;
    for (const auto& street : streets) {
      try {
        if (!(series_from < *boundary) || !(*boundary < series_to)) {
          throw Error(ErrorCode::InsufficientData, "boundary leaves an empty train or holdout part");
        }
        const auto train_series = energy::build_movement_series(street, train_radar, train_peds, d.posts,
                                                                std::pair{series_from, *boundary});
        const auto model = energy::fit_model(energy::preprocess_series(train_series, config), cal);
        const auto holdout_series = energy::build_movement_series(street, hold_radar, hold_peds, d.posts,
                                                                  std::pair{*boundary, series_to});
        auto entry = energy::evaluation_report(model, energy::evaluate(model, holdout_series, cal));
        entry["residual_stdev"] = model.residual_stdev;
        forecast[street] = entry;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::InsufficientData) throw;
        forecast[street] = {{"street_id", street}, {"skipped", e.what()}};
      }
    }
  }

  // safety over the full range
  const auto features = safety::compute_features(radar.batch, peds.batch, d.posts, config.cadence, cal);
  const auto violations = safety::evaluate_windows(d.rules, features);
  json by_severity = count_map({"warning", "danger"});
  json by_rule = json::object();
  for (const auto& r : d.rules) by_rule[std::to_string(r.rule_id)] = 0;
  for (const auto& v : violations) {
    by_severity[std::string(to_string(v.severity))] = by_severity[std::string(to_string(v.severity))].get<long>() + 1;
    const auto key = std::to_string(v.rule_id);
    by_rule[key] = by_rule[key].get<long>() + 1;
  }
  json rules = json::array();
  for (const auto& r : d.rules) rules.push_back(safety::to_json(r));
  json ratios = json::object();
  if (range) {
    for (const auto& street : streets) {
      ratios[street] = safety::to_json(safety::hourly_speeding_ratio(
          street, cal.date(range->first), cal.date(range->second), features, d.posts, cal,
          config.speeding_ratio_threshold))["hours"];
    }
  }
  const json safety{{"windows", features.size()},
                    {"violations", {{"total", violations.size()}, {"by_severity", by_severity}, {"by_rule", by_rule}}},
                    {"rules", rules},
                    {"ratio_threshold", config.speeding_ratio_threshold},
                    {"hourly_ratio", ratios}};

  // zero-activity blocks and lighting recommendations from observed data
  long block_count = 0;
  long block_hours = 0;
  double savings = 0.0;
  json energy_by_street = json::object();
  for (const auto& street : streets) {
    const auto series = energy::build_movement_series(street, radar.batch, peds.batch, d.posts);
    const auto blocks = energy::find_zero_blocks(series, config.night_window, config.min_block_hours, cal);
    const auto recs = energy::recommend(blocks, d.posts.on_street(street), config.dim_level);
    long hours = 0;
    double kwh = 0.0;
    json list = json::array();
    for (const auto& r : recs) {
      hours += r.block.hours;
      kwh += r.estimated_savings_kwh;
      list.push_back(energy::to_json(r));
    }
    energy_by_street[street] = {
        {"blocks", blocks.size()}, {"block_hours", hours}, {"savings_kwh", kwh}, {"recommendations", list}};
    block_count += static_cast<long>(blocks.size());
    block_hours += hours;
    savings += kwh;
  }
  const json energy{{"dim_level", config.dim_level},
                    {"blocks", block_count},
                    {"block_hours", block_hours},
                    {"savings_kwh", savings},
                    {"by_street", energy_by_street}};

  // maintenance issues in arrival order
  std::vector<DetectionEvent> detections = d.detections;
  std::stable_sort(detections.begin(), detections.end(),
                   [](const DetectionEvent& a, const DetectionEvent& b) { return a.timestamp < b.timestamp; });
  maintenance::Registry registry(config);
  for (const auto& e : detections) registry.ingest(e);
  json by_class = count_map({"pothole", "flood", "fire"});
  json by_urgency = count_map({"routine", "elevated", "urgent"});
  json issues = json::array();
  for (const auto& i : registry.list()) {
    const std::string c(to_string(i.detection_class));
    const std::string u(maintenance::to_string(i.urgency));
    by_class[c] = by_class[c].get<long>() + 1;
    by_urgency[u] = by_urgency[u].get<long>() + 1;
    issues.push_back(maintenance::to_json(i));
  }
  const json maintenance{{"issues", registry.size()},
                         {"detections", detections.size()},
                         {"by_class", by_class},
                         {"by_urgency", by_urgency},
                         {"list", issues}};

  return {{"dataset", dataset_section(d, dataset_id, range, range ? boundary : std::nullopt, quarantined)},
          {"config", to_json(config)},
          {"forecast", forecast},
          {"safety", safety},
          {"energy", energy},
          {"maintenance", maintenance}};
}

std::string canonical(const json& report) { return report.dump(2) + "\n"; }

}  // namespace icms::replay
