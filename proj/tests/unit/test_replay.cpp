#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "icms/energy.hpp"
#include "icms/error.hpp"
#include "icms/ingestion.hpp"
#include "icms/replay/generator.hpp"
#include "icms/replay/replay.hpp"
#include "icms/safety/engine.hpp"
#include "support.hpp"

using namespace icms;
using namespace icms::replay;
using icms::test::at;
using nlohmann::json;

namespace {

struct Loaded {
  GeneratedDataset generated;
  Dataset data;
  Config config;
};

Loaded load(std::uint64_t seed, const Profile& profile) {
  icms::test::TempDir dir;
  Loaded l{generate_dataset(seed, profile), {}, {}};
  write_dataset(l.generated, dir.path());
  l.data = load_dataset(dir.path());
  l.config = load_dataset_config(dir.path(), std::nullopt);
  return l;
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::Validation;
}

template <typename E>
std::multiset<std::string> keys(const std::vector<E>& events) {
  std::multiset<std::string> out;
  for (const auto& e : events) out.insert(json(ingest::to_json(e)).dump());
  return out;
}

}  // namespace

TEST_CASE("rng draws are deterministic and in range") {
  Rng a(5);
  Rng b(5);
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const long k = a.uniform_int(3, 7);
    CHECK(k == b.uniform_int(3, 7));
    CHECK(k >= 3);
    CHECK(k <= 7);
    const double z = a.normal();
    CHECK(z == b.normal());
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / 20000.0) < 0.05);
  CHECK(std::abs(sq / 20000.0 - 1.0) < 0.05);
  // the engine's first output is fixed by the standard
  std::mt19937_64 ref(5489u);
  for (int i = 1; i < 10000; ++i) ref();
  CHECK(ref() == 9981545732273789042ull);
}

TEST_CASE("generation is reproducible and validates its profile") {
  Profile small;
  small.streets = 2;
  small.months = 1;
  const auto a = generate_dataset(42, small);
  const auto b = generate_dataset(42, small);
  CHECK(a.files == b.files);
  CHECK(a.truth == b.truth);
  CHECK(generate_dataset(43, small).files.at("radar.jsonl") != a.files.at("radar.jsonl"));
  for (const char* f : {"posts.json", "config.json", "rules.json", "radar.jsonl", "pedestrians.jsonl",
                        "detections.jsonl", "truth.json"}) {
    CHECK(a.files.contains(f));
  }

  auto bad = [](auto mutate) {
    Profile p;
    mutate(p);
    return code_of([&] { validate_profile(p); });
  };
  CHECK(bad([](Profile& p) { p.streets = 0; }) == ErrorCode::Argument);
  CHECK(bad([](Profile& p) { p.posts_per_street = 0; }) == ErrorCode::Argument);
  CHECK(bad([](Profile& p) { p.months = 0; }) == ErrorCode::Argument);
  CHECK(bad([](Profile& p) { p.noise = -1.0; }) == ErrorCode::Argument);
  CHECK(bad([](Profile& p) { p.speeding_episodes = -1; }) == ErrorCode::Argument);
  CHECK(bad([](Profile& p) { p.dead_letter = -1; }) == ErrorCode::Argument);
  Profile bad_profile;
  bad_profile.months = 0;
  CHECK(code_of([&] { generate_dataset(1, bad_profile); }) == ErrorCode::Argument);
  validate_profile(Profile{});
}

TEST_CASE("the engines recover every planted fact") {
  const auto l = load(42, Profile{});
  const auto& truth = l.generated.truth;
  const auto& d = l.data;
  const LocalCalendar cal = make_calendar(l.config);

  CHECK(truth["events"]["radar"] == d.radar.size());
  CHECK(truth["events"]["pedestrian"] == d.pedestrians.size());
  CHECK(truth["events"]["detection"] == d.detections.size());

  // zero-activity nights
  const auto radar = ingest::segregate_by_post(d.radar, d.posts);
  const auto peds = ingest::segregate_by_post(d.pedestrians, d.posts);
  CHECK(radar.dead_letter.size() + peds.dead_letter.size() == truth["quarantined"].get<std::size_t>());
  json found = json::array();
  for (const auto& street : d.posts.streets()) {
    const auto series = energy::build_movement_series(street, radar.batch, peds.batch, d.posts);
    for (const auto& b : energy::find_zero_blocks(series, l.config.night_window, l.config.min_block_hours, cal)) {
      found.push_back({{"street_id", b.street_id}, {"start", format_instant(b.start)}, {"hours", b.hours}});
    }
  }
  CHECK(found == truth["zero_blocks"]);
  CHECK(truth["zero_blocks"].size() == 61);
  // local 01:00 to 05:00; local 01:00 does not exist on the spring-forward night
  for (const auto& b : truth["zero_blocks"]) {
    const bool spring = b["start"] == "2023-03-26T01:00:00Z";
    CHECK(cal.hour(parse_instant(b["start"].get<std::string>())) == (spring ? 2 : 1));
    CHECK(b["hours"] == (spring ? 3 : 4));
  }

  // speeding episodes are exactly the windows firing the speeding rule
  const auto features = safety::compute_features(radar.batch, peds.batch, d.posts, l.config.cadence, cal);
  std::set<std::pair<std::string, std::string>> fired;
  for (const auto& v : safety::evaluate_windows(d.rules, features)) {
    if (v.rule_id == truth["speeding_rule_id"]) fired.emplace(v.post_id, format_instant(v.window_start));
  }
  std::set<std::pair<std::string, std::string>> planted;
  for (const auto& w : truth["speeding_windows"]) planted.emplace(w["post_id"], w["window_start"]);
  CHECK(planted.size() == 40);
  CHECK(fired == planted);

  // one issue per cluster, 0.41 stays routine
  const auto report = run_replay(d, l.config, std::nullopt, "test");
  const auto& issues = report["maintenance"]["list"];
  REQUIRE(issues.size() == truth["clusters"].size());
  for (const auto& c : truth["clusters"]) {
    const auto it = std::find_if(issues.begin(), issues.end(), [&](const json& i) { return i["class"] == c["class"]; });
    REQUIRE(it != issues.end());
    CHECK((*it)["detection_count"] == c["detections"]);
    CHECK((*it)["max_confidence"] == c["max_confidence"]);
    CHECK((*it)["urgency"] == c["urgency"]);
  }
  CHECK(truth["clusters"][0]["max_confidence"] == 0.41);
  CHECK(truth["clusters"][0]["urgency"] == "routine");

  // the outage leaves exactly its two hours missing
  const auto& outage = truth["outage"];
  const auto series = energy::build_movement_series(outage["street_id"], radar.batch, peds.batch, d.posts);
  std::vector<std::string> missing;
  for (const auto& p : series.points) {
    if (!p.count) missing.push_back(format_instant(p.hour));
  }
  CHECK(missing == std::vector<std::string>{outage["from"].get<std::string>(),
                                            format_instant(parse_instant(outage["from"].get<std::string>()) + kHour)});
}

TEST_CASE("noiseless profiles forecast the holdout month exactly") {
  Profile p;
  p.noise = 0.0;
  p.outage = false;
  p.speeding_episodes = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto l = load(seed, p);
    const auto report = run_replay(l.data, l.config, std::nullopt, "noiseless");
    for (const auto& [street, f] : report["forecast"].items()) {
      CHECK_MESSAGE(f["mae"] == 0.0, street);
      CHECK(f["n"] == 720);
    }
  }
}

TEST_CASE("split partitions the events") {
  Profile p;
  p.streets = 1;
  p.posts_per_street = 1;
  p.speeding_episodes = 5;
  const auto l = load(7, p);
  const auto& d = l.data;
  const LocalCalendar cal = make_calendar(l.config);
  const auto range = *time_range(d);

  const Instant mid = range.first + (range.second - range.first) / 2;
  const auto [train, holdout] = split_train_holdout(d, mid, cal);
  CHECK(train.radar.size() + holdout.radar.size() == d.radar.size());
  CHECK(std::all_of(train.radar.begin(), train.radar.end(), [&](auto& e) { return e.timestamp < mid; }));
  CHECK(std::all_of(holdout.radar.begin(), holdout.radar.end(), [&](auto& e) { return e.timestamp >= mid; }));
  auto joined = train.radar;
  joined.insert(joined.end(), holdout.radar.begin(), holdout.radar.end());
  CHECK(keys(joined) == keys(d.radar));
  CHECK(train.rules.size() == d.rules.size());

  const Instant first_midnight = cal.at_local(cal.date(range.first), 0);
  const auto [none, all] = split_train_holdout(d, first_midnight, cal);
  CHECK(none.radar.empty());
  CHECK(none.pedestrians.empty());
  CHECK(none.detections.empty());
  CHECK(all.radar.size() == d.radar.size());

  CHECK(code_of([&] { split_train_holdout(d, first_midnight - std::chrono::seconds(1), cal); }) ==
        ErrorCode::Argument);
  CHECK(code_of([&] { split_train_holdout(d, range.second + std::chrono::days(2), cal); }) == ErrorCode::Argument);
  CHECK(split_train_holdout(Dataset{}, at("2030-01-01T00:00:00Z"), cal).first.radar.empty());

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Instant b = range.first + std::chrono::seconds(rng() % static_cast<std::uint64_t>(
                                                                    (range.second - range.first).count()));
    const auto [tr, ho] = split_train_holdout(d, b, cal);
    std::size_t before = 0;
    for (const auto& e : d.pedestrians) before += e.timestamp < b ? 1 : 0;
    CHECK(tr.pedestrians.size() == before);
    CHECK(ho.pedestrians.size() == d.pedestrians.size() - before);
    std::size_t dets = 0;
    for (const auto& e : d.detections) dets += e.timestamp < b ? 1 : 0;
    CHECK(tr.detections.size() == dets);
  }

  CHECK(default_boundary(d, cal) == at("2023-03-31T23:00:00Z"));
}

TEST_CASE("replay reports are deterministic and conserve violations") {
  Profile p;
  p.streets = 2;
  const auto l = load(11, p);
  const auto& d = l.data;
  const auto a = canonical(run_replay(d, l.config, std::nullopt, "x"));
  CHECK(a == canonical(run_replay(d, l.config, std::nullopt, "x")));
  CHECK(a.back() == '\n');
  CHECK(a.find('\r') == std::string::npos);

  // brute-force window features straight from the raw events
  const LocalCalendar cal = make_calendar(l.config);
  std::map<std::pair<std::string, Instant>, safety::WindowFeatures> windows;
  auto slot = [&](const std::string& post, Instant ts) -> safety::WindowFeatures& {
    const auto secs = ts.time_since_epoch().count();
    const Instant start{std::chrono::seconds(secs - secs % (15 * 60))};
    auto& w = windows[{post, start}];
    w.post_id = post;
    w.window_start = start;
    w.hour_of_day = cal.hour(start);
    return w;
  };
  std::map<std::pair<std::string, Instant>, double> speed_sum;
  for (const auto& r : d.radar) {
    const auto* post = d.posts.find(r.post_id);
    if (post == nullptr) continue;
    if (r.object_class == ObjectClass::other) continue;
    auto& w = slot(r.post_id, r.timestamp);
    ++w.vehicle_count;
    if (r.speed > post->speed_limit) ++w.speeding_count;
    speed_sum[{r.post_id, w.window_start}] += r.speed;
  }
  for (const auto& q : d.pedestrians) {
    if (d.posts.find(q.post_id) == nullptr) continue;
    slot(q.post_id, q.timestamp).pedestrian_count += q.count;
  }
  std::map<std::string, long> by_rule;
  long total = 0;
  for (auto& [key, w] : windows) {
    if (w.vehicle_count > 0) w.avg_speed = speed_sum[key] / static_cast<double>(w.vehicle_count);
    for (const auto& rule : d.rules) {
      if (safety::eval_rule(rule, w)) {
        ++by_rule[std::to_string(rule.rule_id)];
        ++total;
      }
    }
  }
  const auto report = json::parse(a);
  CHECK(report["safety"]["windows"] == windows.size());
  CHECK(report["safety"]["violations"]["total"] == total);
  for (const auto& [rule, n] : by_rule) CHECK(report["safety"]["violations"]["by_rule"][rule] == n);
  CHECK(report["safety"]["violations"]["by_severity"]["warning"].get<long>() +
            report["safety"]["violations"]["by_severity"]["danger"].get<long>() ==
        total);

  long block_hours = 0;
  double kwh = 0.0;
  for (const auto& [street, s] : report["energy"]["by_street"].items()) {
    block_hours += s["block_hours"].get<long>();
    kwh += s["savings_kwh"].get<double>();
  }
  CHECK(report["energy"]["block_hours"] == block_hours);
  CHECK(report["energy"]["savings_kwh"].get<double>() == doctest::Approx(kwh));
}

TEST_CASE("an empty dataset reports zeros") {
  icms::test::TempDir dir;
  const auto d = load_dataset(dir.path());
  const auto r = run_replay(d, Config{}, std::nullopt, dataset_hash(dir.path()));
  CHECK(r["dataset"]["events"] == json{{"radar", 0}, {"pedestrian", 0}, {"detection", 0}});
  CHECK(r["dataset"]["boundary"].is_null());
  CHECK(r["forecast"].empty());
  CHECK(r["safety"]["violations"]["total"] == 0);
  CHECK(r["energy"]["savings_kwh"] == 0.0);
  CHECK(r["maintenance"]["issues"] == 0);
}

TEST_CASE("data errors carry file and line") {
  icms::test::TempDir dir;
  write_dataset(generate_dataset(3, Profile{.streets = 1, .posts_per_street = 1, .months = 1}), dir.path());
  const auto hash = dataset_hash(dir.path());
  CHECK(hash.rfind("sha256:", 0) == 0);
  CHECK(hash.size() == 7 + 64);
  CHECK(dataset_hash(dir.path()) == hash);

  const auto radar = icms::test::slurp(dir / "radar.jsonl");
  const auto second = radar.find('\n') + 1;
  const auto third = radar.find('\n', second) + 1;
  icms::test::spit(dir / "radar.jsonl", radar.substr(0, third) + "{\"post_id\":\"p-1-1\",\"ts\":\n" + radar.substr(third));
  CHECK(dataset_hash(dir.path()) != hash);
  try {
    load_dataset(dir.path());
    FAIL("expected a data error");
  } catch (const DataFileError& e) {
    CHECK(e.file().filename() == "radar.jsonl");
    CHECK(e.line() == 3);
    CHECK(e.code() == ErrorCode::Parse);
  }

  icms::test::spit(dir / "radar.jsonl",
                   radar.substr(0, second) +
                       "{\"post_id\":\"p-1-1\",\"ts\":\"2023-03-01T00:00:00Z\",\"class\":\"light_vehicle\",\"speed_kmh\":-4}\n" +
                       radar.substr(second));
  try {
    load_dataset(dir.path());
    FAIL("expected a data error");
  } catch (const DataFileError& e) {
    CHECK(e.line() == 2);
    CHECK(e.code() == ErrorCode::Validation);
  }
  icms::test::spit(dir / "radar.jsonl", radar);

  icms::test::spit(dir / "rules.json", R"([{"name":"x","text":"speed >> 5"}])");
  CHECK(code_of([&] { load_dataset(dir.path()); }) == ErrorCode::RuleSyntax);

  icms::test::spit(dir / "config.json", R"({"cadence": 7})");
  CHECK(code_of([&] { load_dataset_config(dir.path(), std::nullopt); }) == ErrorCode::Config);
  CHECK(code_of([&] { load_dataset(dir / "missing"); }) == ErrorCode::NotFound);
}
