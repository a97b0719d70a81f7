#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "icms/error.hpp"
#include "icms/safety/engine.hpp"
#include "support.hpp"

using namespace icms;
using namespace icms::safety;
using icms::test::at;
using icms::test::date;

namespace {

const LocalCalendar kCal = icms::test::lisbon();

RadarReading car(const std::string& post, Instant ts, double speed,
                 ObjectClass c = ObjectClass::light_vehicle) {
  return RadarReading{post, ts, c, speed};
}

WindowFeatures window(std::string post, Instant start, long vehicles, long speeding, long peds, int hour,
                      std::optional<double> avg = std::nullopt) {
  WindowFeatures w;
  w.post_id = std::move(post);
  w.window_start = start;
  w.vehicle_count = vehicles;
  w.speeding_count = speeding;
  w.pedestrian_count = peds;
  w.hour_of_day = hour;
  w.avg_speed = avg;
  return w;
}

}  // namespace

TEST_CASE("window start floors to the cadence grid") {
  CHECK(window_start(at("2023-03-01T10:07:30Z"), 15, kCal) == at("2023-03-01T10:00:00Z"));
  CHECK(window_start(at("2023-03-01T10:15:00Z"), 15, kCal) == at("2023-03-01T10:15:00Z"));
  CHECK(window_start(at("2023-03-01T10:14:59Z"), 15, kCal) == at("2023-03-01T10:00:00Z"));
  CHECK(window_start(at("2023-07-01T10:59:59Z"), 60, kCal) == at("2023-07-01T10:00:00Z"));
}

TEST_CASE("every instant falls inside its window") {
  std::mt19937_64 rng(1);
  const int cadences[] = {1, 5, 10, 15, 20, 30, 60};
  for (int i = 0; i < 10000; ++i) {
    const Instant ts = at("2023-01-01T00:00:00Z") + std::chrono::seconds(rng() % (365LL * 86400));
    const int cadence = cadences[rng() % 7];
    const Instant start = window_start(ts, cadence, kCal);
    REQUIRE(start <= ts);
    REQUIRE(ts < start + std::chrono::minutes(cadence));
    REQUIRE(kCal.minute(start) % cadence == 0);
    REQUIRE(kCal.second(start) == 0);
  }
}

TEST_CASE("window features from the worked example") {
  const SmartPost p = icms::test::post("p1", "s1", 50);
  const Instant start = at("2023-03-01T10:00:00Z");
  const std::vector<RadarReading> cars{car("p1", start + std::chrono::minutes(1), 50),
                                       car("p1", start + std::chrono::minutes(2), 60)};
  const std::vector<PedestrianCount> peds{{"p1", start, 5}, {"p1", start + std::chrono::minutes(14), 7}};
  const auto f = compute_window_features(cars, peds, p, start, 15, kCal);
  CHECK(f.avg_speed == 55.0);
  CHECK(f.vehicle_count == 2);
  CHECK(f.speeding_count == 1);
  CHECK(f.pedestrian_count == 12);
  CHECK(f.hour_of_day == 10);

  const auto none = compute_window_features({}, {}, p, start, 15, kCal);
  CHECK_FALSE(none.avg_speed.has_value());
  CHECK(none.vehicle_count == 0);
  CHECK(none.speeding_count == 0);
  CHECK(none.pedestrian_count == 0);
}

TEST_CASE("window features enforce their contract") {
  const SmartPost p = icms::test::post("p1", "s1", 50);
  const Instant start = at("2023-03-01T10:00:00Z");
  auto code = [&](const std::vector<RadarReading>& cars, const std::vector<PedestrianCount>& peds) {
    try {
      compute_window_features(cars, peds, p, start, 15, kCal);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Validation;
  };
  CHECK(code({car("p1", start + std::chrono::minutes(15), 1)}, {}) == ErrorCode::Contract);
  CHECK(code({car("p1", start - std::chrono::seconds(1), 1)}, {}) == ErrorCode::Contract);
  CHECK(code({}, {{"p2", start, 1}}) == ErrorCode::Contract);
  CHECK(code({car("p1", start, 1, ObjectClass::other)}, {}) == ErrorCode::Contract);
}

TEST_CASE("window features match a brute-force recomputation") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    const int limit = 30 + static_cast<int>(rng() % 4) * 10;
    const SmartPost p = icms::test::post("p", "s", limit);
    const Instant start = at("2023-03-01T00:00:00Z") + std::chrono::minutes(15 * (rng() % 5000));
    std::vector<RadarReading> cars;
    std::vector<PedestrianCount> peds;
    const auto n = rng() % 12;
    for (std::size_t i = 0; i < n; ++i) {
      cars.push_back(car("p", start + std::chrono::seconds(rng() % 900), static_cast<double>(rng() % 900) / 10.0,
                         rng() % 2 ? ObjectClass::light_vehicle : ObjectClass::heavy_vehicle));
    }
    for (std::size_t i = 0, m = rng() % 4; i < m; ++i) {
      peds.push_back({"p", start + std::chrono::seconds(rng() % 900), static_cast<long>(rng() % 20)});
    }
    const auto f = compute_window_features(cars, peds, p, start, 15, kCal);

    double sum = 0;
    long fast = 0;
    long walkers = 0;
    for (const auto& c : cars) {
      sum += c.speed;
      if (c.speed > limit) ++fast;
    }
    for (const auto& q : peds) walkers += q.count;
    CHECK(f.vehicle_count == static_cast<long>(cars.size()));
    CHECK(f.speeding_count == fast);
    CHECK(f.pedestrian_count == walkers);
    CHECK(f.speeding_count <= f.vehicle_count);
    CHECK(f.avg_speed.has_value() == !cars.empty());
    if (!cars.empty()) {
      const auto [lo, hi] = std::minmax_element(cars.begin(), cars.end(),
                                                [](const auto& a, const auto& b) { return a.speed < b.speed; });
      CHECK(*f.avg_speed == doctest::Approx(sum / static_cast<double>(cars.size())));
      CHECK(*f.avg_speed >= lo->speed);
      CHECK(*f.avg_speed <= hi->speed);
    }
  }
}

TEST_CASE("compute_features filters classes and orders by window then post") {
  const PostRegistry posts({icms::test::post("a", "s"), icms::test::post("b", "s")});
  ingest::PostStreamBatch<RadarReading> radar;
  radar["b"] = {car("b", at("2023-03-01T10:01:00Z"), 40), car("b", at("2023-03-01T10:20:00Z"), 40)};
  radar["a"] = {car("a", at("2023-03-01T10:16:00Z"), 40, ObjectClass::other)};
  ingest::PostStreamBatch<PedestrianCount> peds;
  peds["a"] = {{"a", at("2023-03-01T10:02:00Z"), 4}};
  const auto f = compute_features(radar, peds, posts, 15, kCal);
  REQUIRE(f.size() == 3);
  CHECK(f[0].post_id == "a");
  CHECK(f[0].window_start == at("2023-03-01T10:00:00Z"));
  CHECK(f[1].post_id == "b");
  CHECK(f[1].window_start == at("2023-03-01T10:00:00Z"));
  CHECK(f[2].post_id == "b");
  CHECK(f[2].window_start == at("2023-03-01T10:15:00Z"));
  // the 'other' reading alone produces no window
  CHECK(std::none_of(f.begin(), f.end(), [](const auto& w) { return w.post_id == "a" && w.vehicle_count > 0; }));
}

TEST_CASE("evaluate_windows emits one violation per firing rule") {
  const std::vector<Rule> none;
  const std::vector<WindowFeatures> feats{window("p", at("2023-03-01T10:00:00Z"), 4, 3, 12, 10, 62.0)};
  CHECK(evaluate_windows(none, feats).empty());

  const std::vector<Rule> rules{make_rule(2, "b", "speeding_count >= 1 -> warning"),
                                make_rule(1, "a", "avg_speed > 50 AND pedestrian_count >= 10 -> danger")};
  const auto v = evaluate_windows(rules, feats);
  REQUIRE(v.size() == 2);
  CHECK(v[0].rule_id == 1);
  CHECK(v[0].severity == Severity::danger);
  CHECK(v[1].rule_id == 2);
  CHECK(v[1].severity == Severity::warning);
  CHECK(v[0].feature_snapshot == feats[0]);
}

TEST_CASE("evaluate_windows equals the cross product of eval_rule") {
  std::mt19937_64 rng(31);
  const char* texts[] = {"speeding_count >= 2 -> danger",
                         "avg_speed > 45 -> warning",
                         "pedestrian_count > 10 AND vehicle_count > 2 -> warning",
                         "NOT (hour_of_day < 6) AND speeding_count > 0 -> danger",
                         "vehicle_count == 0 OR pedestrian_count == 0 -> warning"};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Rule> rules;
    for (std::uint64_t id = 1; id <= 5; ++id) rules.push_back(make_rule(id, "r", texts[id - 1], rng() % 4 != 0));
    std::vector<WindowFeatures> feats;
    for (int i = 0; i < 300; ++i) {
      const long n = static_cast<long>(rng() % 6);
      feats.push_back(window("p" + std::to_string(rng() % 4),
                             at("2023-03-01T00:00:00Z") + std::chrono::minutes(15 * (rng() % 50)), n,
                             n ? static_cast<long>(rng() % (n + 1)) : 0, static_cast<long>(rng() % 20),
                             static_cast<int>(rng() % 24),
                             n ? std::optional<double>(static_cast<double>(rng() % 80)) : std::nullopt));
    }
    const auto got = evaluate_windows(rules, feats);

    std::multiset<std::tuple<Instant, std::uint64_t, std::string, Severity>> expected;
    for (const auto& f : feats) {
      for (const auto& r : rules) {
        if (auto s = eval_rule(r, f)) expected.emplace(f.window_start, r.rule_id, f.post_id, *s);
      }
    }
    std::multiset<std::tuple<Instant, std::uint64_t, std::string, Severity>> actual;
    for (const auto& v : got) {
      actual.emplace(v.window_start, v.rule_id, v.post_id, v.severity);
      // the snapshot re-fires its rule
      CHECK(eval_rule(*std::find_if(rules.begin(), rules.end(), [&](const Rule& r) { return r.rule_id == v.rule_id; }),
                      v.feature_snapshot) == v.severity);
    }
    CHECK(actual == expected);
    CHECK(std::is_sorted(got.begin(), got.end(), [](const Violation& a, const Violation& b) {
      return std::tie(a.window_start, a.rule_id) < std::tie(b.window_start, b.rule_id);
    }));

    // disabling a rule removes exactly its violations
    auto fewer = rules;
    const auto victim = 1 + rng() % 5;
    fewer[victim - 1].enabled = false;
    auto expect_fewer = got;
    std::erase_if(expect_fewer, [&](const Violation& v) { return v.rule_id == victim; });
    CHECK(evaluate_windows(fewer, feats) == expect_fewer);
  }
}

TEST_CASE("frequency levels") {
  Config c;
  const Instant now = at("2023-03-10T00:00:00Z");
  CHECK(frequency_level({}, "p", 1, now, c).band == FrequencyBand::low);
  CHECK(frequency_level({}, "p", 1, now, c).count == 0);

  auto v = [](const char* post, std::uint64_t rule, Instant t) {
    return Violation{rule, post, t, Severity::warning, {}};
  };
  std::vector<Violation> three{v("p", 1, now), v("p", 1, now - std::chrono::days(1)),
                               v("p", 1, now - std::chrono::days(6)), v("p", 1, now - std::chrono::days(7)),
                               v("p", 2, now), v("q", 1, now), v("p", 1, now + std::chrono::seconds(1))};
  const auto lvl = frequency_level(three, "p", 1, now, c);
  CHECK(lvl.count == 3);
  CHECK(lvl.band == FrequencyBand::medium);
  CHECK(frequency_band(9, c.frequency_bands) == FrequencyBand::medium);
  CHECK(frequency_band(10, c.frequency_bands) == FrequencyBand::high);
  CHECK(frequency_band(2, c.frequency_bands) == FrequencyBand::low);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Violation> vs;
    for (int i = 0; i < 60; ++i) {
      vs.push_back(v(rng() % 2 ? "p" : "q", 1 + rng() % 2, now - std::chrono::hours(rng() % 400) +
                                                               std::chrono::hours(24)));
    }
    long expected = 0;
    for (const auto& x : vs) {
      const auto age = now - x.window_start;
      if (x.post_id == "p" && x.rule_id == 1 && age >= std::chrono::seconds(0) && age < std::chrono::days(7)) {
        ++expected;
      }
    }
    CHECK(frequency_level(vs, "p", 1, now, c).count == expected);
  }
}

TEST_CASE("hourly ratio arithmetic") {
  const PostRegistry posts({icms::test::post("p1", "s1"), icms::test::post("p2", "s1"), icms::test::post("x", "s2")});
  // 14:00 local in March is 14:00 UTC
  const std::vector<WindowFeatures> feats{window("p1", at("2023-03-01T14:00:00Z"), 5, 3, 6, 14),
                                          window("p2", at("2023-03-01T14:15:00Z"), 5, 2, 4, 14),
                                          window("p1", at("2023-03-01T09:00:00Z"), 3, 3, 0, 9),
                                          window("x", at("2023-03-01T14:00:00Z"), 9, 9, 0, 14)};
  const auto r = hourly_speeding_ratio("s1", date("2023-03-01"), date("2023-03-01"), feats, posts, kCal, 1.0);
  CHECK(r.speeding[14] == 5);
  CHECK(r.pedestrians[14] == 10);
  CHECK(r.ratio[14] == 0.5);
  CHECK_FALSE(r.exceeded[14]);
  CHECK(r.ratio[9] == 3.0);
  CHECK(r.exceeded[9]);
  CHECK(r.ratio[0] == 0.0);

  const auto outside = hourly_speeding_ratio("s1", date("2023-03-02"), date("2023-03-05"), feats, posts, kCal, 1.0);
  CHECK(outside.speeding[14] == 0);

  CHECK_THROWS_WITH_AS(hourly_speeding_ratio("nowhere", date("2023-03-01"), date("2023-03-01"), feats, posts, kCal, 1),
                       doctest::Contains("nowhere"), Error);
  CHECK_THROWS_AS(hourly_speeding_ratio("s1", date("2023-03-02"), date("2023-03-01"), feats, posts, kCal, 1), Error);
}

TEST_CASE("hourly ratio over a synthetic month matches brute force and ignores order") {
  const PostRegistry posts({icms::test::post("p1", "s1"), icms::test::post("p2", "s1"), icms::test::post("x", "s2")});
  std::mt19937_64 rng(12);
  std::vector<WindowFeatures> feats;
  const char* ids[] = {"p1", "p2", "x"};
  for (Instant t = at("2023-03-01T00:00:00Z"); t < at("2023-04-01T00:00:00Z"); t += std::chrono::minutes(15)) {
    for (const char* id : ids) {
      const long n = static_cast<long>(rng() % 6);
      feats.push_back(window(id, t, n, n ? static_cast<long>(rng() % (n + 1)) : 0, static_cast<long>(rng() % 5),
                             kCal.hour(t)));
    }
  }
  const auto r = hourly_speeding_ratio("s1", date("2023-03-05"), date("2023-03-25"), feats, posts, kCal, 0.4);

  std::array<long, 24> fast{};
  std::array<long, 24> walk{};
  for (const auto& f : feats) {
    if (f.post_id == "x") continue;
    const auto d = kCal.date(f.window_start);
    if (d < date("2023-03-05") || date("2023-03-25") < d) continue;
    fast[kCal.hour(f.window_start)] += f.speeding_count;
    walk[kCal.hour(f.window_start)] += f.pedestrian_count;
  }
  for (int h = 0; h < 24; ++h) {
    const double ratio = static_cast<double>(fast[h]) / static_cast<double>(walk[h] > 0 ? walk[h] : 1);
    CHECK(r.ratio[h] == ratio);
    CHECK(r.exceeded[h] == (ratio > 0.4));
  }

  auto shuffled = feats;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto again = hourly_speeding_ratio("s1", date("2023-03-05"), date("2023-03-25"), shuffled, posts, kCal, 0.4);
  CHECK(again.ratio == r.ratio);
  CHECK(again.exceeded == r.exceeded);
}

TEST_CASE("violation JSON") {
  const auto j = to_json(Violation{3, "p", at("2023-03-01T10:00:00Z"), Severity::danger,
                                   window("p", at("2023-03-01T10:00:00Z"), 0, 0, 2, 10)});
  CHECK(j["rule_id"] == 3);
  CHECK(j["severity"] == "danger");
  CHECK(j["features"]["avg_speed"].is_null());
  CHECK(j["window_start"] == "2023-03-01T10:00:00Z");
}
