#include <doctest.h>

#include <atomic>
#include <random>
#include <thread>

#include "icms/error.hpp"
#include "icms/service/city_service.hpp"
#include "support.hpp"

using namespace icms;
using namespace icms::service;
using icms::test::at;
using nlohmann::json;

namespace {

PostRegistry two_posts() {
  return PostRegistry({icms::test::post("p1", "s1", 50), icms::test::post("p2", "s1", 30)});
}

CityService::Clock fixed_clock() {
  return [] { return std::string("2023-06-01T00:00:00Z"); };
}

std::string radar_line(const std::string& post, const std::string& ts, double speed) {
  return json{{"post_id", post}, {"ts", ts}, {"class", "light_vehicle"}, {"speed_kmh", speed}}.dump() + "\n";
}

std::string peds_line(const std::string& post, const std::string& ts, long count) {
  return json{{"post_id", post}, {"ts", ts}, {"count", count}}.dump() + "\n";
}

std::string detection_line(const std::string& cls, double conf, double lat, const std::string& ts) {
  return json{{"source_id", "cam"}, {"ts", ts}, {"class", cls}, {"confidence", conf}, {"lat", lat}, {"lon", -8.65}}
             .dump() +
         "\n";
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

// Mixed traffic over several days for both posts plus a stray post.
void populate(CityService& svc, int events, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::string radar;
  std::string peds;
  std::string dets;
  const Instant t0 = at("2023-03-01T00:00:00Z");
  for (int i = 0; i < events; ++i) {
    const Instant ts = t0 + std::chrono::seconds(rng() % (10 * 86400));
    const auto roll = rng() % 20;
    const std::string post = roll == 0 ? "stray" : (rng() % 2 ? "p1" : "p2");
    if (roll < 12) {
      radar += radar_line(post, format_instant(ts), static_cast<double>(20 + rng() % 50));
    } else if (roll < 19) {
      peds += peds_line(post, format_instant(ts), static_cast<long>(rng() % 15));
    } else {
      dets += detection_line(rng() % 2 ? "pothole" : "flood", static_cast<double>(rng() % 100) / 100.0,
                             40.64 + static_cast<double>(rng() % 50) * 0.0001, format_instant(ts));
    }
    if ((i + 1) % 500 == 0 || i + 1 == events) {
      if (!radar.empty()) svc.ingest(ingest::FeedKind::radar, radar);
      if (!peds.empty()) svc.ingest(ingest::FeedKind::pedestrian, peds);
      if (!dets.empty()) svc.ingest(ingest::FeedKind::detection, dets);
      radar.clear();
      peds.clear();
      dets.clear();
    }
  }
}

}  // namespace

TEST_CASE("ingest counts accepted and quarantined records") {
  icms::test::TempDir dir;
  CityService svc(Config{}, two_posts(), dir.path(), fixed_clock());
  const auto r = svc.ingest(ingest::FeedKind::radar, radar_line("p1", "2023-03-01T10:00:00Z", 52) +
                                                         radar_line("ghost", "2023-03-01T10:01:00Z", 40) +
                                                         radar_line("p2", "2023-03-01T10:02:00Z", 35));
  CHECK(r.accepted == 2);
  CHECK(r.quarantined == 1);
  CHECK(r.last_sequence == 3);

  const auto arr = svc.ingest(ingest::FeedKind::pedestrian,
                              "[" + json{{"post_id", "p1"}, {"ts", "2023-03-01T10:03:00Z"}, {"count", 4}}.dump() + "]");
  CHECK(arr.accepted == 1);
  CHECK(arr.last_sequence == 4);

  svc.read([](const CityState& s) {
    CHECK(s.radar().at("p1").size() == 1);
    CHECK(s.dead_letter().size() == 1);
    CHECK(s.event_count("radar") == 3);
    CHECK(s.features()->size() == 2);
    return 0;
  });
}

TEST_CASE("a bad record rejects the whole batch and leaves the log untouched") {
  icms::test::TempDir dir;
  CityService svc(Config{}, two_posts(), dir.path(), fixed_clock());
  svc.ingest(ingest::FeedKind::radar, radar_line("p1", "2023-03-01T10:00:00Z", 52));
  const auto before = icms::test::slurp(dir / CityService::kLogFile);

  try {
    svc.ingest(ingest::FeedKind::pedestrian,
               peds_line("p1", "2023-03-01T10:00:00Z", 3) + peds_line("p1", "2023-03-01T10:01:00Z", -3));
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Validation);
    CHECK(std::string(e.what()).find("record 2") != std::string::npos);
  }
  CHECK(code_of([&] { svc.ingest(ingest::FeedKind::radar, "{\"post_id\": "); }) == ErrorCode::Parse);
  CHECK(icms::test::slurp(dir / CityService::kLogFile) == before);
  CHECK(svc.last_sequence() == 1);
}

TEST_CASE("rule lifecycle") {
  icms::test::TempDir dir;
  CityService svc(Config{}, two_posts(), dir.path(), fixed_clock());
  const auto r1 = svc.create_rule("speeding", "speeding_count >= 1 -> danger", true);
  CHECK(r1.rule_id == 1);
  const auto r2 = svc.create_rule("busy", "pedestrian_count > 10 -> warning", false);
  CHECK(r2.rule_id == 2);
  CHECK_FALSE(r2.enabled);

  const auto before = icms::test::slurp(dir / CityService::kLogFile);
  CHECK(code_of([&] { svc.create_rule("bad", "speed >> 5", true); }) == ErrorCode::RuleSyntax);
  CHECK(code_of([&] { svc.update_rule(9, "x", "speeding_count > 0 -> warning", true); }) == ErrorCode::NotFound);
  CHECK(code_of([&] { svc.update_rule(1, "x", "nonsense_feature > 0 -> warning", true); }) == ErrorCode::RuleSyntax);
  CHECK(code_of([&] { svc.delete_rule(7); }) == ErrorCode::NotFound);
  CHECK(icms::test::slurp(dir / CityService::kLogFile) == before);

  const auto updated = svc.update_rule(1, "speeding2", "speeding_count >= 2 -> danger", true);
  CHECK(updated.name == "speeding2");
  svc.delete_rule(2);
  // ids are never reused
  CHECK(svc.create_rule("again", "vehicle_count > 100 -> warning", true).rule_id == 3);
  svc.read([](const CityState& s) {
    CHECK(s.rules()->size() == 2);
    CHECK_FALSE(s.rule(2).has_value());
    return 0;
  });

  svc.ingest(ingest::FeedKind::radar, radar_line("p1", "2023-03-01T10:00:00Z", 60) +
                                          radar_line("p1", "2023-03-01T10:01:00Z", 61) +
                                          radar_line("p1", "2023-03-01T10:20:00Z", 61));
  const auto v = svc.read([](const CityState& s) { return s.violations(); });
  REQUIRE(v.size() == 1);
  CHECK(v[0].window_start == at("2023-03-01T10:00:00Z"));
}

TEST_CASE("issue transitions are persisted") {
  icms::test::TempDir dir;
  {
    CityService svc(Config{}, two_posts(), dir.path(), fixed_clock());
    svc.ingest(ingest::FeedKind::detection, detection_line("pothole", 0.41, 40.64, "2023-03-01T10:00:00Z"));
    CHECK(svc.transition_issue(1, maintenance::Transition::acknowledge).status ==
          maintenance::IssueStatus::acknowledged);
    CHECK(code_of([&] { svc.transition_issue(1, maintenance::Transition::acknowledge); }) == ErrorCode::State);
    CHECK(code_of([&] { svc.transition_issue(5, maintenance::Transition::resolve); }) == ErrorCode::NotFound);
  }
  CityService again(Config{}, two_posts(), dir.path(), fixed_clock());
  again.read([](const CityState& s) {
    CHECK(s.registry().find(1)->status == maintenance::IssueStatus::acknowledged);
    return 0;
  });
}

TEST_CASE("training builds per-street models and records skipped streets") {
  icms::test::TempDir dir;
  PostRegistry posts({icms::test::post("p1", "s1"), icms::test::post("q", "quiet")});
  CityService svc(Config{}, posts, dir.path(), fixed_clock());
  std::string body;
  for (int h = 0; h < 48; ++h) {
    body += peds_line("p1", format_instant(at("2023-03-01T00:00:00Z") + h * kHour), h % 24);
  }
  svc.ingest(ingest::FeedKind::pedestrian, body);
  const auto out = svc.train(at("2023-03-01T00:00:00Z"), at("2023-03-03T00:00:00Z"));
  REQUIRE(out.trained.size() == 1);
  CHECK(out.trained[0].street_id == "s1");
  CHECK(out.skipped.contains("quiet"));
  CHECK(code_of([&] { svc.train(at("2023-03-03T00:00:00Z"), at("2023-03-01T00:00:00Z")); }) == ErrorCode::Argument);

  const auto f = svc.read([](const CityState& s) { return s.forecast("s1", at("2023-03-06T00:00:00Z")); });
  CHECK(f.points[5].predicted == 5.0);
  CHECK(code_of([&] { svc.read([](const CityState& s) { return s.forecast("quiet", std::nullopt); }); }) ==
        ErrorCode::NotFound);
  CHECK(code_of([&] { svc.read([](const CityState& s) { return s.forecast("nowhere", std::nullopt); }); }) ==
        ErrorCode::NotFound);
}

TEST_CASE("restart reproduces a byte-identical export") {
  icms::test::TempDir dir;
  std::string before;
  {
    CityService svc(Config{}, two_posts(), dir.path(), fixed_clock());
    svc.create_rule("fast", "speeding_count >= 2 -> danger", true);
    svc.create_rule("busy", "pedestrian_count >= 10 AND vehicle_count >= 1 -> warning", true);
    populate(svc, 3000, 11);
    svc.train(at("2023-03-01T00:00:00Z"), at("2023-03-08T00:00:00Z"));
    svc.transition_issue(1, maintenance::Transition::acknowledge);
    svc.update_rule(2, "busy", "pedestrian_count >= 12 -> warning", true);
    before = svc.export_state().dump(2);
    CHECK(svc.last_sequence() == 3000 + 5);
  }
  CityService again(Config{}, two_posts(), dir.path(), fixed_clock());
  CHECK(again.export_state().dump(2) == before);
  CHECK(recover_state(Config{}, two_posts(), dir / CityService::kLogFile)->export_state().dump(2) == before);

  const auto state = json::parse(before);
  CHECK(state["events"]["radar"].get<long>() + state["events"]["pedestrian"].get<long>() +
            state["events"]["detection"].get<long>() ==
        3000);
  CHECK(state["models"].contains("s1"));
  CHECK_FALSE(state["violations"].empty());
}

TEST_CASE("a torn final line is dropped on restart") {
  icms::test::TempDir dir;
  std::string complete;
  {
    CityService svc(Config{}, two_posts(), dir.path(), fixed_clock());
    populate(svc, 600, 5);
    complete = svc.export_state().dump();
  }
  const auto file = dir / CityService::kLogFile;
  const auto bytes = icms::test::slurp(file);
  icms::test::spit(file, bytes + "{\"seq\":601,\"kind\":\"radar\",\"payl");
  CityService svc(Config{}, two_posts(), dir.path(), fixed_clock());
  CHECK(svc.export_state().dump() == complete);
  CHECK(icms::test::slurp(file) == bytes);
  CHECK(svc.ingest(ingest::FeedKind::radar, radar_line("p1", "2023-03-01T10:00:00Z", 52)).last_sequence == 601);
}

TEST_CASE("a corrupt record stops recovery with its sequence number") {
  icms::test::TempDir dir;
  {
    CityService svc(Config{}, two_posts(), dir.path(), fixed_clock());
    populate(svc, 10, 5);
  }
  const auto file = dir / CityService::kLogFile;
  auto bytes = icms::test::slurp(file);
  const auto third = bytes.find('\n', bytes.find('\n') + 1) + 1;
  bytes[third + 3] = 'X';
  icms::test::spit(file, bytes);
  try {
    CityService svc(Config{}, two_posts(), dir.path(), fixed_clock());
    FAIL("expected a recovery error");
  } catch (const RecoveryError& e) {
    CHECK(e.sequence() == 3);
  }

  // records that parse but do not apply are reported the same way
  icms::test::spit(file, "{\"seq\":1,\"kind\":\"rule_delete\",\"payload\":{\"id\":4},\"received_at\":\"\"}\n");
  try {
    CityService svc(Config{}, two_posts(), dir.path(), fixed_clock());
    FAIL("expected a recovery error");
  } catch (const RecoveryError& e) {
    CHECK(e.sequence() == 1);
  }
}

TEST_CASE("readers run alongside a writer") {
  icms::test::TempDir dir;
  CityService svc(Config{}, two_posts(), dir.path(), fixed_clock());
  svc.create_rule("fast", "speeding_count >= 1 -> warning", true);
  std::atomic<bool> done{false};
  std::atomic<long> reads{0};
  std::vector<std::thread> readers;
  for (int i = 0; i < 4; ++i) {
    readers.emplace_back([&] {
      while (!done) {
        const auto n = svc.read([](const CityState& s) {
          const auto v = s.violations();
          // a snapshot never holds more violations than vehicle windows
          long windows = 0;
          for (const auto& f : *s.features()) windows += f.vehicle_count > 0 ? 1 : 0;
          CHECK(static_cast<long>(v.size()) <= windows);
          return s.last_sequence();
        });
        CHECK(n <= svc.last_sequence());
        ++reads;
      }
    });
  }
  populate(svc, 4000, 21);
  done = true;
  for (auto& t : readers) t.join();
  CHECK(reads > 0);
  CHECK(svc.last_sequence() == 4001);
}
