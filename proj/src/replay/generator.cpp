#include "icms/replay/generator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <tuple>

#include "icms/error.hpp"
#include "icms/geo.hpp"

namespace icms::replay {
namespace {

using nlohmann::json;
using namespace std::chrono;

// Mean pedestrians per post per 15-minute reading, by local hour.
constexpr std::array<double, 24> kWorkdayPedestrians{1, 1, 0.5, 0.5, 0.5, 1, 2, 6, 10, 7, 5, 6,
                                                     8, 7, 5, 5, 7, 10, 8, 5, 3, 2, 2, 1};
constexpr std::array<double, 24> kWeekendPedestrians{1.5, 1, 1, 0.5, 0.5, 0.5, 1, 2, 3, 5, 7, 8,
                                                     9, 8, 7, 7, 7, 6, 5, 4, 3, 3, 2, 2};
// Mean vehicles per post per hour, by local hour.
constexpr std::array<double, 24> kWorkdayVehicles{2, 1, 1, 1, 1, 2, 5, 12, 15, 10, 8, 8,
                                                  9, 8, 8, 9, 12, 15, 10, 7, 5, 4, 3, 2};
constexpr std::array<double, 24> kWeekendVehicles{3, 2, 1, 1, 1, 1, 2, 3, 5, 7, 8, 9,
                                                  9, 8, 8, 8, 8, 7, 6, 5, 4, 4, 3, 3};

constexpr std::array<int, 3> kSpeedLimits{50, 40, 30};

constexpr const char* kHolidays[] = {"2023-01-01", "2023-02-21", "2023-04-07", "2023-04-09", "2023-04-25",
                                     "2023-05-01", "2023-06-08", "2023-06-10", "2023-08-15", "2023-10-05",
                                     "2023-11-01", "2023-12-01", "2023-12-08", "2023-12-25", "2024-01-01",
                                     "2024-02-13", "2024-03-29", "2024-03-31", "2024-04-25", "2024-05-01",
                                     "2024-05-30", "2024-06-10", "2024-08-15", "2024-10-05", "2024-11-01",
                                     "2024-12-01", "2024-12-08", "2024-12-25"};

struct ClusterSpec {
  const char* detection_class;
  double min_confidence;
  double max_confidence;
  const char* urgency;  // under the default urgency cuts
};
constexpr std::array<ClusterSpec, 3> kClusters{{{"pothole", 0.25, 0.41, "routine"},
                                                {"flood", 0.52, 0.67, "elevated"},
                                                {"fire", 0.81, 0.92, "urgent"}}};

// scale = 1 / unit keeps the result the double nearest the decimal value
double round_to(double v, double scale) { return std::round(v * scale) / scale; }

std::string street_id(int i) { return "st-" + std::to_string(i + 1); }
std::string post_id(int i, int j) { return "p-" + std::to_string(i + 1) + "-" + std::to_string(j + 1); }

struct Line {
  Instant ts;
  std::string post;
  json body;
};

std::string render(std::vector<Line>& lines) {
  std::stable_sort(lines.begin(), lines.end(),
                   [](const Line& a, const Line& b) { return std::tie(a.ts, a.post) < std::tie(b.ts, b.post); });
  std::string out;
  for (const auto& l : lines) {
    out += l.body.dump();
    out += '\n';
  }
  return out;
}

json radar_line(const std::string& post, Instant ts, const char* cls, double speed) {
  return {{"post_id", post}, {"ts", format_instant(ts)}, {"class", cls}, {"speed_kmh", speed}};
}

const char* background_class(double u) {
  if (u < 0.85) return "light_vehicle";
  if (u < 0.95) return "heavy_vehicle";
  if (u < 0.98) return "bicycle";
  return "other";
}

}  // namespace

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

long Rng::uniform_int(long lo, long hi) {
  const auto span = static_cast<double>(hi - lo + 1);
  return std::min(hi, lo + static_cast<long>(std::floor(uniform() * span)));
}

double Rng::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  return r * std::cos(theta);
}

void validate_profile(const Profile& p) {
  auto require = [](bool ok, const char* field, const char* rule) {
    if (!ok) throw Error(ErrorCode::Argument, std::string("profile ") + field + " " + rule);
  };
  require(p.streets >= 1 && p.streets <= 26, "streets", "must lie in [1, 26]");
  require(p.posts_per_street >= 1 && p.posts_per_street <= 20, "posts_per_street", "must lie in [1, 20]");
  require(p.months >= 1 && p.months <= 12, "months", "must lie in [1, 12]");
  require(p.start.ok(), "start", "must be a valid date");
  require(std::isfinite(p.noise) && p.noise >= 0.0 && p.noise <= 50.0, "noise", "must lie in [0, 50]");
  require(p.speeding_episodes >= 0 && p.speeding_episodes <= 10000, "speeding_episodes", "must lie in [0, 10000]");
  require(p.detection_clusters >= 0 && p.detection_clusters <= 20, "detection_clusters", "must lie in [0, 20]");
  require(p.dead_letter >= 0 && p.dead_letter <= 1000, "dead_letter", "must lie in [0, 1000]");
}

json to_json(const Profile& p) {
  return {{"streets", p.streets},
          {"posts_per_street", p.posts_per_street},
          {"months", p.months},
          {"start", format_date(p.start)},
          {"noise", p.noise},
          {"zero_nights", p.zero_nights},
          {"speeding_episodes", p.speeding_episodes},
          {"detection_clusters", p.detection_clusters},
          {"outage", p.outage},
          {"dead_letter", p.dead_letter}};
}

GeneratedDataset generate_dataset(std::uint64_t seed, const Profile& p) {
  validate_profile(p);
  Rng rng(seed);

  const Date end_date{year_month_day{p.start.year(), p.start.month(), p.start.day()} + months{p.months}};
  std::vector<Date> holidays;
  for (const char* h : kHolidays) {
    const Date d = parse_date(h);
    if (!(d < p.start) && d < end_date) holidays.push_back(d);
  }
  const LocalCalendar cal("Europe/Lisbon", holidays);
  const Instant from = cal.at_local(p.start, 0);
  const Instant to = cal.at_local(end_date, 0);
  const Date boundary_date{year_month_day{p.start.year(), p.start.month(), day{1}} + months{1}};

  json posts = json::array();
  for (int i = 0; i < p.streets; ++i) {
    for (int j = 0; j < p.posts_per_street; ++j) {
      posts.push_back({{"post_id", post_id(i, j)},
                       {"street_id", street_id(i)},
                       {"lat", round_to(40.6405 + 0.004 * i, 1e7)},
                       {"lon", round_to(-8.6538 + 0.0006 * j, 1e7)},
                       {"speed_limit", kSpeedLimits[static_cast<std::size_t>(i) % kSpeedLimits.size()]},
                       {"lamp_count", 10},
                       {"lamp_wattage", 80},
                       {"dimmable", i % 2 == 0}});
    }
  }

  const int outage_street = p.streets - 1;
  const Instant outage_from = cal.at_local(Date{sys_days{p.start} + days{10}}, 14);
  const Instant outage_to = outage_from + 2 * kHour;
  auto in_outage = [&](int street, Instant t) {
    return p.outage && street == outage_street && t >= outage_from && t < outage_to;
  };
  auto planted_zero = [&](int street, Instant hour) {
    const int h = cal.hour(hour);
    return p.zero_nights && street == 0 && h >= 1 && h < 5;
  };

  std::vector<Line> radar;
  std::vector<Line> pedestrians;
  std::vector<Line> detections;

  for (Instant t = from; t < to; t += kHour) {
    const int h = cal.hour(t);
    const bool weekend = cal.day_type(t) == DayType::weekend;
    const auto& ped_mean = weekend ? kWeekendPedestrians : kWorkdayPedestrians;
    const auto& veh_mean = weekend ? kWeekendVehicles : kWorkdayVehicles;
    for (int i = 0; i < p.streets; ++i) {
      if (in_outage(i, t)) continue;
      const bool zero = planted_zero(i, t);
      const double scale = 1.0 + 0.25 * i;
      const int limit = kSpeedLimits[static_cast<std::size_t>(i) % kSpeedLimits.size()];
      const std::size_t first_reading = pedestrians.size();
      long total = 0;
      for (int j = 0; j < p.posts_per_street; ++j) {
        const auto post = post_id(i, j);
        for (int q = 0; q < 4; ++q) {
          const Instant ts = t + minutes{15 * q};
          long count = 0;
          if (!zero) count = std::max(0L, std::lround(ped_mean[h] * scale + p.noise * rng.normal()));
          pedestrians.push_back({ts, post, {{"post_id", post}, {"ts", format_instant(ts)}, {"count", count}}});
          total += count;
        }
        if (zero) continue;
        const long vehicles = std::max(0L, std::lround(veh_mean[h] * scale + 0.5 * p.noise * rng.normal()));
        for (long k = 0; k < vehicles; ++k) {
          const Instant ts = t + seconds{rng.uniform_int(0, 3599)};
          const double speed = round_to(limit * rng.uniform(0.55, 0.98), 10.0);
          radar.push_back({ts, post, radar_line(post, ts, background_class(rng.uniform()), speed)});
        }
        total += vehicles;
      }
      // only planted hours may be dark
      if (!zero && total == 0) pedestrians[first_reading].body["count"] = 1;
    }
  }

  const long hours = duration_cast<std::chrono::hours>(to - from).count();
  std::set<std::pair<Instant, std::string>> episodes;
  for (int attempt = 0; std::ssize(episodes) < p.speeding_episodes && attempt < 100 * p.speeding_episodes + 100;
       ++attempt) {
    const int i = static_cast<int>(rng.uniform_int(0, p.streets - 1));
    const int j = static_cast<int>(rng.uniform_int(0, p.posts_per_street - 1));
    const Instant hour = from + kHour * rng.uniform_int(0, hours - 1);
    const Instant start = hour + minutes{15 * rng.uniform_int(0, 3)};
    if (planted_zero(i, hour) || in_outage(i, hour)) continue;
    const auto post = post_id(i, j);
    if (!episodes.emplace(start, post).second) continue;
    const int limit = kSpeedLimits[static_cast<std::size_t>(i) % kSpeedLimits.size()];
    const long n = rng.uniform_int(3, 6);
    for (long k = 0; k < n; ++k) {
      const Instant ts = start + seconds{rng.uniform_int(0, 899)};
      radar.push_back({ts, post, radar_line(post, ts, "light_vehicle", round_to(limit + rng.uniform(5.0, 30.0), 10.0))});
    }
  }

  for (int k = 0; k < p.dead_letter; ++k) {
    const Instant ts = from + seconds{rng.uniform_int(0, hours * 3600 - 1)};
    if (k % 2 == 0) {
      radar.push_back({ts, "p-unknown", radar_line("p-unknown", ts, "light_vehicle", 42.0)});
    } else {
      pedestrians.push_back(
          {ts, "p-unknown", {{"post_id", "p-unknown"}, {"ts", format_instant(ts)}, {"count", 3}}});
    }
  }

  json clusters = json::array();
  for (int c = 0; c < p.detection_clusters; ++c) {
    const auto& spec = kClusters[static_cast<std::size_t>(c) % kClusters.size()];
    const LatLon centre{round_to(40.60 + 0.02 * c, 1e7), round_to(-8.70 + 0.01 * c, 1e7)};
    const long n = rng.uniform_int(4, 7);
    const long peak = rng.uniform_int(0, n - 1);
    std::vector<Instant> times;
    for (long k = 0; k < n; ++k) times.push_back(from + seconds{rng.uniform_int(0, hours * 3600 - 1)});
    std::sort(times.begin(), times.end());
    for (long k = 0; k < n; ++k) {
      const double r = 8.0 * std::sqrt(rng.uniform());
      const double theta = 2.0 * std::numbers::pi * rng.uniform();
      const double m_per_deg = kEarthRadiusM * std::numbers::pi / 180.0;
      const double lat = round_to(centre.lat + r * std::cos(theta) / m_per_deg, 1e7);
      const double lon = round_to(
          centre.lon + r * std::sin(theta) / (m_per_deg * std::cos(centre.lat * std::numbers::pi / 180.0)), 1e7);
      const double conf =
          k == peak ? spec.max_confidence : round_to(rng.uniform(spec.min_confidence, spec.max_confidence), 100.0);
      char ref[64];
      std::snprintf(ref, sizeof ref, "img/cluster-%d/%03ld.jpg", c + 1, k + 1);
      detections.push_back({times[static_cast<std::size_t>(k)], "cam-1",
                            {{"source_id", "cam-1"},
                             {"ts", format_instant(times[static_cast<std::size_t>(k)])},
                             {"class", spec.detection_class},
                             {"confidence", conf},
                             {"lat", lat},
                             {"lon", lon},
                             {"image_ref", ref}}});
    }
    clusters.push_back({{"class", spec.detection_class},
                        {"center", {{"lat", centre.lat}, {"lon", centre.lon}}},
                        {"detections", n},
                        {"max_confidence", spec.max_confidence},
                        {"urgency", spec.urgency}});
  }

  // Truth: maximal runs of planted dark hours.
  json zero_blocks = json::array();
  if (p.zero_nights) {
    Instant run_start{};
    int run = 0;
    for (Instant t = from; t <= to; t += kHour) {
      if (t < to && planted_zero(0, t)) {
        if (run == 0) run_start = t;
        ++run;
      } else if (run > 0) {
        zero_blocks.push_back({{"street_id", street_id(0)}, {"start", format_instant(run_start)}, {"hours", run}});
        run = 0;
      }
    }
  }
  json speeding = json::array();
  for (const auto& [start, post] : episodes) {
    speeding.push_back({{"post_id", post}, {"window_start", format_instant(start)}});
  }

  json rules = json::array({
      {{"name", "repeated speeding"}, {"text", "speeding_count >= 3 -> danger"}, {"enabled", true}},
      {{"name", "fast traffic near pedestrians"},
       {"text", "avg_speed > 45 AND pedestrian_count >= 8 -> warning"},
       {"enabled", true}},
      {{"name", "night speeding"},
       {"text", "speeding_count >= 1 AND (hour_of_day >= 22 OR hour_of_day < 6) -> warning"},
       {"enabled", true}},
  });

  json holiday_list = json::array();
  for (const auto& d : holidays) holiday_list.push_back(format_date(d));

  GeneratedDataset out;
  out.truth = {{"seed", seed},
               {"profile", to_json(p)},
               {"span", {{"from", format_instant(from)}, {"to", format_instant(to)}}},
               {"boundary", format_instant(cal.at_local(boundary_date, 0))},
               {"zero_blocks", zero_blocks},
               {"speeding_rule_id", 1},
               {"speeding_windows", speeding},
               {"clusters", clusters},
               {"outage",
                p.outage ? json{{"street_id", street_id(outage_street)},
                                {"from", format_instant(outage_from)},
                                {"to", format_instant(outage_to)}}
                         : json(nullptr)},
               {"quarantined", p.dead_letter},
               {"events",
                {{"radar", radar.size()}, {"pedestrian", pedestrians.size()}, {"detection", detections.size()}}}};

  out.files["posts.json"] = posts.dump(2) + "\n";
  out.files["config.json"] = json{{"holidays", holiday_list}}.dump(2) + "\n";
  out.files["rules.json"] = rules.dump(2) + "\n";
  out.files["radar.jsonl"] = render(radar);
  out.files["pedestrians.jsonl"] = render(pedestrians);
  out.files["detections.jsonl"] = render(detections);
  out.files["truth.json"] = out.truth.dump(2) + "\n";
  return out;
}

void write_dataset(const GeneratedDataset& d, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Storage, "cannot create " + dir.string() + ": " + ec.message());
  for (const auto& [name, bytes] : d.files) {
    std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error(ErrorCode::Storage, "cannot write " + (dir / name).string());
  }
}

}  // namespace icms::replay
