#include "icms/energy.hpp"

#include <algorithm>
#include <cmath>

#include "icms/error.hpp"

namespace icms::energy {
namespace {

using nlohmann::json;

constexpr int kMaxRepairPasses = 64;
constexpr double kForecastIdleBelow = 0.5;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Value at index i interpolated from the nearest usable neighbors; a single
// neighbor is carried over flat.
double interpolate(const std::vector<SeriesPoint>& pts, const std::vector<bool>& usable, std::size_t i) {
  std::optional<std::size_t> left;
  std::optional<std::size_t> right;
  for (std::size_t j = i; j-- > 0;) {
    if (usable[j]) {
      left = j;
      break;
    }
  }
  for (std::size_t j = i + 1; j < pts.size(); ++j) {
    if (usable[j]) {
      right = j;
      break;
    }
  }
  if (left && right) {
    const double a = *pts[*left].count;
    const double b = *pts[*right].count;
    return a + (b - a) * static_cast<double>(i - *left) / static_cast<double>(*right - *left);
  }
  return left ? *pts[*left].count : *pts[*right].count;
}

std::size_t replace_outliers(std::vector<SeriesPoint>& pts, double k) {
  std::vector<double> present;
  for (const auto& p : pts) {
    if (p.count) present.push_back(*p.count);
  }
  const auto [q1, q3] = quartiles(present);
  const double iqr = q3 - q1;
  const double lo = q1 - k * iqr;
  const double hi = q3 + k * iqr;

  std::vector<bool> usable(pts.size());
  std::size_t outliers = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const bool inside = pts[i].count && *pts[i].count >= lo && *pts[i].count <= hi;
    usable[i] = inside;
    if (pts[i].count && !inside) ++outliers;
  }
  if (outliers == 0) return 0;

  std::vector<std::pair<std::size_t, double>> repairs;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].count && !usable[i]) repairs.emplace_back(i, interpolate(pts, usable, i));
  }
  for (const auto& [i, v] : repairs) pts[i].count = v;
  return outliers;
}

std::vector<SeriesPoint> normalise_grid(const std::vector<SeriesPoint>& raw) {
  // hour -> (sum, present count, seen)
  std::map<Instant, std::pair<double, long>> by_hour;
  for (const auto& p : raw) {
    auto& slot = by_hour[floor_hour(p.hour)];
    if (p.count && std::isfinite(*p.count) && *p.count >= 0.0) {
      slot.first += *p.count;
      ++slot.second;
    }
  }
  std::vector<SeriesPoint> grid;
  if (by_hour.empty()) return grid;
  const Instant first = by_hour.begin()->first;
  const Instant last = by_hour.rbegin()->first;
  for (Instant t = first; t <= last; t += kHour) {
    SeriesPoint pt{t, std::nullopt};
    if (auto it = by_hour.find(t); it != by_hour.end() && it->second.second > 0) {
      pt.count = it->second.first / static_cast<double>(it->second.second);
    }
    grid.push_back(pt);
  }
  return grid;
}

}  // namespace

MovementSeries build_movement_series(const std::string& street_id,
                                     const ingest::PostStreamBatch<RadarReading>& radar,
                                     const ingest::PostStreamBatch<PedestrianCount>& pedestrians,
                                     const PostRegistry& posts,
                                     std::optional<std::pair<Instant, Instant>> range) {
  std::map<Instant, double> totals;
  auto in_range = [&](Instant t) { return !range || (t >= floor_hour(range->first) && t < range->second); };
  for (const auto& post : posts.on_street(street_id)) {
    if (auto it = radar.find(post.post_id); it != radar.end()) {
      for (const auto& r : it->second) {
        if (in_range(r.timestamp)) totals[floor_hour(r.timestamp)] += 1.0;
      }
    }
    if (auto it = pedestrians.find(post.post_id); it != pedestrians.end()) {
      for (const auto& p : it->second) {
        if (in_range(p.timestamp)) totals[floor_hour(p.timestamp)] += static_cast<double>(p.count);
      }
    }
  }

  MovementSeries s{street_id, {}};
  Instant first;
  Instant end;
  if (range) {
    first = floor_hour(range->first);
    end = range->second;
  } else if (!totals.empty()) {
    first = totals.begin()->first;
    end = totals.rbegin()->first + kHour;
  } else {
    return s;
  }
  for (Instant t = first; t < end; t += kHour) {
    auto it = totals.find(t);
    s.points.push_back({t, it == totals.end() ? std::nullopt : std::optional<double>(it->second)});
  }
  return s;
}

std::pair<double, double> quartiles(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::InsufficientData, "quartiles of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  // nearest rank: the ceil(p * n)-th smallest value
  const std::size_t r1 = (n + 3) / 4;
  const std::size_t r3 = (3 * n + 3) / 4;
  return {values[r1 - 1], values[r3 - 1]};
}

std::size_t fill_short_gaps(std::vector<SeriesPoint>& points, int max_gap) {
  std::size_t filled = 0;
  std::size_t i = 0;
  while (i < points.size()) {
    if (points[i].count) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < points.size() && !points[j].count) ++j;
    const std::size_t run = j - i;
    if (i > 0 && j < points.size() && run <= static_cast<std::size_t>(max_gap)) {
      const double a = *points[i - 1].count;
      const double b = *points[j].count;
      const double span = static_cast<double>(run + 1);
      for (std::size_t m = i; m < j; ++m) {
        points[m].count = a + (b - a) * static_cast<double>(m - (i - 1)) / span;
        ++filled;
      }
    }
    i = j;
  }
  return filled;
}

MovementSeries preprocess_series(const MovementSeries& raw, const Config& config) {
  MovementSeries out{raw.street_id, normalise_grid(raw.points)};
  const auto present = std::count_if(out.points.begin(), out.points.end(),
                                     [](const SeriesPoint& p) { return p.count.has_value(); });
  if (present < 4) {
    throw Error(ErrorCode::InsufficientData,
                "street " + raw.street_id + ": need at least 4 present points, have " + std::to_string(present));
  }
  for (int pass = 0; pass < kMaxRepairPasses; ++pass) {
    const auto replaced = replace_outliers(out.points, config.outlier_k);
    const auto filled = fill_short_gaps(out.points, config.max_gap_hours);
    if (replaced == 0 && filled == 0) break;
  }
  return out;
}

WeatherFeed parse_weather_feed(std::string_view body) {
  WeatherFeed feed;
  const auto records = ingest::split_feed(body);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    try {
      if (!r.is_object() || !r.contains("ts") || !r.contains("temp_c") || !r.contains("humidity_pct")) {
        throw Error(ErrorCode::Schema, "weather record needs ts, temp_c, humidity_pct");
      }
      const Instant t = floor_hour(parse_instant(r.at("ts").get<std::string>()));
      feed[t] = {r.at("temp_c").get<double>(), r.at("humidity_pct").get<double>()};
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Schema, "weather record " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return feed;
}

FeatureVector engineer_features(Instant hour, const LocalCalendar& cal, const WeatherFeed* weather,
                                const std::set<Date>* local_events) {
  FeatureVector f;
  f.hour_of_day = cal.hour(hour);
  f.day_type = cal.day_type(hour);
  f.is_holiday = cal.is_holiday(hour);
  if (weather != nullptr) {
    if (auto it = weather->find(floor_hour(hour)); it != weather->end()) {
      f.temperature_c = it->second.temp_c;
      f.humidity_pct = it->second.humidity_pct;
    }
  }
  if (local_events != nullptr) f.local_event = local_events->contains(cal.date(hour));
  return f;
}

ForecastModel fit_model(const MovementSeries& series, const LocalCalendar& cal) {
  std::vector<SeriesPoint> pts;
  for (const auto& p : series.points) {
    if (p.count) pts.push_back(p);
  }
  if (pts.empty()) throw Error(ErrorCode::InsufficientData, "street " + series.street_id + ": empty training series");
  // a canonical accumulation order makes the model independent of input order
  std::sort(pts.begin(), pts.end(), [](const SeriesPoint& a, const SeriesPoint& b) {
    return a.hour != b.hour ? a.hour < b.hour : *a.count < *b.count;
  });

  ForecastModel m;
  m.street_id = series.street_id;
  m.trained_from = pts.front().hour;
  m.trained_to = pts.back().hour;

  std::array<std::array<double, 24>, 2> sums{};
  std::array<double, 2> day_sums{};
  std::array<long, 2> day_n{};
  std::vector<std::pair<std::size_t, std::size_t>> keys;
  keys.reserve(pts.size());
  for (const auto& p : pts) {
    const FeatureVector f = engineer_features(p.hour, cal);
    const auto d = static_cast<std::size_t>(f.day_type);
    const auto h = static_cast<std::size_t>(f.hour_of_day);
    sums[d][h] += *p.count;
    ++m.samples[d][h];
    day_sums[d] += *p.count;
    ++day_n[d];
    keys.emplace_back(d, h);
  }
  for (std::size_t d = 0; d < 2; ++d) {
    for (std::size_t h = 0; h < 24; ++h) {
      if (m.samples[d][h] > 0) m.cells[d][h] = sums[d][h] / static_cast<double>(m.samples[d][h]);
    }
    if (day_n[d] > 0) m.fallback[d] = day_sums[d] / static_cast<double>(day_n[d]);
  }

  double sq = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double r = *pts[i].count - *m.cells[keys[i].first][keys[i].second];
    sq += r * r;
  }
  m.residual_stdev = std::sqrt(sq / static_cast<double>(pts.size()));
  return m;
}

Prediction predict(const ForecastModel& model, Instant hour, const LocalCalendar& cal) {
  const DayType d = cal.day_type(hour);
  if (const auto& c = model.cell(d, cal.hour(hour))) return {*c, false};
  if (const auto& fb = model.fallback[static_cast<std::size_t>(d)]) return {*fb, false};
  return {0.0, true};
}

Forecast forecast_24h(const ForecastModel& model, Instant generated_at, const LocalCalendar& cal) {
  Forecast f;
  f.street_id = model.street_id;
  f.generated_at = generated_at;
  Instant t = floor_hour(generated_at);
  if (t < generated_at) t += kHour;
  for (int i = 0; i < 24; ++i, t += kHour) {
    const Prediction p = predict(model, t, cal);
    if (p.defaulted && !f.defaulted_to_zero) {
      f.defaulted_to_zero = true;
      f.warnings.push_back("no training data for " + std::string(to_string(cal.day_type(t))) +
                           " hours; predicted 0");
    }
    f.points.push_back({t, std::max(p.value, 0.0)});
  }
  return f;
}

EvalMetrics evaluate(const ForecastModel& model, const MovementSeries& holdout, const LocalCalendar& cal) {
  EvalMetrics m;
  double abs_sum = 0.0;
  double pct_sum = 0.0;
  long pct_n = 0;
  for (const auto& p : holdout.points) {
    if (!p.count) continue;
    const double err = std::abs(predict(model, p.hour, cal).value - *p.count);
    abs_sum += err;
    ++m.n;
    if (*p.count > 0.0) {
      pct_sum += err / *p.count;
      ++pct_n;
    }
  }
  if (m.n == 0) throw Error(ErrorCode::InsufficientData, "street " + holdout.street_id + ": empty holdout");
  m.mae = abs_sum / static_cast<double>(m.n);
  if (pct_n > 0) m.mape = 100.0 * pct_sum / static_cast<double>(pct_n);
  return m;
}

std::string_view to_string(BlockBasis b) { return b == BlockBasis::observed ? "observed" : "forecast"; }

std::optional<BlockBasis> block_basis_from(std::string_view s) {
  if (s == "observed") return BlockBasis::observed;
  if (s == "forecast") return BlockBasis::forecast;
  return std::nullopt;
}

std::vector<ActivityBlock> find_zero_blocks(const std::string& street_id, std::span<const SeriesPoint> points,
                                            BlockBasis basis, const NightWindow& night, int min_block_hours,
                                            const LocalCalendar& cal) {
  auto idle = [&](const SeriesPoint& p) {
    if (!p.count || !night.contains(cal.hour(p.hour))) return false;
    return basis == BlockBasis::observed ? *p.count == 0.0 : *p.count < kForecastIdleBelow;
  };
  std::vector<ActivityBlock> out;
  std::optional<ActivityBlock> run;
  auto close = [&] {
    if (run && run->hours >= min_block_hours) out.push_back(*run);
    run.reset();
  };
  for (const auto& p : points) {
    if (!idle(p)) {
      close();
      continue;
    }
    if (run && run->start + run->hours * kHour == p.hour) {
      ++run->hours;
    } else {
      close();
      run = ActivityBlock{street_id, p.hour, 1, basis};
    }
  }
  close();
  return out;
}

std::vector<ActivityBlock> find_zero_blocks(const MovementSeries& series, const NightWindow& night,
                                            int min_block_hours, const LocalCalendar& cal) {
  return find_zero_blocks(series.street_id, series.points, BlockBasis::observed, night, min_block_hours, cal);
}

std::vector<ActivityBlock> find_zero_blocks(const Forecast& forecast, const NightWindow& night,
                                            int min_block_hours, const LocalCalendar& cal) {
  std::vector<SeriesPoint> pts;
  pts.reserve(forecast.points.size());
  for (const auto& p : forecast.points) pts.push_back({p.hour, p.predicted});
  return find_zero_blocks(forecast.street_id, pts, BlockBasis::forecast, night, min_block_hours, cal);
}

Date night_of(Instant t, const NightWindow& night, const LocalCalendar& cal) {
  const Date d = cal.date(t);
  if (night.start > night.end && cal.hour(t) < night.end) {
    return Date{std::chrono::sys_days{d} - std::chrono::days{1}};
  }
  return d;
}

std::string_view to_string(LightingAction a) { return a == LightingAction::dim_to ? "dim_to" : "half_off"; }

std::vector<DimmingRecommendation> recommend(std::span<const ActivityBlock> blocks,
                                             std::span<const SmartPost> street_posts, double dim_level) {
  std::vector<DimmingRecommendation> out;
  if (street_posts.empty()) return out;
  const bool all_dimmable = std::all_of(street_posts.begin(), street_posts.end(),
                                        [](const SmartPost& p) { return p.dimmable; });
  double watts = 0.0;
  for (const auto& p : street_posts) watts += static_cast<double>(p.lamp_count) * p.lamp_wattage;
  const double fraction = all_dimmable ? 1.0 - dim_level : 0.5;

  for (const auto& b : blocks) {
    if (b.hours <= 0) continue;
    DimmingRecommendation r;
    r.street_id = b.street_id;
    r.block = b;
    r.action = all_dimmable ? LightingAction::dim_to : LightingAction::half_off;
    r.dim_level = all_dimmable ? dim_level : 0.0;
    r.estimated_savings_kwh = static_cast<double>(b.hours) * watts * fraction / 1000.0;
    out.push_back(std::move(r));
  }
  return out;
}

json to_json(const MovementSeries& s) {
  json pts = json::array();
  for (const auto& p : s.points) pts.push_back({{"hour", format_instant(p.hour)}, {"count", optional_number(p.count)}});
  return {{"street_id", s.street_id}, {"points", pts}};
}

json to_json(const ForecastModel& m) {
  json cells = json::object();
  for (std::size_t d = 0; d < 2; ++d) {
    json row = json::array();
    for (std::size_t h = 0; h < 24; ++h) row.push_back(optional_number(m.cells[d][h]));
    cells[std::string(to_string(static_cast<DayType>(d)))] = row;
  }
  return {{"street_id", m.street_id},
          {"cells", cells},
          {"fallback",
           {{"workday", optional_number(m.fallback[0])}, {"weekend", optional_number(m.fallback[1])}}},
          {"trained_from", format_instant(m.trained_from)},
          {"trained_to", format_instant(m.trained_to)},
          {"residual_stdev", m.residual_stdev}};
}

json to_json(const Forecast& f) {
  json pts = json::array();
  for (const auto& p : f.points) pts.push_back({{"hour", format_instant(p.hour)}, {"predicted", p.predicted}});
  return {{"street_id", f.street_id},
          {"generated_at", format_instant(f.generated_at)},
          {"points", pts},
          {"defaulted_to_zero", f.defaulted_to_zero},
          {"warnings", f.warnings}};
}

json to_json(const ActivityBlock& b) {
  return {{"street_id", b.street_id},
          {"start", format_instant(b.start)},
          {"hours", b.hours},
          {"basis", to_string(b.basis)}};
}

json to_json(const DimmingRecommendation& r) {
  json j = {{"street_id", r.street_id},
            {"block", to_json(r.block)},
            {"action", to_string(r.action)},
            {"estimated_savings_kwh", r.estimated_savings_kwh}};
  if (r.action == LightingAction::dim_to) j["dim_level"] = r.dim_level;
  return j;
}

json evaluation_report(const ForecastModel& m, const EvalMetrics& metrics) {
  return {{"street_id", m.street_id},
          {"mae", metrics.mae},
          {"mape", optional_number(metrics.mape)},
          {"n", metrics.n},
          {"trained_from", format_instant(m.trained_from)},
          {"trained_to", format_instant(m.trained_to)}};
}

}  // namespace icms::energy
