#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "icms/config.hpp"
#include "icms/ingestion.hpp"
#include "icms/time.hpp"
#include "icms/types.hpp"

namespace icms::energy {

struct SeriesPoint {
  Instant hour;                 // UTC, on the hour grid
  std::optional<double> count;  // movements in [hour, hour + 1h); nullopt = no data

  bool operator==(const SeriesPoint&) const = default;
};

struct MovementSeries {
  std::string street_id;
  std::vector<SeriesPoint> points;

  bool operator==(const MovementSeries&) const = default;
};

// Hourly movement totals for one street: pedestrian counts plus every radar
// reading (vehicles and other moving objects) from the street's posts. An hour
// with no reading at all is missing rather than zero. The grid spans
// [from, to) when given, else the hours between the first and last event.
MovementSeries build_movement_series(const std::string& street_id,
                                     const ingest::PostStreamBatch<RadarReading>& radar,
                                     const ingest::PostStreamBatch<PedestrianCount>& pedestrians,
                                     const PostRegistry& posts,
                                     std::optional<std::pair<Instant, Instant>> range = std::nullopt);

// Nearest-rank first and third quartiles of a nonempty sample.
std::pair<double, double> quartiles(std::vector<double> values);

// Linear interpolation across runs of at most max_gap missing points that
// have a present neighbor on both sides. Returns the number of points filled.
std::size_t fill_short_gaps(std::vector<SeriesPoint>& points, int max_gap);

// Collapses duplicate hours to their mean, lays the series on a contiguous
// hourly grid, replaces IQR outliers (k = outlier_k) by interpolation and
// fills short gaps. The two repair steps repeat until neither changes
// anything, so the result is a fixed point. Fewer than 4 present points is an
// Error{InsufficientData}.
MovementSeries preprocess_series(const MovementSeries& raw, const Config& config);

struct WeatherObservation {
  double temp_c = 0.0;
  double humidity_pct = 0.0;

  bool operator==(const WeatherObservation&) const = default;
};

using WeatherFeed = std::map<Instant, WeatherObservation>;

// JSONL {ts, temp_c, humidity_pct}; timestamps floored to the hour.
WeatherFeed parse_weather_feed(std::string_view body);

struct FeatureVector {
  int hour_of_day = 0;
  DayType day_type = DayType::workday;
  bool is_holiday = false;
  std::optional<double> temperature_c;
  std::optional<double> humidity_pct;
  std::optional<bool> local_event;

  bool operator==(const FeatureVector&) const = default;
};

FeatureVector engineer_features(Instant hour, const LocalCalendar& cal, const WeatherFeed* weather = nullptr,
                                const std::set<Date>* local_events = nullptr);

// Day-type x hour cell-mean forecaster.
struct ForecastModel {
  std::string street_id;
  std::array<std::array<std::optional<double>, 24>, 2> cells{};
  std::array<std::array<long, 24>, 2> samples{};
  std::array<std::optional<double>, 2> fallback{};
  Instant trained_from;
  Instant trained_to;
  double residual_stdev = 0.0;

  const std::optional<double>& cell(DayType d, int hour) const {
    return cells[static_cast<std::size_t>(d)][static_cast<std::size_t>(hour)];
  }
  bool operator==(const ForecastModel&) const = default;
};

ForecastModel fit_model(const MovementSeries& series, const LocalCalendar& cal);

struct Prediction {
  double value = 0.0;
  bool defaulted = false;  // neither cell nor day-type fallback existed
};

Prediction predict(const ForecastModel& model, Instant hour, const LocalCalendar& cal);

struct ForecastPoint {
  Instant hour;
  double predicted = 0.0;

  bool operator==(const ForecastPoint&) const = default;
};

struct Forecast {
  std::string street_id;
  Instant generated_at;
  std::vector<ForecastPoint> points;  // 24 consecutive hours
  bool defaulted_to_zero = false;
  std::vector<std::string> warnings;
};

// 24 hourly predictions; the first covers the hour-long interval that starts
// at generated_at rounded up to the hour.
Forecast forecast_24h(const ForecastModel& model, Instant generated_at, const LocalCalendar& cal);

struct EvalMetrics {
  double mae = 0.0;
  std::optional<double> mape;  // percent, over points with actual > 0
  long n = 0;
};

EvalMetrics evaluate(const ForecastModel& model, const MovementSeries& holdout, const LocalCalendar& cal);

enum class BlockBasis { observed, forecast };
std::string_view to_string(BlockBasis b);
std::optional<BlockBasis> block_basis_from(std::string_view s);

struct ActivityBlock {
  std::string street_id;
  Instant start;
  int hours = 0;
  BlockBasis basis = BlockBasis::observed;

  bool operator==(const ActivityBlock&) const = default;
};

// Maximal runs of consecutive night-window hours with no activity: count == 0
// for observed data, predicted < 0.5 for forecasts.
std::vector<ActivityBlock> find_zero_blocks(const std::string& street_id, std::span<const SeriesPoint> points,
                                            BlockBasis basis, const NightWindow& night, int min_block_hours,
                                            const LocalCalendar& cal);
std::vector<ActivityBlock> find_zero_blocks(const MovementSeries& series, const NightWindow& night,
                                            int min_block_hours, const LocalCalendar& cal);
std::vector<ActivityBlock> find_zero_blocks(const Forecast& forecast, const NightWindow& night,
                                            int min_block_hours, const LocalCalendar& cal);

// Local date on which the night containing t began.
Date night_of(Instant t, const NightWindow& night, const LocalCalendar& cal);

enum class LightingAction { dim_to, half_off };
std::string_view to_string(LightingAction a);

struct DimmingRecommendation {
  std::string street_id;
  ActivityBlock block;
  LightingAction action = LightingAction::half_off;
  double dim_level = 0.0;  // meaningful for dim_to
  double estimated_savings_kwh = 0.0;

  bool operator==(const DimmingRecommendation&) const = default;
};

// dim_to(dim_level) when every post on the street is dimmable, else half_off.
std::vector<DimmingRecommendation> recommend(std::span<const ActivityBlock> blocks,
                                             std::span<const SmartPost> street_posts, double dim_level);

nlohmann::json to_json(const MovementSeries& s);
nlohmann::json to_json(const ForecastModel& m);
nlohmann::json to_json(const Forecast& f);
nlohmann::json to_json(const ActivityBlock& b);
nlohmann::json to_json(const DimmingRecommendation& r);
nlohmann::json evaluation_report(const ForecastModel& m, const EvalMetrics& metrics);

}  // namespace icms::energy
