#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "icms/config.hpp"
#include "icms/error.hpp"
#include "icms/safety/rule.hpp"
#include "icms/types.hpp"

namespace icms::replay {

// A data error pinned to a file position. line is 1-based; 0 when the
// failure concerns the file as a whole.
class DataFileError : public Error {
 public:
  DataFileError(ErrorCode code, std::filesystem::path file, long line, const std::string& message)
      : Error(code, message), file_(std::move(file)), line_(line) {}
  const std::filesystem::path& file() const noexcept { return file_; }
  long line() const noexcept { return line_; }

 private:
  std::filesystem::path file_;
  long line_;
};

struct Dataset {
  PostRegistry posts;
  std::vector<RadarReading> radar;
  std::vector<PedestrianCount> pedestrians;
  std::vector<DetectionEvent> detections;
  std::vector<safety::Rule> rules;
};

// Reads posts.json, radar.jsonl, pedestrians.jsonl, detections.jsonl and
// rules.json from dir; absent files contribute nothing.
Dataset load_dataset(const std::filesystem::path& dir);
// config_path when given, else dir/config.json, else defaults.
Config load_dataset_config(const std::filesystem::path& dir, const std::optional<std::filesystem::path>& config_path);
// SHA-256 over the dataset files (name, size and bytes, in a fixed order).
std::string dataset_hash(const std::filesystem::path& dir);

// Earliest and latest event instant over all three feeds.
std::optional<std::pair<Instant, Instant>> time_range(const Dataset& d);

// Events strictly before boundary go to train, the rest to holdout; posts and
// rules are shared. The boundary must fall within the local days spanned by
// the data, else Error{Argument}.
std::pair<Dataset, Dataset> split_train_holdout(const Dataset& d, Instant boundary, const LocalCalendar& cal);

// Local midnight opening the calendar month after the first event.
Instant default_boundary(const Dataset& d, const LocalCalendar& cal);

// ingest -> train on the train part -> evaluate on holdout -> safety, blocks
// and issues over the full range. The result is canonical: equal inputs give
// byte-equal serialisations.
nlohmann::json run_replay(const Dataset& d, const Config& config, std::optional<Instant> boundary,
                          const std::string& dataset_id);

// Stable key order, two-space indent, LF line endings, trailing LF.
std::string canonical(const nlohmann::json& report);

}  // namespace icms::replay
