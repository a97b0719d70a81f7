#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>

#include <json.hpp>

#include "icms/time.hpp"

namespace icms::replay {

struct Profile {
  int streets = 3;
  int posts_per_street = 2;
  int months = 2;
  Date start{std::chrono::year{2023}, std::chrono::March, std::chrono::day{1}};
  double noise = 1.5;          // stdev of the per-reading pedestrian noise
  bool zero_nights = true;     // first street is dark 01:00-05:00 local every night
  int speeding_episodes = 40;  // planted windows with >= 3 speeding vehicles
  int detection_clusters = 3;
  bool outage = true;          // one 2 h daytime gap on the last street
  int dead_letter = 6;         // events from a post missing from posts.json

  bool operator==(const Profile&) const = default;
};

// Throws Error{Argument} naming the offending field.
void validate_profile(const Profile& p);
nlohmann::json to_json(const Profile& p);

// File name -> exact bytes. truth.json records every planted fact.
struct GeneratedDataset {
  std::map<std::string, std::string> files;
  nlohmann::json truth;
};

// Pure function of (seed, profile): the same inputs give the same bytes on
// every platform (the RNG transforms are implemented here, not taken from
// <random> distributions).
GeneratedDataset generate_dataset(std::uint64_t seed, const Profile& profile);
void write_dataset(const GeneratedDataset& d, const std::filesystem::path& dir);

// Deterministic uniform and normal draws over mt19937_64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  double uniform();                                  // [0, 1)
  double uniform(double lo, double hi);              // [lo, hi)
  long uniform_int(long lo, long hi);                // [lo, hi]
  double normal();                                   // N(0, 1), Box-Muller

 private:
  std::mt19937_64 engine_;  // output sequence is fixed by the standard
  std::optional<double> spare_;
};

}  // namespace icms::replay
