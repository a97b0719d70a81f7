#pragma once

#include <optional>
#include <string>

#include "icms/time.hpp"

namespace icms::safety {

// Aggregate of one post over one cadence window.
struct WindowFeatures {
  std::string post_id;
  Instant window_start;
  std::optional<double> avg_speed;  // absent iff vehicle_count == 0
  long vehicle_count = 0;
  long speeding_count = 0;
  long pedestrian_count = 0;
  int hour_of_day = 0;  // local

  bool operator==(const WindowFeatures&) const = default;
};

}  // namespace icms::safety
