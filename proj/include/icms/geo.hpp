#pragma once

namespace icms {

inline constexpr double kEarthRadiusM = 6'371'000.0;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;

  bool operator==(const LatLon&) const = default;
};

bool valid(const LatLon& p);

// Great-circle distance on a sphere of kEarthRadiusM, in meters.
double haversine_m(const LatLon& a, const LatLon& b);

}  // namespace icms
