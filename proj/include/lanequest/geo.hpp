#pragma once

#include <cmath>
#include <numbers>

namespace lanequest {

struct LatLon {
  double lat{};
  double lon{};
  friend bool operator==(const LatLon&, const LatLon&) = default;
};

/// Planar point in meters (east, north) in some local frame.
struct Point2 {
  double x{};
  double y{};
};

inline constexpr double kEarthRadiusM = 6371008.8;

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

/// Great-circle distance in meters.
double haversine_m(const LatLon& a, const LatLon& b);

/// Equirectangular projection around an origin. Accurate to well under a
/// meter over the few-kilometer extents used for snapping and simulation.
class LocalFrame {
 public:
  explicit LocalFrame(LatLon origin);

  Point2 to_local(const LatLon& p) const;
  LatLon to_latlon(const Point2& p) const;
  const LatLon& origin() const { return origin_; }

 private:
  LatLon origin_;
  double cos_lat_;
};

/// Wraps an angle in degrees into [0, 360).
double wrap_degrees_360(double deg);

/// Wraps an angle in degrees into (-180, 180].
double wrap_degrees_180(double deg);

}  // namespace lanequest
