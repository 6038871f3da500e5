#include "lanequest/geo.hpp"

#include <algorithm>

namespace lanequest {

double haversine_m(const LatLon& a, const LatLon& b) {
  const double p1 = deg2rad(a.lat);
  const double p2 = deg2rad(b.lat);
  const double dp = p2 - p1;
  const double dl = deg2rad(b.lon - a.lon);
  const double s1 = std::sin(dp / 2.0);
  const double s2 = std::sin(dl / 2.0);
  const double h = s1 * s1 + std::cos(p1) * std::cos(p2) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

LocalFrame::LocalFrame(LatLon origin) : origin_(origin), cos_lat_(std::cos(deg2rad(origin.lat))) {}

Point2 LocalFrame::to_local(const LatLon& p) const {
  return {deg2rad(p.lon - origin_.lon) * kEarthRadiusM * cos_lat_,
          deg2rad(p.lat - origin_.lat) * kEarthRadiusM};
}

LatLon LocalFrame::to_latlon(const Point2& p) const {
  return {origin_.lat + rad2deg(p.y / kEarthRadiusM),
          origin_.lon + rad2deg(p.x / (kEarthRadiusM * cos_lat_))};
}

double wrap_degrees_360(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w < 0.0) w += 360.0;
  if (w >= 360.0) w -= 360.0;
  return w;
}

double wrap_degrees_180(double deg) {
  double w = wrap_degrees_360(deg);
  if (w > 180.0) w -= 360.0;
  return w;
}

}  // namespace lanequest
