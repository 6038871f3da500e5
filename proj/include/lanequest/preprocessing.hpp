#pragma once

#include <span>
#include <string>
#include <vector>

#include "lanequest/error.hpp"
#include "lanequest/trace.hpp"

namespace lanequest {

/// A scalar channel sampled at (strictly increasing) timestamps.
struct Series {
  std::vector<double> t;
  std::vector<double> v;
  std::size_t size() const { return t.size(); }
};

enum class Channel { AccelX, AccelY, AccelZ, GyroX, GyroY, GyroZ, MagX, MagY, MagZ, Yaw };

Series extract_channel(std::span<const SensorSample> samples, Channel ch);

/// Local linear regression with tricube weights over a centered window of
/// `window_s` seconds. Each output is clamped to the [min, max] of the
/// window, so monotone inputs never overshoot. Reproduces constants and lines.
Series lowpass_smooth(const Series& series, double window_s);

/// Smoothed copy of the accel, gyro and magnetometer channels. Yaw is left
/// untouched.
std::vector<SensorSample> smooth_samples(std::span<const SensorSample> samples, double window_s);

class ReorientationError : public DomainError {
 public:
  using DomainError::DomainError;
};

struct ReorientConfig {
  double stationary_gyro_max = 0.02;   // rad/s
  double stationary_min_s = 2.0;
  double burst_accel_min = 1.5;        // m/s^2, horizontal
  double burst_min_s = 1.0;
};

/// Rotates phone-frame samples into the car frame: gravity onto +z from the
/// first stationary window, then yaw so the first sustained acceleration
/// burst points along +y. The same proper rotation is applied to accel,
/// gyro and mag; yaw is corrected by the heading part of the rotation.
std::vector<SensorSample> reorient_to_car_frame(std::span<const SensorSample> samples,
                                                const ReorientConfig& cfg = {});

struct SnappedFix {
  LocationFix original;
  std::string segment;
  double along_m{};
  double cross_m{};  // positive toward the left side of travel
};

class NoMatchError : public DomainError {
 public:
  using DomainError::DomainError;
};

inline constexpr double kDefaultSnapRadiusM = 50.0;

/// Perpendicular projection onto the nearest segment polyline. Ties go to
/// the lowest segment id. Throws NoMatchError beyond `snap_radius_m`.
SnappedFix snap_to_segment(const LocationFix& fix, const RoadMap& map,
                           double snap_radius_m = kDefaultSnapRadiusM);

/// Along-polyline position of a lat/lon on one specific segment (no radius
/// check). Used to place map features.
SnappedFix project_onto(const LocationFix& fix, const RoadSegment& seg);

/// Point at `along_m` meters down a segment polyline.
LatLon point_along(const RoadSegment& seg, double along_m);

}  // namespace lanequest
