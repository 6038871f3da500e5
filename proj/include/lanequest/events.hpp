#pragma once

// Motion events and lane-anchor observations extracted from car-frame
// sensor streams.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lanequest/belief.hpp"
#include "lanequest/preprocessing.hpp"
#include "lanequest/trace.hpp"

namespace lanequest {

enum class MotionKind { LeftChange, RightChange };

struct MotionEvent {
  double t{};
  MotionKind kind{MotionKind::LeftChange};
  double peak_delta{};  // m/s^2 between the paired extrema
  double t_end{};       // time of the second extremum
  friend bool operator==(const MotionEvent&, const MotionEvent&) = default;
};

/// Observation kinds plus the two classes a learned surface anomaly can
/// resolve to (Pothole, CalmingDevice), which only appear on anchors.
enum class AnchorKind {
  TurnLeft,
  TurnRight,
  UTurn,
  MergeLane,
  ExitLane,
  Stop,
  Curve,
  TunnelLaneFeature,
  SurfaceAnomaly,
  Pothole,
  CalmingDevice,
};

std::string_view to_string(AnchorKind k);
std::optional<AnchorKind> anchor_kind_from_string(std::string_view s);
std::string_view to_string(MotionKind k);

/// Kinds whose lane distribution is known up front.
bool is_bootstrap(AnchorKind k);
/// Kinds that carry a scalar feature (radius, x-mag variance, z variance).
bool has_feature(AnchorKind k);

struct AnchorObservation {
  double t{};
  AnchorKind kind{AnchorKind::Stop};
  LatLon location;
  std::optional<double> feature;
  std::optional<LaneBelief> reporter_belief;
  /// Merge/exit only: which side the special lane is on, and whether the car
  /// used it (false = drove past it, negative information).
  Side side{Side::Right};
  bool taken{true};
  /// Maneuver extent, for exclusivity checks.
  double t_begin{};
  double t_end{};
  std::string segment;
  std::uint64_t id{};
  friend bool operator==(const AnchorObservation&, const AnchorObservation&) = default;
};

struct SegmentChange {
  double t{};
  std::string segment;
  int lane_count{1};
  friend bool operator==(const SegmentChange&, const SegmentChange&) = default;
};

/// One entry of the filter input stream.
using DetectedEvent = std::variant<MotionEvent, AnchorObservation, SegmentChange>;
double event_time(const DetectedEvent& e);

struct DetectorConfig {
  double lane_change_window_s = 7.0;
  double lane_change_threshold = 0.8;   // m/s^2
  double peak_proximity_s = 4.0;
  double min_prominence = 0.3;          // m/s^2
  /// Each paired extremum must sit this far from the median of its window.
  double min_excursion = 0.4;           // m/s^2
  double stop_minutes = 3.0;
  double stop_speed = 0.5;              // m/s
  double turn_angle_deg = 90.0;
  double turn_band_deg = 30.0;
  double uturn_angle_deg = 180.0;
  double uturn_band_deg = 30.0;
  double omega_min = 0.02;              // rad/s
  double curve_min_s = 3.0;
  double curve_trim_s = 1.0;            // ends of a rotation left out of its averages
  double tunnel_window_s = 5.0;
  double anomaly_window_s = 1.0;
  double anomaly_merge_s = 2.0;
  /// Unset thresholds default to 3x the variance of the trace's quietest
  /// decile of windows.
  std::optional<double> anomaly_var_threshold;  // (m/s^2)^2
  std::optional<double> tunnel_var_threshold;   // uT^2
  double adaptive_threshold_factor = 3.0;
  double special_lane_radius_m = 60.0;  // ramp endpoint to marker
};

/// Throws ValidationError on non-positive values or overlapping turn bands.
void validate(const DetectorConfig& cfg);

/// Peak-pair lane change detector over a smoothed car-frame x-acceleration.
/// Trough first is a left change, peak first a right change. Pairs are
/// matched earliest-first and never share an extremum.
std::vector<MotionEvent> detect_lane_changes(const Series& x_accel, const DetectorConfig& cfg);

/// A same-sign stretch of z rotation.
struct RotationInterval {
  double t_begin{};
  double t_end{};
  double net_yaw_deg{};     // compass yaw change; positive = clockwise (right)
  double mean_accel{};      // mean |x accel| over the steady part
  double mean_omega{};      // mean |z gyro| over the steady part
};

/// Splits smoothed samples into stretches where |gyro z| > omega_min with a
/// constant sign, and measures the yaw change of each from the orientation
/// stream.
std::vector<RotationInterval> find_rotation_intervals(std::span<const SensorSample> smoothed,
                                                      const DetectorConfig& cfg);

enum class RotationClass { None, Turn, UTurn, Curve };
RotationClass classify_rotation(const RotationInterval& r, const DetectorConfig& cfg);

class NotACurveError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// r = a / omega^2. Throws NotACurveError when |omega| <= omega_min.
double estimate_curve_radius(double centripetal_accel, double angular_velocity, double omega_min = 0.02);

std::vector<AnchorObservation> detect_curves(std::span<const SensorSample> smoothed, const DetectorConfig& cfg);

/// One observation per excursion of the windowed x-mag variance above the
/// threshold; the feature is the median window variance inside it.
std::vector<AnchorObservation> detect_tunnel_feature(const Series& mag_x, const DetectorConfig& cfg);

std::vector<AnchorObservation> detect_surface_anomaly(const Series& z_accel, const DetectorConfig& cfg);

/// Speed estimate at each fix from displacement over a ~10 s baseline,
/// median filtered over ~10 s.
std::vector<double> fix_speeds(std::span<const LocationFix> fixes);

/// Removes segment flicker: runs shorter than `min_run` fixes take the
/// segment of the preceding run (the following one at the start) and are
/// re-projected onto it.
std::vector<SnappedFix> stabilize_segments(std::vector<SnappedFix> fixes, const RoadMap& map,
                                           std::size_t min_run = 3);

/// Bootstrap anchors: turns, u-turns, parking stops and merge/exit lanes.
/// `smoothed` must be car frame; `fixes` snapped and time ordered.
std::vector<AnchorObservation> classify_bootstrap(std::span<const SensorSample> smoothed,
                                                  std::span<const SnappedFix> fixes, const DetectorConfig& cfg,
                                                  const RoadMap& map);

/// Location at time t, linearly interpolated between fixes.
LatLon interpolate_location(std::span<const LocationFix> fixes, double t);

}  // namespace lanequest
