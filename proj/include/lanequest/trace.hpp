#pragma once

// Core trace and road-map types and their text formats.
//
// Car frame: x points to the left side of the car, y along the direction of
// motion, z up. Orientation is a compass yaw in degrees, clockwise from north.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lanequest/geo.hpp"

namespace lanequest {

struct Vec3 {
  double x{};
  double y{};
  double z{};
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

struct SensorSample {
  double t{};      // seconds since trace start
  Vec3 accel;      // m/s^2
  Vec3 gyro;       // rad/s
  Vec3 mag;        // uT
  double yaw{};    // degrees in [0, 360)
  friend bool operator==(const SensorSample&, const SensorSample&) = default;
};

struct LocationFix {
  double t{};
  LatLon pos;
  double accuracy{1.0};  // meters, 1-sigma
  std::string segment;   // map-matched road segment reported with the fix
  friend bool operator==(const LocationFix&, const LocationFix&) = default;
};

struct LaneLabel {
  double t{};
  int lane{1};
  friend bool operator==(const LaneLabel&, const LaneLabel&) = default;
};

enum class SpecialLaneKind { Merge, Exit };
enum class Side { Left, Right };

struct SpecialLane {
  SpecialLaneKind kind{SpecialLaneKind::Exit};
  Side side{Side::Right};
  double position_m{};  // along the segment polyline
  friend bool operator==(const SpecialLane&, const SpecialLane&) = default;
};

struct RoadSegment {
  std::string id;
  std::vector<LatLon> polyline;
  int lane_count{1};
  std::vector<SpecialLane> special_lanes;
  friend bool operator==(const RoadSegment&, const RoadSegment&) = default;
};

/// Set of road segments, kept sorted by id.
class RoadMap {
 public:
  RoadMap() = default;
  explicit RoadMap(std::vector<RoadSegment> segments);

  const std::vector<RoadSegment>& segments() const { return segments_; }
  const RoadSegment* find(std::string_view id) const;
  bool empty() const { return segments_.empty(); }

  friend bool operator==(const RoadMap&, const RoadMap&) = default;

 private:
  std::vector<RoadSegment> segments_;
};

struct DriveTrace {
  std::vector<SensorSample> samples;
  std::vector<LocationFix> fixes;
  std::vector<LaneLabel> ground_truth;  // empty when unlabeled
  friend bool operator==(const DriveTrace&, const DriveTrace&) = default;
};

/// Checks timestamps, finiteness and label ranges. When `map` is given, each
/// label must fit the lane count of the segment of the latest fix at or
/// before it. Throws ValidationError.
void validate_trace(const DriveTrace& trace, const RoadMap* map = nullptr);

/// Parses the `#lanequest-trace v1` format. Throws ParseError (with line
/// number) or ValidationError.
DriveTrace parse_trace_text(std::string_view text);
DriveTrace parse_trace(const std::string& path);

/// Canonical serialization: records merged by time (samples, then fixes,
/// then labels on ties) at full round-trip precision.
std::string format_trace(const DriveTrace& trace);
void write_trace(const DriveTrace& trace, const std::string& path);

RoadMap parse_map_text(std::string_view text);
RoadMap parse_map(const std::string& path);
std::string format_map(const RoadMap& map);
void write_map(const RoadMap& map, const std::string& path);

/// Polyline length in meters (haversine between consecutive vertices).
double polyline_length_m(const std::vector<LatLon>& polyline);

/// Lane of the latest label at or before `t`; nullopt before the first label.
std::optional<int> label_at(const std::vector<LaneLabel>& labels, double t);

}  // namespace lanequest
