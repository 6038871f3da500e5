#pragma once

// Synthetic drives with ground-truth lanes.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lanequest/error.hpp"
#include "lanequest/events.hpp"
#include "lanequest/trace.hpp"

namespace lanequest {

class ScenarioError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct NoiseModel {
  double accel = 0.3;       // m/s^2, per axis
  double gyro = 0.005;      // rad/s
  double mag = 0.3;         // uT
  double yaw = 1.0;         // deg
  double gps = 0.5;         // m, white part per axis
  double gps_bias = 3.0;    // m, Gauss-Markov part per axis
  double gps_tau = 120.0;   // s
  friend bool operator==(const NoiseModel&, const NoiseModel&) = default;
};

enum class PieceKind { Straight, Curve, Turn, UTurn, Tunnel, Exit, Merge };

/// A point feature on a straight or tunnel piece, `offset_m` from its start.
struct PieceFeature {
  enum class Kind { LaneChange, Pothole, Bump, Stop } kind{Kind::Pothole};
  double offset_m{};
  Side direction{Side::Left};  // lane change
  int lane{1};                 // pothole
  double duration_s{};         // stop
  bool park{false};            // stop
  friend bool operator==(const PieceFeature&, const PieceFeature&) = default;
};

struct Piece {
  PieceKind kind{PieceKind::Straight};
  double length_m{};            // straight, tunnel, exit, merge
  Side direction{Side::Right};  // curve, turn, exit/merge side
  double sweep_deg{};           // curve
  double radius_m{};            // curve: centerline radius
  int lanes_after{0};           // turn/uturn: lane count of the next road (0 = same)
  double take_probability{};    // exit
  std::vector<double> tunnel_variance;  // per lane, uT^2
  std::vector<PieceFeature> features;
  friend bool operator==(const Piece&, const Piece&) = default;
};

struct Scenario {
  std::uint64_t seed = 1;
  LatLon origin{31.2, 29.9};
  double heading_deg = 0.0;
  double rate_hz = 50.0;
  double speed = 15.0;             // cruise, m/s
  double speed_jitter = 0.1;       // relative, per trip
  int lanes = 4;
  std::optional<int> start_lane;   // random when unset
  double lane_width = 3.5;
  NoiseModel noise;
  double lane_changes_per_km = 1.0;
  double lc_amplitude_min = 0.6;   // m/s^2
  double lc_amplitude_max = 1.5;
  double lc_period_min = 4.0;      // s
  double lc_period_max = 6.0;
  double violation = 0.05;
  /// Phone mount rotation (roll, pitch, yaw in degrees). Unset = car frame.
  std::optional<std::array<double, 3>> mount;
  std::vector<Piece> pieces;
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Parses the `#lanequest-scenario v1` directive format. Throws ParseError
/// or ScenarioError.
Scenario parse_scenario_text(std::string_view text);
Scenario parse_scenario(const std::string& path);
std::string format_scenario(const Scenario& s);

/// Checks ranges, geometry and that scripted lane changes stay on the road
/// for every lane the driver policy allows. Throws ScenarioError.
void validate(const Scenario& s);

/// One scripted happening, for scoring detectors and the learner.
struct LedgerEntry {
  double t{};
  double t_begin{};
  double t_end{};
  std::string kind;  // LeftChange, RightChange, TurnLeft, ..., Pothole, Bump
  LatLon location;
  int lane{};
  std::string segment;
  double value{};    // radius, variance or stop duration
  bool taken{true};  // merge/exit
  friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

struct GroundTruth {
  std::vector<LaneLabel> labels;
  std::vector<LedgerEntry> ledger;
  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct SimTrip {
  DriveTrace trace;  // ground_truth mirrors truth.labels
  GroundTruth truth;
};

/// Road map implied by a scenario (identical for every trip).
RoadMap build_map(const Scenario& s);

/// One trip with the scenario's seed.
SimTrip simulate(const Scenario& s);
/// One trip with an explicit seed.
SimTrip simulate(const Scenario& s, std::uint64_t seed);

/// Per-trip seed: splitmix64 of the fleet seed and trip index.
std::uint64_t trip_seed(std::uint64_t fleet_seed, std::size_t trip);

std::vector<SimTrip> generate_fleet(const Scenario& s, std::size_t trips, std::uint64_t seed);

std::string format_ledger(const GroundTruth& truth);
std::vector<LedgerEntry> parse_ledger_text(std::string_view text);
std::vector<LedgerEntry> load_ledger(const std::string& path);

}  // namespace lanequest
