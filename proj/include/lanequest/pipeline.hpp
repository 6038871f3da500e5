#pragma once

// Trace to filter input, and crowd learning over a fleet of traces.

#include <cstdint>
#include <span>
#include <vector>

#include "lanequest/anchor_learning.hpp"
#include "lanequest/anchor_store.hpp"
#include "lanequest/events.hpp"
#include "lanequest/lane_filter.hpp"
#include "lanequest/preprocessing.hpp"
#include "lanequest/trace.hpp"

namespace lanequest {

struct PipelineConfig {
  bool phone_frame = false;  // reorient before anything else
  double smoothing_window_s = 0.5;
  /// Lane changes this close to a rotation interval are dropped; turns and
  /// curves produce look-alike x-accel swings at their ends.
  double rotation_mask_s = 2.0;
  ReorientConfig reorient;
  DetectorConfig detector;
  FilterConfig filter;
  ClusterParams cluster;
};

/// Detected events of one trace, time ordered, ready for run_filter.
struct TripEvents {
  std::vector<DetectedEvent> events;
  int initial_lanes{1};
  double t_start{};  // first sensor sample
};

/// Map matching: the fix's own segment when the map knows it, otherwise the
/// nearest segment; short segment runs are then smoothed away. Fixes that
/// match nothing are dropped.
std::vector<SnappedFix> match_fixes(std::span<const LocationFix> fixes, const RoadMap& map);

/// Preprocesses and runs every detector. Observation ids are
/// (trip << 32) | sequence number.
TripEvents extract_events(const DriveTrace& trace, const RoadMap& map, const PipelineConfig& cfg,
                          std::uint32_t trip = 0);

/// Stable time order; segment changes go first on ties.
void sort_events(std::vector<DetectedEvent>& events);

/// Runs the filter with bootstrap priors only and stores each observation's
/// prior belief as its reporter belief.
void attach_reporter_beliefs(TripEvents& trip, const FilterConfig& cfg);

/// Every observation with a reporter belief, across trips.
std::vector<AnchorObservation> collect_corpus(std::span<const TripEvents> trips);

struct FleetModel {
  AnchorStore store;
  LearnResult learned;
};

/// Reporter beliefs from a bootstrap-only pass, then anchor learning.
FleetModel learn_fleet(std::vector<TripEvents>& trips, const PipelineConfig& cfg);

FilterRun estimate_trip(const TripEvents& trip, const AnchorStore& store, const FilterConfig& cfg);

}  // namespace lanequest
