#pragma once

// Text formats for detected events and lane estimates.
//
// Events:    #lanequest-events v1
//            T <initial lanes> <start time>
//            E <t> <kind> <lat> <lon> [feature] [key=value ...]
// Estimates: #lanequest-estimates v1
//            L <t> <lane> <p1> ... <pn> src=<init|motion|perception|segment>
//
// Extra event keys: end, delta (lane changes); seg, lanes (segment changes);
// side, taken, span, segment, id, belief (observations).

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lanequest/lane_filter.hpp"
#include "lanequest/pipeline.hpp"
#include "lanequest/trace.hpp"

namespace lanequest {

/// `fixes` only supplies positions for lane changes and segment changes;
/// without them those lines carry 0 0.
std::string format_events(const TripEvents& trip, std::span<const LocationFix> fixes = {});
TripEvents parse_events_text(std::string_view text);
TripEvents load_events(const std::string& path);
void save_events(const TripEvents& trip, const std::string& path, std::span<const LocationFix> fixes = {});

std::string format_estimates(std::span<const LaneEstimate> estimates);
std::vector<LaneEstimate> parse_estimates_text(std::string_view text);
std::vector<LaneEstimate> load_estimates(const std::string& path);
void save_estimates(std::span<const LaneEstimate> estimates, const std::string& path);

}  // namespace lanequest
