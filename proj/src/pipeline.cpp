#include "lanequest/pipeline.hpp"

#include <algorithm>

namespace lanequest {

namespace {

int event_rank(const DetectedEvent& e) { return std::holds_alternative<SegmentChange>(e) ? 0 : 1; }

struct Interval {
  double begin;
  double end;
};

bool inside(const std::vector<Interval>& iv, double t, double pad = 0.0) {
  return std::any_of(iv.begin(), iv.end(), [&](const Interval& i) { return t >= i.begin - pad && t <= i.end + pad; });
}

std::string segment_at(std::span<const SnappedFix> fixes, double t) {
  std::string seg;
  for (const auto& f : fixes) {
    if (f.original.t > t) break;
    seg = f.segment;
  }
  if (seg.empty() && !fixes.empty()) seg = fixes.front().segment;
  return seg;
}

}  // namespace

std::vector<SnappedFix> match_fixes(std::span<const LocationFix> fixes, const RoadMap& map) {
  std::vector<SnappedFix> out;
  out.reserve(fixes.size());
  for (const auto& f : fixes) {
    if (const RoadSegment* seg = f.segment.empty() ? nullptr : map.find(f.segment)) {
      out.push_back(project_onto(f, *seg));
      continue;
    }
    try {
      out.push_back(snap_to_segment(f, map));
    } catch (const NoMatchError&) {
    }
  }
  return stabilize_segments(std::move(out), map);
}

void sort_events(std::vector<DetectedEvent>& events) {
  std::stable_sort(events.begin(), events.end(), [](const DetectedEvent& a, const DetectedEvent& b) {
    const double ta = event_time(a), tb = event_time(b);
    if (ta != tb) return ta < tb;
    return event_rank(a) < event_rank(b);
  });
}

TripEvents extract_events(const DriveTrace& trace, const RoadMap& map, const PipelineConfig& cfg, std::uint32_t trip) {
  validate(cfg.detector);
  const std::vector<SensorSample> car =
      cfg.phone_frame ? reorient_to_car_frame(trace.samples, cfg.reorient) : trace.samples;
  const std::vector<SensorSample> smooth = smooth_samples(car, cfg.smoothing_window_s);
  const std::vector<SnappedFix> fixes = match_fixes(trace.fixes, map);
  std::vector<LocationFix> raw_fixes;
  raw_fixes.reserve(fixes.size());
  for (const auto& f : fixes) raw_fixes.push_back(f.original);

  std::vector<Interval> rotating, turning;
  for (const auto& r : find_rotation_intervals(smooth, cfg.detector)) {
    const RotationClass c = classify_rotation(r, cfg.detector);
    if (c == RotationClass::None) continue;
    rotating.push_back({r.t_begin, r.t_end});
    if (c == RotationClass::Turn || c == RotationClass::UTurn) turning.push_back({r.t_begin, r.t_end});
  }

  TripEvents out;
  out.t_start = trace.samples.empty() ? 0.0 : trace.samples.front().t;
  for (const auto& m : detect_lane_changes(extract_channel(smooth, Channel::AccelX), cfg.detector)) {
    const bool masked = std::any_of(rotating.begin(), rotating.end(), [&](const Interval& i) {
      return m.t_end >= i.begin - cfg.rotation_mask_s && m.t <= i.end + cfg.rotation_mask_s;
    });
    if (!masked) out.events.emplace_back(m);
  }

  std::vector<AnchorObservation> obs = classify_bootstrap(smooth, fixes, cfg.detector, map);
  std::vector<AnchorObservation> organic = detect_curves(smooth, cfg.detector);
  for (auto& o : detect_tunnel_feature(extract_channel(car, Channel::MagX), cfg.detector))
    if (!inside(turning, o.t)) organic.push_back(std::move(o));
  for (auto& o : detect_surface_anomaly(extract_channel(car, Channel::AccelZ), cfg.detector))
    organic.push_back(std::move(o));
  for (auto& o : organic) {
    o.location = interpolate_location(raw_fixes, o.t);
    o.segment = segment_at(fixes, o.t);
    obs.push_back(std::move(o));
  }
  std::stable_sort(obs.begin(), obs.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  std::uint32_t seq = 0;
  for (auto& o : obs) {
    o.id = (static_cast<std::uint64_t>(trip) << 32) | seq++;
    out.events.emplace_back(std::move(o));
  }

  if (!fixes.empty()) {
    const RoadSegment* first = map.find(fixes.front().segment);
    out.initial_lanes = first != nullptr ? first->lane_count : 1;
  }
  for (std::size_t k = 1; k < fixes.size(); ++k) {
    if (fixes[k].segment == fixes[k - 1].segment) continue;
    const RoadSegment* seg = map.find(fixes[k].segment);
    if (seg == nullptr) continue;
    double t = fixes[k].original.t;
    // A segment switch reported mid-turn waits for the turn to finish.
    for (const auto& i : turning)
      if (t >= i.begin && t <= i.end) t = i.end;
    out.events.emplace_back(SegmentChange{t, seg->id, seg->lane_count});
  }
  sort_events(out.events);
  return out;
}

void attach_reporter_beliefs(TripEvents& trip, const FilterConfig& cfg) {
  FilterConfig boot = cfg;
  boot.use_organic = false;
  boot.bootstrap_fallback = true;
  const AnchorStore empty;
  const std::vector<LaneBelief> priors = smoothed_priors(trip.events, empty, boot, trip.initial_lanes);
  for (std::size_t i = 0; i < trip.events.size(); ++i)
    if (auto* o = std::get_if<AnchorObservation>(&trip.events[i])) o->reporter_belief = priors[i];
}

std::vector<AnchorObservation> collect_corpus(std::span<const TripEvents> trips) {
  std::vector<AnchorObservation> corpus;
  for (const auto& trip : trips)
    for (const auto& e : trip.events)
      if (const auto* o = std::get_if<AnchorObservation>(&e); o != nullptr && o->reporter_belief) corpus.push_back(*o);
  return corpus;
}

FleetModel learn_fleet(std::vector<TripEvents>& trips, const PipelineConfig& cfg) {
  for (auto& t : trips) attach_reporter_beliefs(t, cfg.filter);
  FleetModel model;
  model.learned = learn_anchors(collect_corpus(trips), cfg.cluster);
  add_to_store(model.learned, model.store);
  return model;
}

FilterRun estimate_trip(const TripEvents& trip, const AnchorStore& store, const FilterConfig& cfg) {
  return run_filter(trip.events, store, cfg, trip.initial_lanes, trip.t_start);
}

}  // namespace lanequest
