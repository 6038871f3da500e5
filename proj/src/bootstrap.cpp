// Bootstrap anchor classification: turns, u-turns, parking stops and
// merge/exit lanes.

#include <algorithm>
#include <cmath>
#include <map>

#include "lanequest/events.hpp"

namespace lanequest {

namespace {

constexpr double kSpeedBaselineS = 10.0;
constexpr double kSpeedMedianS = 10.0;

std::string segment_before(std::span<const SnappedFix> fixes, double t) {
  std::string seg;
  for (const auto& f : fixes) {
    if (f.original.t > t) break;
    seg = f.segment;
  }
  if (seg.empty() && !fixes.empty()) seg = fixes.front().segment;
  return seg;
}

std::vector<LocationFix> originals(std::span<const SnappedFix> fixes) {
  std::vector<LocationFix> out;
  out.reserve(fixes.size());
  for (const auto& f : fixes) out.push_back(f.original);
  return out;
}

void add_stops(std::span<const SnappedFix> fixes, const DetectorConfig& cfg, std::vector<AnchorObservation>& out) {
  const std::vector<LocationFix> raw = originals(fixes);
  const std::vector<double> speed = fix_speeds(raw);
  std::size_t i = 0;
  while (i < raw.size()) {
    if (!(speed[i] < cfg.stop_speed)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    double lat = 0.0, lon = 0.0;
    while (j < raw.size() && speed[j] < cfg.stop_speed) {
      lat += raw[j].pos.lat;
      lon += raw[j].pos.lon;
      ++j;
    }
    if (raw[j - 1].t - raw[i].t > cfg.stop_minutes * 60.0) {
      AnchorObservation o;
      o.kind = AnchorKind::Stop;
      o.t_begin = raw[i].t;
      o.t_end = raw[j - 1].t;
      o.t = 0.5 * (o.t_begin + o.t_end);
      const double m = static_cast<double>(j - i);
      o.location = {lat / m, lon / m};
      o.segment = fixes[i].segment;
      out.push_back(std::move(o));
    }
    i = j;
  }
}

struct MarkerKey {
  std::string segment;
  std::size_t index;
  auto operator<=>(const MarkerKey&) const = default;
};

AnchorObservation special_lane_obs(const RoadSegment& seg, const SpecialLane& sl, double t, bool taken) {
  AnchorObservation o;
  o.kind = sl.kind == SpecialLaneKind::Merge ? AnchorKind::MergeLane : AnchorKind::ExitLane;
  o.t = o.t_begin = o.t_end = t;
  o.location = point_along(seg, sl.position_m);
  o.side = sl.side;
  o.taken = taken;
  o.segment = seg.id;
  return o;
}

void add_special_lanes(std::span<const SnappedFix> fixes, const DetectorConfig& cfg, const RoadMap& map,
                       std::vector<AnchorObservation>& out) {
  std::map<MarkerKey, bool> taken;

  // Taken: a segment transition whose ramp endpoint sits at a marker.
  for (std::size_t k = 1; k < fixes.size(); ++k) {
    if (fixes[k].segment == fixes[k - 1].segment) continue;
    const RoadSegment* from = map.find(fixes[k - 1].segment);
    const RoadSegment* to = map.find(fixes[k].segment);
    if (from == nullptr || to == nullptr) continue;
    // Exit: last fix on the main road. Merge: first fix back on it.
    const double t_exit = fixes[k - 1].original.t;
    const double t_merge = fixes[k].original.t;
    for (std::size_t m = 0; m < from->special_lanes.size(); ++m) {
      const auto& sl = from->special_lanes[m];
      if (sl.kind != SpecialLaneKind::Exit) continue;
      if (haversine_m(point_along(*from, sl.position_m), to->polyline.front()) > cfg.special_lane_radius_m) continue;
      taken[{from->id, m}] = true;
      out.push_back(special_lane_obs(*from, sl, t_exit, true));
    }
    for (std::size_t m = 0; m < to->special_lanes.size(); ++m) {
      const auto& sl = to->special_lanes[m];
      if (sl.kind != SpecialLaneKind::Merge) continue;
      if (haversine_m(point_along(*to, sl.position_m), from->polyline.back()) > cfg.special_lane_radius_m) continue;
      taken[{to->id, m}] = true;
      out.push_back(special_lane_obs(*to, sl, t_merge, true));
    }
  }

  // Passed: along-track position crosses a marker that was not used.
  for (std::size_t k = 1; k < fixes.size(); ++k) {
    const auto& a = fixes[k - 1];
    const auto& b = fixes[k];
    if (a.segment != b.segment || !(b.along_m > a.along_m)) continue;
    const RoadSegment* seg = map.find(b.segment);
    if (seg == nullptr) continue;
    for (std::size_t m = 0; m < seg->special_lanes.size(); ++m) {
      const auto& sl = seg->special_lanes[m];
      if (!(a.along_m < sl.position_m && sl.position_m <= b.along_m)) continue;
      if (taken.count({seg->id, m})) continue;
      const double u = (sl.position_m - a.along_m) / (b.along_m - a.along_m);
      const double t = a.original.t + u * (b.original.t - a.original.t);
      out.push_back(special_lane_obs(*seg, sl, t, false));
    }
  }
}

}  // namespace

std::vector<double> fix_speeds(std::span<const LocationFix> fixes) {
  const std::size_t n = fixes.size();
  std::vector<double> raw(n, 0.0);
  const double h = kSpeedBaselineS / 2.0;
  std::size_t lo = 0, hi = 0;
  for (std::size_t k = 0; k < n; ++k) {
    while (fixes[k].t - fixes[lo].t > h) ++lo;
    if (hi < k) hi = k;
    while (hi + 1 < n && fixes[hi + 1].t - fixes[k].t <= h) ++hi;
    const double dt = fixes[hi].t - fixes[lo].t;
    raw[k] = dt > 0.0 ? haversine_m(fixes[lo].pos, fixes[hi].pos) / dt : 0.0;
  }
  std::vector<double> out(n);
  const double m = kSpeedMedianS / 2.0;
  lo = hi = 0;
  std::vector<double> buf;
  for (std::size_t k = 0; k < n; ++k) {
    while (fixes[k].t - fixes[lo].t > m) ++lo;
    if (hi < k) hi = k;
    while (hi + 1 < n && fixes[hi + 1].t - fixes[k].t <= m) ++hi;
    buf.assign(raw.begin() + static_cast<std::ptrdiff_t>(lo), raw.begin() + static_cast<std::ptrdiff_t>(hi + 1));
    const auto mid = buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2);
    std::nth_element(buf.begin(), mid, buf.end());
    out[k] = *mid;
  }
  return out;
}

std::vector<SnappedFix> stabilize_segments(std::vector<SnappedFix> fixes, const RoadMap& map, std::size_t min_run) {
  struct Run {
    std::size_t begin, end;
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < fixes.size();) {
    std::size_t j = i;
    while (j < fixes.size() && fixes[j].segment == fixes[i].segment) ++j;
    runs.push_back({i, j});
    i = j;
  }
  if (runs.size() < 2) return fixes;

  std::string prev;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto [b, e] = runs[r];
    if (e - b >= min_run) {
      prev = fixes[b].segment;
      continue;
    }
    std::string target = prev;
    if (target.empty()) {
      for (std::size_t q = r + 1; q < runs.size(); ++q)
        if (runs[q].end - runs[q].begin >= min_run) {
          target = fixes[runs[q].begin].segment;
          break;
        }
    }
    const RoadSegment* seg = target.empty() ? nullptr : map.find(target);
    if (seg == nullptr) continue;
    for (std::size_t i = b; i < e; ++i) fixes[i] = project_onto(fixes[i].original, *seg);
  }
  return fixes;
}

std::vector<AnchorObservation> classify_bootstrap(std::span<const SensorSample> smoothed,
                                                  std::span<const SnappedFix> fixes, const DetectorConfig& cfg,
                                                  const RoadMap& map) {
  std::vector<AnchorObservation> out;
  const std::vector<LocationFix> raw = originals(fixes);
  for (const auto& r : find_rotation_intervals(smoothed, cfg)) {
    const RotationClass c = classify_rotation(r, cfg);
    if (c != RotationClass::Turn && c != RotationClass::UTurn) continue;
    AnchorObservation o;
    if (c == RotationClass::UTurn)
      o.kind = AnchorKind::UTurn;
    else
      o.kind = r.net_yaw_deg > 0.0 ? AnchorKind::TurnRight : AnchorKind::TurnLeft;
    o.t_begin = r.t_begin;
    o.t_end = r.t_end;
    o.t = 0.5 * (r.t_begin + r.t_end);
    if (!raw.empty()) o.location = interpolate_location(raw, o.t);
    o.segment = segment_before(fixes, r.t_begin);
    out.push_back(std::move(o));
  }
  add_stops(fixes, cfg, out);
  add_special_lanes(fixes, cfg, map, out);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  return out;
}

LatLon interpolate_location(std::span<const LocationFix> fixes, double t) {
  if (fixes.empty()) return {};
  if (t <= fixes.front().t) return fixes.front().pos;
  if (t >= fixes.back().t) return fixes.back().pos;
  const auto it = std::upper_bound(fixes.begin(), fixes.end(), t, [](double v, const auto& f) { return v < f.t; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double u = (t - a.t) / (b.t - a.t);
  return {a.pos.lat + u * (b.pos.lat - a.pos.lat), a.pos.lon + u * (b.pos.lon - a.pos.lon)};
}

}  // namespace lanequest
