#include "lanequest/events.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "lanequest/error.hpp"

namespace lanequest {

namespace {

constexpr std::array<std::pair<AnchorKind, std::string_view>, 11> kKindNames{{
    {AnchorKind::TurnLeft, "TurnLeft"},
    {AnchorKind::TurnRight, "TurnRight"},
    {AnchorKind::UTurn, "UTurn"},
    {AnchorKind::MergeLane, "MergeLane"},
    {AnchorKind::ExitLane, "ExitLane"},
    {AnchorKind::Stop, "Stop"},
    {AnchorKind::Curve, "Curve"},
    {AnchorKind::TunnelLaneFeature, "TunnelLaneFeature"},
    {AnchorKind::SurfaceAnomaly, "SurfaceAnomaly"},
    {AnchorKind::Pothole, "Pothole"},
    {AnchorKind::CalmingDevice, "CalmingDevice"},
}};

struct Extremum {
  std::size_t index;
  bool is_max;
};

// Prominence of an extremum, searching at most `reach_s` seconds each way.
double prominence(const Series& s, std::size_t i, bool is_max, double reach_s) {
  const double v = s.v[i];
  const auto beyond = [&](double other) { return is_max ? other > v : other < v; };
  double left = v;
  for (std::size_t j = i; j-- > 0;) {
    if (s.t[i] - s.t[j] > reach_s || beyond(s.v[j])) break;
    left = is_max ? std::min(left, s.v[j]) : std::max(left, s.v[j]);
  }
  double right = v;
  for (std::size_t j = i + 1; j < s.size(); ++j) {
    if (s.t[j] - s.t[i] > reach_s || beyond(s.v[j])) break;
    right = is_max ? std::min(right, s.v[j]) : std::max(right, s.v[j]);
  }
  return is_max ? v - std::max(left, right) : std::min(left, right) - v;
}

double local_median(const Series& s, std::size_t i, double reach_s) {
  const auto lo = std::lower_bound(s.t.begin(), s.t.end(), s.t[i] - reach_s) - s.t.begin();
  const auto hi = std::upper_bound(s.t.begin(), s.t.end(), s.t[i] + reach_s) - s.t.begin();
  std::vector<double> w(s.v.begin() + lo, s.v.begin() + hi);
  const auto mid = w.begin() + static_cast<std::ptrdiff_t>(w.size() / 2);
  std::nth_element(w.begin(), mid, w.end());
  return *mid;
}

// Windowed variance over [t - w/2, t + w/2] for every sample, computed from
// prefix sums of mean-removed values.
std::vector<double> window_variance(const std::vector<double>& t, const std::vector<double>& v, double w) {
  const std::size_t n = v.size();
  std::vector<double> out(n, 0.0);
  if (n == 0) return out;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(n);
  std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = v[i] - mean;
    s1[i + 1] = s1[i] + d;
    s2[i + 1] = s2[i] + d * d;
  }
  const double h = w / 2.0;
  std::size_t lo = 0, hi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (lo < i && t[i] - t[lo] > h) ++lo;
    if (hi < i + 1) hi = i + 1;
    while (hi < n && t[hi] - t[i] <= h) ++hi;
    const double m = static_cast<double>(hi - lo);
    const double a = s1[hi] - s1[lo];
    const double b = s2[hi] - s2[lo];
    out[i] = std::max(0.0, b / m - (a / m) * (a / m));
  }
  return out;
}

double quiet_decile_threshold(std::vector<double> vars, double factor) {
  if (vars.empty()) return 0.0;
  const std::size_t k = vars.size() / 10;
  std::nth_element(vars.begin(), vars.begin() + static_cast<std::ptrdiff_t>(k), vars.end());
  return factor * vars[k];
}

struct Excursion {
  std::size_t first;
  std::size_t last;
  std::size_t peak;
};

std::vector<Excursion> excursions_above(const std::vector<double>& x, double threshold) {
  std::vector<Excursion> out;
  std::size_t i = 0;
  while (i < x.size()) {
    if (!(x[i] > threshold)) {
      ++i;
      continue;
    }
    Excursion e{i, i, i};
    while (i < x.size() && x[i] > threshold) {
      if (x[i] > x[e.peak]) e.peak = i;
      e.last = i++;
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace

std::string_view to_string(AnchorKind k) {
  for (const auto& [kind, name] : kKindNames)
    if (kind == k) return name;
  return "Unknown";
}

std::optional<AnchorKind> anchor_kind_from_string(std::string_view s) {
  for (const auto& [kind, name] : kKindNames)
    if (name == s) return kind;
  return std::nullopt;
}

std::string_view to_string(MotionKind k) { return k == MotionKind::LeftChange ? "LeftChange" : "RightChange"; }

bool is_bootstrap(AnchorKind k) {
  switch (k) {
    case AnchorKind::TurnLeft:
    case AnchorKind::TurnRight:
    case AnchorKind::UTurn:
    case AnchorKind::MergeLane:
    case AnchorKind::ExitLane:
    case AnchorKind::Stop: return true;
    default: return false;
  }
}

bool has_feature(AnchorKind k) {
  return k == AnchorKind::Curve || k == AnchorKind::TunnelLaneFeature || k == AnchorKind::SurfaceAnomaly ||
         k == AnchorKind::Pothole || k == AnchorKind::CalmingDevice;
}

double event_time(const DetectedEvent& e) {
  return std::visit([](const auto& v) { return v.t; }, e);
}

void validate(const DetectorConfig& c) {
  const double positives[] = {c.lane_change_window_s, c.lane_change_threshold, c.peak_proximity_s, c.min_prominence,
                              c.stop_minutes, c.stop_speed, c.turn_angle_deg, c.turn_band_deg, c.uturn_angle_deg,
                              c.uturn_band_deg, c.omega_min, c.curve_min_s, c.tunnel_window_s, c.anomaly_window_s,
                              c.anomaly_merge_s, c.adaptive_threshold_factor, c.special_lane_radius_m};
  for (double v : positives)
    if (!(v > 0.0)) throw ValidationError("detector parameters must be positive");
  if (!(c.curve_trim_s >= 0.0)) throw ValidationError("curve trim must be non-negative");
  if (c.anomaly_var_threshold && !(*c.anomaly_var_threshold > 0.0))
    throw ValidationError("anomaly variance threshold must be positive");
  if (c.tunnel_var_threshold && !(*c.tunnel_var_threshold > 0.0))
    throw ValidationError("tunnel variance threshold must be positive");
  if (c.turn_angle_deg + c.turn_band_deg >= c.uturn_angle_deg - c.uturn_band_deg)
    throw ValidationError("turn and u-turn yaw bands overlap");
  if (c.turn_band_deg >= c.turn_angle_deg) throw ValidationError("turn band must exclude straight driving");
}

std::vector<MotionEvent> detect_lane_changes(const Series& x, const DetectorConfig& cfg) {
  std::vector<Extremum> ext;
  const std::size_t n = x.size();
  const double reach = cfg.lane_change_window_s / 2.0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double a = x.v[i - 1], b = x.v[i], c = x.v[i + 1];
    bool is_max = b > a && b >= c;
    bool is_min = b < a && b <= c;
    if (!is_max && !is_min) continue;
    if (prominence(x, i, is_max, reach) < cfg.min_prominence) continue;
    if (std::abs(b - local_median(x, i, reach)) < cfg.min_excursion) continue;
    ext.push_back({i, is_max});
  }

  std::vector<MotionEvent> events;
  std::vector<bool> used(ext.size(), false);
  for (std::size_t i = 0; i < ext.size(); ++i) {
    if (used[i]) continue;
    const double ti = x.t[ext[i].index];
    for (std::size_t j = i + 1; j < ext.size(); ++j) {
      const double tj = x.t[ext[j].index];
      if (tj - ti > cfg.peak_proximity_s || tj - ti > cfg.lane_change_window_s) break;
      if (used[j] || ext[j].is_max == ext[i].is_max) continue;
      const double delta = std::abs(x.v[ext[i].index] - x.v[ext[j].index]);
      if (!(delta > cfg.lane_change_threshold)) continue;
      used[i] = used[j] = true;
      events.push_back({(ti + tj) / 2.0, ext[i].is_max ? MotionKind::RightChange : MotionKind::LeftChange, delta, tj});
      break;
    }
  }
  return events;
}

std::vector<RotationInterval> find_rotation_intervals(std::span<const SensorSample> s, const DetectorConfig& cfg) {
  std::vector<RotationInterval> out;
  const std::size_t n = s.size();
  if (n < 2) return out;

  // Unwrapped compass yaw.
  std::vector<double> yaw(n);
  yaw[0] = s[0].yaw;
  for (std::size_t i = 1; i < n; ++i) yaw[i] = yaw[i - 1] + wrap_degrees_180(s[i].yaw - s[i - 1].yaw);

  const auto mean_yaw = [&](std::size_t a, std::size_t b) {  // [a, b)
    double acc = 0.0;
    for (std::size_t i = a; i < b; ++i) acc += yaw[i];
    return acc / static_cast<double>(b - a);
  };
  const double dt_mean = (s[n - 1].t - s[0].t) / static_cast<double>(n - 1);
  const std::size_t edge = std::max<std::size_t>(1, static_cast<std::size_t>(0.5 / std::max(dt_mean, 1e-6)));

  std::size_t i = 0;
  while (i < n) {
    const double w = s[i].gyro.z;
    if (!(std::abs(w) > cfg.omega_min)) {
      ++i;
      continue;
    }
    const bool positive = w > 0.0;
    std::size_t j = i;
    while (j < n && std::abs(s[j].gyro.z) > cfg.omega_min && (s[j].gyro.z > 0.0) == positive) ++j;

    RotationInterval r;
    r.t_begin = s[i].t;
    r.t_end = s[j - 1].t;
    const std::size_t a0 = i >= edge ? i - edge : 0;
    const std::size_t b1 = std::min(n, j + edge);
    r.net_yaw_deg = mean_yaw(j - 1, b1) - mean_yaw(a0, i + 1);

    std::vector<double> mags;
    mags.reserve(j - i);
    for (std::size_t k = i; k < j; ++k) mags.push_back(std::abs(s[k].gyro.z));
    std::vector<double> sorted = mags;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
    const double cut = 0.8 * sorted[sorted.size() / 2];
    // Smoothing turns the step into omega at each end into a ramp where
    // a = v * omega rather than omega^2 r; long intervals drop their ends.
    const auto average = [&](double trim) {
      double sa = 0.0, sw = 0.0;
      std::size_t cnt = 0;
      for (std::size_t k = i; k < j; ++k) {
        if (mags[k - i] < cut || s[k].t < r.t_begin + trim || s[k].t > r.t_end - trim) continue;
        sa += std::abs(s[k].accel.x);
        sw += mags[k - i];
        ++cnt;
      }
      if (cnt == 0) return false;
      r.mean_accel = sa / static_cast<double>(cnt);
      r.mean_omega = sw / static_cast<double>(cnt);
      return true;
    };
    if (!average(cfg.curve_trim_s)) average(0.0);
    out.push_back(r);
    i = j;
  }
  return out;
}

RotationClass classify_rotation(const RotationInterval& r, const DetectorConfig& cfg) {
  const double a = std::abs(r.net_yaw_deg);
  if (std::abs(a - cfg.uturn_angle_deg) <= cfg.uturn_band_deg) return RotationClass::UTurn;
  if (std::abs(a - cfg.turn_angle_deg) <= cfg.turn_band_deg) return RotationClass::Turn;
  if (a < cfg.turn_angle_deg - cfg.turn_band_deg && r.t_end - r.t_begin >= cfg.curve_min_s)
    return RotationClass::Curve;
  return RotationClass::None;
}

double estimate_curve_radius(double centripetal_accel, double angular_velocity, double omega_min) {
  if (!(std::abs(angular_velocity) > omega_min))
    throw NotACurveError("angular velocity below threshold: straight road");
  return std::abs(centripetal_accel) / (angular_velocity * angular_velocity);
}

std::vector<AnchorObservation> detect_curves(std::span<const SensorSample> smoothed, const DetectorConfig& cfg) {
  std::vector<AnchorObservation> out;
  for (const auto& r : find_rotation_intervals(smoothed, cfg)) {
    if (classify_rotation(r, cfg) != RotationClass::Curve) continue;
    AnchorObservation o;
    o.kind = AnchorKind::Curve;
    o.t = (r.t_begin + r.t_end) / 2.0;
    o.t_begin = r.t_begin;
    o.t_end = r.t_end;
    o.feature = estimate_curve_radius(r.mean_accel, r.mean_omega, cfg.omega_min);
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<AnchorObservation> detect_tunnel_feature(const Series& mag_x, const DetectorConfig& cfg) {
  std::vector<AnchorObservation> out;
  const std::size_t n = mag_x.size();
  if (n < 3) return out;
  // Variance of the fast field component from first differences: for an
  // uncorrelated disturbance var(dx) = 2 var(x), while heading-driven drift
  // barely moves consecutive samples.
  std::vector<double> t(n - 1), d(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    t[i] = 0.5 * (mag_x.t[i] + mag_x.t[i + 1]);
    d[i] = mag_x.v[i + 1] - mag_x.v[i];
  }
  std::vector<double> var = window_variance(t, d, cfg.tunnel_window_s);
  for (double& v : var) v *= 0.5;
  const double thr = cfg.tunnel_var_threshold.value_or(quiet_decile_threshold(var, cfg.adaptive_threshold_factor));
  for (const auto& e : excursions_above(var, thr)) {
    AnchorObservation o;
    o.kind = AnchorKind::TunnelLaneFeature;
    o.t_begin = t[e.first];
    o.t_end = t[e.last];
    o.t = 0.5 * (o.t_begin + o.t_end);
    // The peak of overlapping windows overshoots the true level; the median
    // over the excursion does not, and shrugs off the ramps at either end.
    std::vector<double> inside(var.begin() + static_cast<std::ptrdiff_t>(e.first),
                               var.begin() + static_cast<std::ptrdiff_t>(e.last) + 1);
    const auto mid = inside.begin() + static_cast<std::ptrdiff_t>(inside.size() / 2);
    std::nth_element(inside.begin(), mid, inside.end());
    o.feature = *mid;
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<AnchorObservation> detect_surface_anomaly(const Series& z, const DetectorConfig& cfg) {
  std::vector<AnchorObservation> out;
  if (z.size() < 2) return out;
  const std::vector<double> var = window_variance(z.t, z.v, cfg.anomaly_window_s);
  const double thr = cfg.anomaly_var_threshold.value_or(quiet_decile_threshold(var, cfg.adaptive_threshold_factor));
  std::vector<Excursion> merged;
  for (const auto& e : excursions_above(var, thr)) {
    if (!merged.empty() && z.t[e.first] - z.t[merged.back().last] < cfg.anomaly_merge_s) {
      auto& m = merged.back();
      if (var[e.peak] > var[m.peak]) m.peak = e.peak;
      m.last = e.last;
    } else {
      merged.push_back(e);
    }
  }
  for (const auto& e : merged) {
    AnchorObservation o;
    o.kind = AnchorKind::SurfaceAnomaly;
    o.t_begin = z.t[e.first];
    o.t_end = z.t[e.last];
    o.t = 0.5 * (o.t_begin + o.t_end);
    o.feature = var[e.peak];
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace lanequest
