#include "lanequest/preprocessing.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace lanequest {

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 identity() { return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }

Vec3 mul(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z, m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
          m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

double norm(const Vec3& v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }

// Rotation about z by `a` radians (counter-clockwise seen from +z).
Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
}

// Minimal rotation taking unit vector `u` onto +z (Rodrigues).
Mat3 align_to_z(const Vec3& u) {
  const Vec3 axis{u.y, -u.x, 0.0};  // u x z
  const double s = std::sqrt(axis.x * axis.x + axis.y * axis.y);
  const double c = u.z;
  if (s < 1e-15) {
    if (c > 0) return identity();
    return {{{1, 0, 0}, {0, -1, 0}, {0, 0, -1}}};
  }
  const Vec3 k{axis.x / s, axis.y / s, 0.0};
  const Mat3 K{{{0, -k.z, k.y}, {k.z, 0, -k.x}, {-k.y, k.x, 0}}};
  const Mat3 K2 = mul(K, K);
  Mat3 R = identity();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) R[i][j] += s * K[i][j] + (1.0 - c) * K2[i][j];
  return R;
}

double channel_value(const SensorSample& s, Channel ch) {
  switch (ch) {
    case Channel::AccelX: return s.accel.x;
    case Channel::AccelY: return s.accel.y;
    case Channel::AccelZ: return s.accel.z;
    case Channel::GyroX: return s.gyro.x;
    case Channel::GyroY: return s.gyro.y;
    case Channel::GyroZ: return s.gyro.z;
    case Channel::MagX: return s.mag.x;
    case Channel::MagY: return s.mag.y;
    case Channel::MagZ: return s.mag.z;
    case Channel::Yaw: return s.yaw;
  }
  return 0.0;
}

// First index range [begin, end) of at least `min_s` seconds where `pred`
// holds on every sample; end == 0 when none.
template <typename Pred>
std::pair<std::size_t, std::size_t> first_run(std::span<const SensorSample> s, double min_s, Pred pred) {
  std::size_t i = 0;
  while (i < s.size()) {
    if (!pred(s[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && pred(s[j])) ++j;
    if (s[j - 1].t - s[i].t >= min_s) return {i, j};
    i = j;
  }
  return {0, 0};
}

}  // namespace

Series extract_channel(std::span<const SensorSample> samples, Channel ch) {
  Series out;
  out.t.reserve(samples.size());
  out.v.reserve(samples.size());
  for (const auto& s : samples) {
    out.t.push_back(s.t);
    out.v.push_back(channel_value(s, ch));
  }
  return out;
}

Series lowpass_smooth(const Series& series, double window_s) {
  if (!(window_s > 0.0)) throw DomainError("smoothing window must be positive");
  const std::size_t n = series.size();
  Series out{series.t, std::vector<double>(n)};
  const double h = window_s / 2.0;
  std::size_t lo = 0, hi = 0;  // window is [lo, hi)
  for (std::size_t i = 0; i < n; ++i) {
    const double ti = series.t[i];
    while (lo < i && ti - series.t[lo] >= h) ++lo;
    if (hi < i + 1) hi = i + 1;
    while (hi < n && series.t[hi] - ti < h) ++hi;
    double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
    double vmin = std::numeric_limits<double>::infinity();
    double vmax = -vmin;
    for (std::size_t j = lo; j < hi; ++j) {
      const double dx = series.t[j] - ti;
      const double u = std::abs(dx) / h;
      const double a = 1.0 - u * u * u;
      const double w = a * a * a;
      const double y = series.v[j];
      s0 += w;
      s1 += w * dx;
      s2 += w * dx * dx;
      t0 += w * y;
      t1 += w * dx * y;
      vmin = std::min(vmin, y);
      vmax = std::max(vmax, y);
    }
    const double det = s0 * s2 - s1 * s1;
    double fit;
    if (hi - lo < 2 || det <= 1e-12 * s0 * s2) {
      fit = s0 > 0.0 ? t0 / s0 : series.v[i];
    } else {
      fit = (s2 * t0 - s1 * t1) / det;
    }
    out.v[i] = std::clamp(fit, vmin, vmax);
  }
  return out;
}

std::vector<SensorSample> smooth_samples(std::span<const SensorSample> samples, double window_s) {
  std::vector<SensorSample> out(samples.begin(), samples.end());
  constexpr std::array<Channel, 9> kChannels{Channel::AccelX, Channel::AccelY, Channel::AccelZ,
                                             Channel::GyroX,  Channel::GyroY,  Channel::GyroZ,
                                             Channel::MagX,   Channel::MagY,   Channel::MagZ};
  for (Channel ch : kChannels) {
    const Series sm = lowpass_smooth(extract_channel(samples, ch), window_s);
    for (std::size_t i = 0; i < out.size(); ++i) {
      auto& s = out[i];
      const double v = sm.v[i];
      switch (ch) {
        case Channel::AccelX: s.accel.x = v; break;
        case Channel::AccelY: s.accel.y = v; break;
        case Channel::AccelZ: s.accel.z = v; break;
        case Channel::GyroX: s.gyro.x = v; break;
        case Channel::GyroY: s.gyro.y = v; break;
        case Channel::GyroZ: s.gyro.z = v; break;
        case Channel::MagX: s.mag.x = v; break;
        case Channel::MagY: s.mag.y = v; break;
        case Channel::MagZ: s.mag.z = v; break;
        case Channel::Yaw: break;
      }
    }
  }
  return out;
}

std::vector<SensorSample> reorient_to_car_frame(std::span<const SensorSample> samples, const ReorientConfig& cfg) {
  const auto [s0, quiet_end] = first_run(
      samples, cfg.stationary_min_s, [&](const SensorSample& s) { return norm(s.gyro) < cfg.stationary_gyro_max; });
  if (quiet_end == 0)
    throw ReorientationError("no stationary window found for gravity estimation; pass car-frame data directly");
  // A quiet gyro also holds while the car pulls away in a straight line, so
  // only the head of the run is trusted as rest.
  std::size_t s1 = s0;
  while (s1 < quiet_end && samples[s1].t - samples[s0].t <= cfg.stationary_min_s) ++s1;

  Vec3 g{};
  for (std::size_t i = s0; i < s1; ++i) {
    g.x += samples[i].accel.x;
    g.y += samples[i].accel.y;
    g.z += samples[i].accel.z;
  }
  const double gn = norm(g);
  if (gn <= 0.0) throw ReorientationError("stationary window has zero mean acceleration");
  const Mat3 level = align_to_z({g.x / gn, g.y / gn, g.z / gn});

  // Heading: first sustained horizontal burst after levelling.
  const auto horizontal = [&](const SensorSample& s) {
    const Vec3 a = mul(level, s.accel);
    return std::hypot(a.x, a.y);
  };
  const auto [b0, b1] = first_run(samples.subspan(s1), cfg.burst_min_s,
                                  [&](const SensorSample& s) { return horizontal(s) > cfg.burst_accel_min; });
  double heading = 0.0;  // rotation about z applied after levelling
  if (b1 != 0) {
    double ax = 0.0, ay = 0.0;
    for (std::size_t i = s1 + b0; i < s1 + b1; ++i) {
      const Vec3 a = mul(level, samples[i].accel);
      ax += a.x;
      ay += a.y;
    }
    // Rotate the mean burst direction onto +y.
    heading = std::atan2(ax, ay);
  }
  const Mat3 R = mul(rot_z(heading), level);

  std::vector<SensorSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    SensorSample r = s;
    r.accel = mul(R, s.accel);
    r.gyro = mul(R, s.gyro);
    r.mag = mul(R, s.mag);
    r.yaw = wrap_degrees_360(s.yaw - rad2deg(heading));
    out.push_back(r);
  }
  return out;
}

namespace {

struct Projection {
  double dist2;
  double along;
  double cross;
};

Projection project_local(const RoadSegment& seg, const LatLon& p) {
  const LocalFrame frame(p);
  Projection best{std::numeric_limits<double>::infinity(), 0.0, 0.0};
  double cum = 0.0;
  Point2 a = frame.to_local(seg.polyline[0]);
  for (std::size_t k = 1; k < seg.polyline.size(); ++k) {
    const Point2 b = frame.to_local(seg.polyline[k]);
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double len2 = ex * ex + ey * ey;
    double u = len2 > 0.0 ? (-a.x * ex - a.y * ey) / len2 : 0.0;
    u = std::clamp(u, 0.0, 1.0);
    const double px = a.x + u * ex, py = a.y + u * ey;  // projection; fix is at the origin
    const double d2 = px * px + py * py;
    const double edge_len = haversine_m(seg.polyline[k - 1], seg.polyline[k]);
    if (d2 < best.dist2) {
      const double side = ex * (-py) - ey * (-px);  // z of edge x (fix - proj)
      const double d = std::sqrt(d2);
      best = {d2, cum + u * edge_len, side >= 0.0 ? d : -d};
    }
    cum += edge_len;
    a = b;
  }
  return best;
}

}  // namespace

SnappedFix project_onto(const LocationFix& fix, const RoadSegment& seg) {
  const Projection p = project_local(seg, fix.pos);
  return {fix, seg.id, p.along, p.cross};
}

SnappedFix snap_to_segment(const LocationFix& fix, const RoadMap& map, double snap_radius_m) {
  if (map.empty()) throw DomainError("cannot snap against an empty map");
  const RoadSegment* best_seg = nullptr;
  Projection best{std::numeric_limits<double>::infinity(), 0.0, 0.0};
  for (const auto& seg : map.segments()) {  // sorted by id, strict < keeps the lowest id on ties
    const Projection p = project_local(seg, fix.pos);
    if (p.dist2 < best.dist2) {
      best = p;
      best_seg = &seg;
    }
  }
  if (best_seg == nullptr || std::sqrt(best.dist2) > snap_radius_m)
    throw NoMatchError("no road segment within " + std::to_string(snap_radius_m) + " m of fix at t=" +
                       std::to_string(fix.t));
  return {fix, best_seg->id, best.along, best.cross};
}

LatLon point_along(const RoadSegment& seg, double along_m) {
  double cum = 0.0;
  for (std::size_t k = 1; k < seg.polyline.size(); ++k) {
    const double len = haversine_m(seg.polyline[k - 1], seg.polyline[k]);
    if (along_m <= cum + len || k + 1 == seg.polyline.size()) {
      const double u = len > 0.0 ? std::clamp((along_m - cum) / len, 0.0, 1.0) : 0.0;
      const LocalFrame frame(seg.polyline[k - 1]);
      const Point2 b = frame.to_local(seg.polyline[k]);
      return frame.to_latlon({u * b.x, u * b.y});
    }
    cum += len;
  }
  return seg.polyline.front();
}

}  // namespace lanequest
