#include "lanequest/trace.hpp"

#include <algorithm>
#include <cmath>

#include "lanequest/error.hpp"
#include "lanequest/text.hpp"

namespace lanequest {

namespace {

constexpr std::string_view kTraceHeader = "#lanequest-trace v1";
constexpr std::string_view kMapHeader = "#lanequest-map v1";

bool finite(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

void append_field(std::string& out, double v) {
  out += '\t';
  out += text::format_double(v);
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    fn(text::chomp(text.substr(pos, end - pos)), line_no);
    pos = end + 1;
  }
}

void expect_fields(const std::vector<std::string_view>& f, std::size_t n, std::size_t line_no) {
  if (f.size() != n)
    throw ParseError(line_no, "record '" + std::string(f[0]) + "' expects " + std::to_string(n - 1) +
                                  " fields, got " + std::to_string(f.size() - 1));
}

}  // namespace

RoadMap::RoadMap(std::vector<RoadSegment> segments) : segments_(std::move(segments)) {
  std::sort(segments_.begin(), segments_.end(),
            [](const RoadSegment& a, const RoadSegment& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& s = segments_[i];
    if (i > 0 && segments_[i - 1].id == s.id) throw ValidationError("duplicate segment id '" + s.id + "'");
    if (s.polyline.size() < 2) throw ValidationError("segment '" + s.id + "' needs at least 2 vertices");
    if (s.lane_count < 1) throw ValidationError("segment '" + s.id + "' has lane count < 1");
  }
}

const RoadSegment* RoadMap::find(std::string_view id) const {
  auto it = std::lower_bound(segments_.begin(), segments_.end(), id,
                             [](const RoadSegment& s, std::string_view v) { return s.id < v; });
  if (it == segments_.end() || it->id != id) return nullptr;
  return &*it;
}

double polyline_length_m(const std::vector<LatLon>& polyline) {
  double len = 0.0;
  for (std::size_t i = 1; i < polyline.size(); ++i) len += haversine_m(polyline[i - 1], polyline[i]);
  return len;
}

std::optional<int> label_at(const std::vector<LaneLabel>& labels, double t) {
  auto it = std::upper_bound(labels.begin(), labels.end(), t,
                             [](double v, const LaneLabel& l) { return v < l.t; });
  if (it == labels.begin()) return std::nullopt;
  return std::prev(it)->lane;
}

void validate_trace(const DriveTrace& trace, const RoadMap* map) {
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    const auto& s = trace.samples[i];
    if (!std::isfinite(s.t) || s.t < 0.0)
      throw ValidationError("sample " + std::to_string(i) + ": negative or non-finite timestamp");
    if (i > 0 && !(s.t > trace.samples[i - 1].t))
      throw ValidationError("sample " + std::to_string(i) + ": timestamps must be strictly increasing");
    if (!finite(s.accel) || !finite(s.gyro) || !finite(s.mag) || !std::isfinite(s.yaw))
      throw ValidationError("sample " + std::to_string(i) + ": non-finite component");
  }
  for (std::size_t i = 0; i < trace.fixes.size(); ++i) {
    const auto& f = trace.fixes[i];
    if (!std::isfinite(f.t) || f.t < 0.0)
      throw ValidationError("fix " + std::to_string(i) + ": negative or non-finite timestamp");
    if (i > 0 && !(f.t > trace.fixes[i - 1].t))
      throw ValidationError("fix " + std::to_string(i) + ": timestamps must be strictly increasing");
    if (!(f.accuracy > 0.0)) throw ValidationError("fix " + std::to_string(i) + ": accuracy must be > 0");
    if (f.pos.lat < -90.0 || f.pos.lat > 90.0 || f.pos.lon < -180.0 || f.pos.lon > 180.0)
      throw ValidationError("fix " + std::to_string(i) + ": lat/lon out of range");
  }
  for (std::size_t i = 0; i < trace.ground_truth.size(); ++i) {
    const auto& g = trace.ground_truth[i];
    if (!std::isfinite(g.t) || g.t < 0.0)
      throw ValidationError("label " + std::to_string(i) + ": negative or non-finite timestamp");
    if (i > 0 && g.t < trace.ground_truth[i - 1].t)
      throw ValidationError("label " + std::to_string(i) + ": timestamps must be non-decreasing");
    if (g.lane < 1) throw ValidationError("label " + std::to_string(i) + ": lane index must be >= 1");
    if (map == nullptr || trace.fixes.empty()) continue;
    auto it = std::upper_bound(trace.fixes.begin(), trace.fixes.end(), g.t,
                               [](double v, const LocationFix& f) { return v < f.t; });
    const LocationFix& ref = it == trace.fixes.begin() ? trace.fixes.front() : *std::prev(it);
    const RoadSegment* seg = map->find(ref.segment);
    if (seg == nullptr)
      throw ValidationError("label " + std::to_string(i) + ": unknown segment '" + ref.segment + "'");
    if (g.lane > seg->lane_count)
      throw ValidationError("label " + std::to_string(i) + ": lane " + std::to_string(g.lane) +
                            " exceeds lane count " + std::to_string(seg->lane_count) + " of segment '" +
                            seg->id + "'");
  }
}

DriveTrace parse_trace_text(std::string_view text) {
  DriveTrace trace;
  bool header_seen = false;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (!header_seen) {
      if (line != kTraceHeader) throw ParseError(line_no, "missing '#lanequest-trace v1' header");
      header_seen = true;
      return;
    }
    if (line.empty() || line.front() == '#') return;
    const auto f = text::split_fields(line);
    if (f.empty()) return;
    if (f[0] == "S") {
      expect_fields(f, 12, line_no);
      SensorSample s;
      s.t = text::parse_double(f[1], line_no);
      s.accel = {text::parse_double(f[2], line_no), text::parse_double(f[3], line_no),
                 text::parse_double(f[4], line_no)};
      s.gyro = {text::parse_double(f[5], line_no), text::parse_double(f[6], line_no),
                text::parse_double(f[7], line_no)};
      s.mag = {text::parse_double(f[8], line_no), text::parse_double(f[9], line_no),
               text::parse_double(f[10], line_no)};
      s.yaw = text::parse_double(f[11], line_no);
      trace.samples.push_back(s);
    } else if (f[0] == "F") {
      expect_fields(f, 6, line_no);
      LocationFix fix;
      fix.t = text::parse_double(f[1], line_no);
      fix.pos = {text::parse_double(f[2], line_no), text::parse_double(f[3], line_no)};
      fix.accuracy = text::parse_double(f[4], line_no);
      fix.segment = std::string(f[5]);
      trace.fixes.push_back(std::move(fix));
    } else if (f[0] == "G") {
      expect_fields(f, 3, line_no);
      LaneLabel g;
      g.t = text::parse_double(f[1], line_no);
      g.lane = static_cast<int>(text::parse_int(f[2], line_no));
      trace.ground_truth.push_back(g);
    } else {
      throw ParseError(line_no, "unknown record type '" + std::string(f[0]) + "'");
    }
  });
  if (!header_seen) throw ParseError(1, "missing '#lanequest-trace v1' header");
  validate_trace(trace);
  return trace;
}

DriveTrace parse_trace(const std::string& path) {
  try {
    return parse_trace_text(text::read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.detail(), path);
  }
}

std::string format_trace(const DriveTrace& trace) {
  std::string out;
  out.reserve(64 + trace.samples.size() * 160 + trace.fixes.size() * 64 + trace.ground_truth.size() * 24);
  out += kTraceHeader;
  out += '\n';
  std::size_t si = 0, fi = 0, gi = 0;
  const auto& S = trace.samples;
  const auto& F = trace.fixes;
  const auto& G = trace.ground_truth;
  while (si < S.size() || fi < F.size() || gi < G.size()) {
    const double ts = si < S.size() ? S[si].t : INFINITY;
    const double tf = fi < F.size() ? F[fi].t : INFINITY;
    const double tg = gi < G.size() ? G[gi].t : INFINITY;
    if (si < S.size() && ts <= tf && ts <= tg) {
      const auto& s = S[si++];
      out += 'S';
      append_field(out, s.t);
      for (double v : {s.accel.x, s.accel.y, s.accel.z, s.gyro.x, s.gyro.y, s.gyro.z, s.mag.x, s.mag.y, s.mag.z})
        append_field(out, v);
      append_field(out, s.yaw);
    } else if (fi < F.size() && tf <= tg) {
      const auto& f = F[fi++];
      out += 'F';
      append_field(out, f.t);
      append_field(out, f.pos.lat);
      append_field(out, f.pos.lon);
      append_field(out, f.accuracy);
      out += '\t';
      out += f.segment;
    } else {
      const auto& g = G[gi++];
      out += 'G';
      append_field(out, g.t);
      out += '\t';
      out += std::to_string(g.lane);
    }
    out += '\n';
  }
  return out;
}

void write_trace(const DriveTrace& trace, const std::string& path) {
  text::write_file(path, format_trace(trace));
}

RoadMap parse_map_text(std::string_view text) {
  std::vector<RoadSegment> segments;
  struct PendingSpecial {
    std::string segment;
    SpecialLane lane;
    std::size_t line_no;
  };
  std::vector<PendingSpecial> specials;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (line.empty() || line.front() == '#') return;
    const auto f = text::split_fields(line);
    if (f.empty()) return;
    if (f[0] == "R") {
      if (f.size() < 4) throw ParseError(line_no, "R record needs id, lane count and vertex count");
      RoadSegment seg;
      seg.id = std::string(f[1]);
      seg.lane_count = static_cast<int>(text::parse_int(f[2], line_no));
      const auto nv = text::parse_int(f[3], line_no);
      if (nv < 0 || f.size() != 4 + 2 * static_cast<std::size_t>(nv))
        throw ParseError(line_no, "R record vertex count does not match coordinates");
      for (long long i = 0; i < nv; ++i)
        seg.polyline.push_back({text::parse_double(f[4 + 2 * i], line_no), text::parse_double(f[5 + 2 * i], line_no)});
      segments.push_back(std::move(seg));
    } else if (f[0] == "X") {
      expect_fields(f, 5, line_no);
      SpecialLane sl;
      if (f[2] == "merge") sl.kind = SpecialLaneKind::Merge;
      else if (f[2] == "exit") sl.kind = SpecialLaneKind::Exit;
      else throw ParseError(line_no, "special lane kind must be merge or exit");
      if (f[3] == "left") sl.side = Side::Left;
      else if (f[3] == "right") sl.side = Side::Right;
      else throw ParseError(line_no, "special lane side must be left or right");
      sl.position_m = text::parse_double(f[4], line_no);
      specials.push_back({std::string(f[1]), sl, line_no});
    } else {
      throw ParseError(line_no, "unknown map record '" + std::string(f[0]) + "'");
    }
  });
  for (auto& p : specials) {
    auto it = std::find_if(segments.begin(), segments.end(), [&](const RoadSegment& s) { return s.id == p.segment; });
    if (it == segments.end()) throw ParseError(p.line_no, "special lane references unknown segment '" + p.segment + "'");
    it->special_lanes.push_back(p.lane);
  }
  return RoadMap(std::move(segments));
}

RoadMap parse_map(const std::string& path) { return parse_map_text(text::read_file(path)); }

std::string format_map(const RoadMap& map) {
  std::string out(kMapHeader);
  out += '\n';
  for (const auto& s : map.segments()) {
    out += "R\t" + s.id + '\t' + std::to_string(s.lane_count) + '\t' + std::to_string(s.polyline.size());
    for (const auto& v : s.polyline) {
      append_field(out, v.lat);
      append_field(out, v.lon);
    }
    out += '\n';
  }
  for (const auto& s : map.segments()) {
    for (const auto& sl : s.special_lanes) {
      out += "X\t" + s.id + '\t' + (sl.kind == SpecialLaneKind::Merge ? "merge" : "exit") + '\t' +
             (sl.side == Side::Left ? "left" : "right");
      append_field(out, sl.position_m);
      out += '\n';
    }
  }
  return out;
}

void write_map(const RoadMap& map, const std::string& path) { text::write_file(path, format_map(map)); }

}  // namespace lanequest
