#include "lanequest/formats.hpp"

#include <map>

#include "lanequest/error.hpp"
#include "lanequest/text.hpp"

namespace lanequest {

namespace {

constexpr std::string_view kEventsHeader = "#lanequest-events v1";
constexpr std::string_view kEstimatesHeader = "#lanequest-estimates v1";

using text::format_double;

template <class F>
void for_each_line(std::string_view text, std::string_view header, F&& fn) {
  std::size_t line_no = 0, pos = 0;
  bool header_seen = false;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line =
        text::chomp(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (!header_seen) {
      if (line != header) throw ParseError(line_no, "missing '" + std::string(header) + "' header");
      header_seen = true;
      continue;
    }
    if (line.empty() || line.front() == '#') continue;
    const auto f = text::split_fields(line);
    if (!f.empty()) fn(f, line_no);
  }
  if (!header_seen) throw ParseError(1, "missing '" + std::string(header) + "' header");
}

std::string_view source_name(UpdateSource s) {
  switch (s) {
    case UpdateSource::Init: return "init";
    case UpdateSource::Motion: return "motion";
    case UpdateSource::Perception: return "perception";
    case UpdateSource::Segment: return "segment";
  }
  return "init";
}

UpdateSource parse_source(std::string_view v, std::size_t line_no) {
  for (UpdateSource s : {UpdateSource::Init, UpdateSource::Motion, UpdateSource::Perception, UpdateSource::Segment})
    if (source_name(s) == v) return s;
  throw ParseError(line_no, "unknown estimate source '" + std::string(v) + "'");
}

std::string join(std::span<const double> v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += format_double(v[i]);
  }
  return out;
}

std::vector<double> split_doubles(std::string_view s, std::size_t line_no) {
  std::vector<double> out;
  while (true) {
    const std::size_t c = s.find(',');
    out.push_back(text::parse_double(s.substr(0, c), line_no));
    if (c == std::string_view::npos) break;
    s.remove_prefix(c + 1);
  }
  return out;
}

LaneBelief parse_belief(std::span<const double> p, std::size_t line_no) {
  try {
    return LaneBelief(std::vector<double>(p.begin(), p.end()));
  } catch (const Error& e) {
    throw ParseError(line_no, std::string("bad belief: ") + e.what());
  }
}

}  // namespace

std::string format_events(const TripEvents& trip, std::span<const LocationFix> fixes) {
  std::string out(kEventsHeader);
  out += "\nT\t" + std::to_string(trip.initial_lanes) + "\t" + format_double(trip.t_start) + "\n";
  const auto where = [&](double t) {
    const LatLon p = fixes.empty() ? LatLon{} : interpolate_location(fixes, t);
    return format_double(p.lat) + "\t" + format_double(p.lon);
  };
  for (const auto& ev : trip.events) {
    if (const auto* m = std::get_if<MotionEvent>(&ev)) {
      out += "E\t" + format_double(m->t) + "\t" + std::string(to_string(m->kind)) + "\t" + where(m->t) +
             "\tend=" + format_double(m->t_end) + "\tdelta=" + format_double(m->peak_delta) + "\n";
    } else if (const auto* s = std::get_if<SegmentChange>(&ev)) {
      out += "E\t" + format_double(s->t) + "\tSegmentChange\t" + where(s->t) + "\tseg=" + s->segment +
             "\tlanes=" + std::to_string(s->lane_count) + "\n";
    } else {
      const auto& o = std::get<AnchorObservation>(ev);
      out += "E\t" + format_double(o.t) + "\t" + std::string(to_string(o.kind)) + "\t" + format_double(o.location.lat) +
             "\t" + format_double(o.location.lon);
      if (o.feature) out += "\t" + format_double(*o.feature);
      out += std::string("\tside=") + (o.side == Side::Left ? "L" : "R") + "\ttaken=" + (o.taken ? "1" : "0");
      out += "\tspan=" + format_double(o.t_begin) + "," + format_double(o.t_end);
      if (!o.segment.empty()) out += "\tsegment=" + o.segment;
      out += "\tid=" + std::to_string(o.id);
      if (o.reporter_belief) out += "\tbelief=" + join(o.reporter_belief->probs(), ',');
      out += "\n";
    }
  }
  return out;
}

TripEvents parse_events_text(std::string_view text) {
  TripEvents trip;
  bool trip_seen = false;
  for_each_line(text, kEventsHeader, [&](const std::vector<std::string_view>& f, std::size_t line_no) {
    if (f[0] == "T") {
      if (f.size() != 3) throw ParseError(line_no, "record 'T' expects 2 fields");
      trip.initial_lanes = static_cast<int>(text::parse_int(f[1], line_no));
      if (trip.initial_lanes < 1) throw ParseError(line_no, "lane count must be >= 1");
      trip.t_start = text::parse_double(f[2], line_no);
      trip_seen = true;
      return;
    }
    if (f[0] != "E") throw ParseError(line_no, "unknown record type '" + std::string(f[0]) + "'");
    if (f.size() < 5) throw ParseError(line_no, "record 'E' expects at least 4 fields");
    const double t = text::parse_double(f[1], line_no);
    const LatLon loc{text::parse_double(f[3], line_no), text::parse_double(f[4], line_no)};
    std::optional<double> feature;
    std::map<std::string_view, std::string_view> kv;
    for (std::size_t i = 5; i < f.size(); ++i) {
      const std::size_t eq = f[i].find('=');
      if (eq == std::string_view::npos) {
        if (i != 5) throw ParseError(line_no, "unexpected field '" + std::string(f[i]) + "'");
        feature = text::parse_double(f[i], line_no);
      } else {
        kv[f[i].substr(0, eq)] = f[i].substr(eq + 1);
      }
    }
    const auto need = [&](std::string_view key) {
      const auto it = kv.find(key);
      if (it == kv.end()) throw ParseError(line_no, "missing '" + std::string(key) + "='");
      return it->second;
    };

    const std::string_view kind = f[2];
    if (kind == "LeftChange" || kind == "RightChange") {
      MotionEvent m;
      m.t = t;
      m.kind = kind == "LeftChange" ? MotionKind::LeftChange : MotionKind::RightChange;
      m.t_end = kv.count("end") ? text::parse_double(kv["end"], line_no) : t;
      m.peak_delta = kv.count("delta") ? text::parse_double(kv["delta"], line_no) : 0.0;
      trip.events.emplace_back(m);
    } else if (kind == "SegmentChange") {
      SegmentChange s;
      s.t = t;
      s.segment = std::string(need("seg"));
      s.lane_count = static_cast<int>(text::parse_int(need("lanes"), line_no));
      if (s.lane_count < 1) throw ParseError(line_no, "lane count must be >= 1");
      trip.events.emplace_back(std::move(s));
    } else {
      const auto k = anchor_kind_from_string(kind);
      if (!k) throw ParseError(line_no, "unknown event kind '" + std::string(kind) + "'");
      AnchorObservation o;
      o.t = t;
      o.kind = *k;
      o.location = loc;
      o.feature = feature;
      o.t_begin = o.t_end = t;
      if (kv.count("side")) {
        if (kv["side"] != "L" && kv["side"] != "R") throw ParseError(line_no, "side must be L or R");
        o.side = kv["side"] == "L" ? Side::Left : Side::Right;
      }
      if (kv.count("taken")) o.taken = kv["taken"] != "0";
      if (kv.count("span")) {
        const auto span = split_doubles(kv["span"], line_no);
        if (span.size() != 2) throw ParseError(line_no, "span expects two times");
        o.t_begin = span[0];
        o.t_end = span[1];
      }
      if (kv.count("segment")) o.segment = std::string(kv["segment"]);
      if (kv.count("id")) o.id = static_cast<std::uint64_t>(text::parse_int(kv["id"], line_no));
      if (kv.count("belief")) o.reporter_belief = parse_belief(split_doubles(kv["belief"], line_no), line_no);
      trip.events.emplace_back(std::move(o));
    }
  });
  if (!trip_seen) throw ParseError(0, "missing 'T' record");
  return trip;
}

TripEvents load_events(const std::string& path) {
  try {
    return parse_events_text(text::read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.detail(), path);
  }
}

void save_events(const TripEvents& trip, const std::string& path, std::span<const LocationFix> fixes) {
  text::write_file(path, format_events(trip, fixes));
}

std::string format_estimates(std::span<const LaneEstimate> estimates) {
  std::string out(kEstimatesHeader);
  out += "\n";
  for (const auto& e : estimates) {
    out += "L\t" + format_double(e.t) + "\t" + std::to_string(e.lane) + "\t" + join(e.belief.probs(), '\t') +
           "\tsrc=" + std::string(source_name(e.source)) + "\n";
  }
  return out;
}

std::vector<LaneEstimate> parse_estimates_text(std::string_view text) {
  std::vector<LaneEstimate> out;
  for_each_line(text, kEstimatesHeader, [&](const std::vector<std::string_view>& f, std::size_t line_no) {
    if (f[0] != "L") throw ParseError(line_no, "unknown record type '" + std::string(f[0]) + "'");
    if (f.size() < 4) throw ParseError(line_no, "record 'L' expects a time, a lane and probabilities");
    LaneEstimate e;
    e.t = text::parse_double(f[1], line_no);
    e.lane = static_cast<int>(text::parse_int(f[2], line_no));
    std::vector<double> p;
    for (std::size_t i = 3; i < f.size(); ++i) {
      if (f[i].starts_with("src=")) {
        if (i + 1 != f.size()) throw ParseError(line_no, "src= must be the last field");
        e.source = parse_source(f[i].substr(4), line_no);
      } else {
        p.push_back(text::parse_double(f[i], line_no));
      }
    }
    if (p.empty()) throw ParseError(line_no, "record 'L' has no probabilities");
    if (e.lane < 1 || e.lane > static_cast<int>(p.size())) throw ParseError(line_no, "lane out of range");
    e.belief = parse_belief(p, line_no);
    out.push_back(std::move(e));
  });
  return out;
}

std::vector<LaneEstimate> load_estimates(const std::string& path) {
  try {
    return parse_estimates_text(text::read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.detail(), path);
  }
}

void save_estimates(std::span<const LaneEstimate> estimates, const std::string& path) {
  text::write_file(path, format_estimates(estimates));
}

}  // namespace lanequest
