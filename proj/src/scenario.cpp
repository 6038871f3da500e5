// Scenario directive format and validation.

#include <algorithm>
#include <cmath>
#include <set>

#include "lanequest/simulator.hpp"
#include "lanequest/text.hpp"

namespace lanequest {

namespace {

constexpr std::string_view kHeader = "#lanequest-scenario v1";

// Longitudinal extent of one ramp transition (two 4 deg arcs of 800 m plus
// a 40 m link); a taken exit needs two of these before its merge.
constexpr double kRampTransitionM = 151.6;

Side parse_side(std::string_view f, std::size_t line) {
  if (f == "left") return Side::Left;
  if (f == "right") return Side::Right;
  throw ParseError(line, "expected 'left' or 'right', got '" + std::string(f) + "'");
}

std::string side_name(Side s) { return s == Side::Left ? "left" : "right"; }

std::string num(double v) { return text::format_double(v); }

void need(const std::vector<std::string_view>& f, std::size_t lo, std::size_t hi, std::size_t line) {
  if (f.size() < lo + 1 || f.size() > hi + 1)
    throw ParseError(line, "directive '" + std::string(f[0]) + "' has the wrong number of arguments");
}

// Optional trailing `lanes N` on turns.
int lanes_clause(const std::vector<std::string_view>& f, std::size_t at, std::size_t line) {
  if (f.size() == at) return 0;
  if (f.size() != at + 2 || f[at] != "lanes") throw ParseError(line, "expected 'lanes <count>'");
  const long long n = text::parse_int(f[at + 1], line);
  if (n < 1) throw ParseError(line, "lane count must be >= 1");
  return static_cast<int>(n);
}

Piece& last_feature_piece(Scenario& s, std::size_t line, bool straight_only) {
  if (s.pieces.empty()) throw ParseError(line, "feature directive before any road piece");
  Piece& p = s.pieces.back();
  const bool ok = p.kind == PieceKind::Straight || (!straight_only && p.kind == PieceKind::Tunnel);
  if (!ok) throw ParseError(line, straight_only ? "feature must follow a straight piece"
                                                : "feature must follow a straight or tunnel piece");
  return p;
}

}  // namespace

Scenario parse_scenario_text(std::string_view body) {
  Scenario s;
  std::size_t line_no = 0, pos = 0;
  bool header = false;
  while (pos < body.size()) {
    std::size_t end = body.find('\n', pos);
    if (end == std::string_view::npos) end = body.size();
    std::string_view line = text::chomp(body.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (!header) {
      if (line != kHeader) throw ParseError(line_no, "expected header '" + std::string(kHeader) + "'");
      header = true;
      continue;
    }
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto f = text::split_fields(line);
    if (f.empty()) continue;
    const std::string_view d = f[0];
    const auto dbl = [&](std::size_t i) { return text::parse_double(f[i], line_no); };
    const auto integer = [&](std::size_t i) { return static_cast<int>(text::parse_int(f[i], line_no)); };

    if (d == "seed") {
      need(f, 1, 1, line_no);
      const long long v = text::parse_int(f[1], line_no);
      if (v < 0) throw ParseError(line_no, "seed must be non-negative");
      s.seed = static_cast<std::uint64_t>(v);
    } else if (d == "origin") {
      need(f, 2, 2, line_no);
      s.origin = {dbl(1), dbl(2)};
    } else if (d == "heading") {
      need(f, 1, 1, line_no);
      s.heading_deg = dbl(1);
    } else if (d == "rate") {
      need(f, 1, 1, line_no);
      s.rate_hz = dbl(1);
    } else if (d == "speed") {
      need(f, 1, 2, line_no);
      s.speed = dbl(1);
      if (f.size() > 2) s.speed_jitter = dbl(2);
    } else if (d == "lanes") {
      need(f, 1, 1, line_no);
      s.lanes = integer(1);
    } else if (d == "start_lane") {
      need(f, 1, 1, line_no);
      if (f[1] == "any")
        s.start_lane.reset();
      else
        s.start_lane = integer(1);
    } else if (d == "lane_width") {
      need(f, 1, 1, line_no);
      s.lane_width = dbl(1);
    } else if (d == "noise") {
      if (f.size() < 3 || f.size() % 2 == 0) throw ParseError(line_no, "noise expects key/value pairs");
      for (std::size_t i = 1; i + 1 < f.size(); i += 2) {
        const double v = dbl(i + 1);
        const std::string_view k = f[i];
        if (k == "accel") s.noise.accel = v;
        else if (k == "gyro") s.noise.gyro = v;
        else if (k == "mag") s.noise.mag = v;
        else if (k == "yaw") s.noise.yaw = v;
        else if (k == "gps") s.noise.gps = v;
        else if (k == "gps_bias") s.noise.gps_bias = v;
        else if (k == "gps_tau") s.noise.gps_tau = v;
        else throw ParseError(line_no, "unknown noise key '" + std::string(k) + "'");
      }
    } else if (d == "lanechanges") {
      need(f, 1, 1, line_no);
      s.lane_changes_per_km = dbl(1);
    } else if (d == "lanechange_amplitude") {
      need(f, 2, 2, line_no);
      s.lc_amplitude_min = dbl(1);
      s.lc_amplitude_max = dbl(2);
    } else if (d == "lanechange_period") {
      need(f, 2, 2, line_no);
      s.lc_period_min = dbl(1);
      s.lc_period_max = dbl(2);
    } else if (d == "violation") {
      need(f, 1, 1, line_no);
      s.violation = dbl(1);
    } else if (d == "mount") {
      need(f, 1, 3, line_no);
      if (f[1] == "none") {
        s.mount.reset();
      } else {
        need(f, 3, 3, line_no);
        s.mount = std::array<double, 3>{dbl(1), dbl(2), dbl(3)};
      }
    } else if (d == "straight") {
      need(f, 1, 1, line_no);
      Piece p;
      p.kind = PieceKind::Straight;
      p.length_m = dbl(1);
      s.pieces.push_back(p);
    } else if (d == "curve") {
      need(f, 3, 3, line_no);
      Piece p;
      p.kind = PieceKind::Curve;
      p.direction = parse_side(f[1], line_no);
      p.sweep_deg = dbl(2);
      p.radius_m = dbl(3);
      s.pieces.push_back(p);
    } else if (d == "turn") {
      need(f, 1, 3, line_no);
      Piece p;
      p.kind = PieceKind::Turn;
      p.direction = parse_side(f[1], line_no);
      p.lanes_after = lanes_clause(f, 2, line_no);
      s.pieces.push_back(p);
    } else if (d == "uturn") {
      need(f, 0, 2, line_no);
      Piece p;
      p.kind = PieceKind::UTurn;
      p.direction = Side::Left;
      p.lanes_after = lanes_clause(f, 1, line_no);
      s.pieces.push_back(p);
    } else if (d == "tunnel") {
      if (f.size() < 3) throw ParseError(line_no, "tunnel expects a length and per-lane variances");
      Piece p;
      p.kind = PieceKind::Tunnel;
      p.length_m = dbl(1);
      for (std::size_t i = 2; i < f.size(); ++i) p.tunnel_variance.push_back(dbl(i));
      s.pieces.push_back(p);
    } else if (d == "exit" || d == "merge") {
      need(f, 2, d == "exit" ? 3 : 2, line_no);
      Piece p;
      p.kind = d == "exit" ? PieceKind::Exit : PieceKind::Merge;
      p.direction = parse_side(f[1], line_no);
      p.length_m = dbl(2);
      if (f.size() > 3) p.take_probability = dbl(3);
      s.pieces.push_back(p);
    } else if (d == "lanechange") {
      need(f, 2, 2, line_no);
      PieceFeature pf;
      pf.kind = PieceFeature::Kind::LaneChange;
      pf.direction = parse_side(f[1], line_no);
      pf.offset_m = dbl(2);
      last_feature_piece(s, line_no, true).features.push_back(pf);
    } else if (d == "pothole") {
      need(f, 2, 2, line_no);
      PieceFeature pf;
      pf.kind = PieceFeature::Kind::Pothole;
      pf.lane = integer(1);
      pf.offset_m = dbl(2);
      last_feature_piece(s, line_no, false).features.push_back(pf);
    } else if (d == "bump") {
      need(f, 1, 1, line_no);
      PieceFeature pf;
      pf.kind = PieceFeature::Kind::Bump;
      pf.offset_m = dbl(1);
      last_feature_piece(s, line_no, false).features.push_back(pf);
    } else if (d == "stop") {
      need(f, 2, 3, line_no);
      PieceFeature pf;
      pf.kind = PieceFeature::Kind::Stop;
      pf.offset_m = dbl(1);
      pf.duration_s = dbl(2);
      if (f.size() > 3) {
        if (f[3] != "park") throw ParseError(line_no, "expected 'park'");
        pf.park = true;
      }
      last_feature_piece(s, line_no, true).features.push_back(pf);
    } else {
      throw ParseError(line_no, "unknown directive '" + std::string(d) + "'");
    }
  }
  if (!header) throw ParseError(0, "missing header '" + std::string(kHeader) + "'");
  for (auto& p : s.pieces)
    std::stable_sort(p.features.begin(), p.features.end(),
                     [](const auto& a, const auto& b) { return a.offset_m < b.offset_m; });
  validate(s);
  return s;
}

Scenario parse_scenario(const std::string& path) {
  const std::string body = text::read_file(path);
  try {
    return parse_scenario_text(body);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.detail(), path);
  }
}

std::string format_scenario(const Scenario& s) {
  std::string o(kHeader);
  o += '\n';
  o += "seed " + std::to_string(s.seed) + '\n';
  o += "origin " + num(s.origin.lat) + ' ' + num(s.origin.lon) + '\n';
  o += "heading " + num(s.heading_deg) + '\n';
  o += "rate " + num(s.rate_hz) + '\n';
  o += "speed " + num(s.speed) + ' ' + num(s.speed_jitter) + '\n';
  o += "lanes " + std::to_string(s.lanes) + '\n';
  o += "start_lane " + (s.start_lane ? std::to_string(*s.start_lane) : std::string("any")) + '\n';
  o += "lane_width " + num(s.lane_width) + '\n';
  const auto& n = s.noise;
  o += "noise accel " + num(n.accel) + " gyro " + num(n.gyro) + " mag " + num(n.mag) + " yaw " + num(n.yaw) +
       " gps " + num(n.gps) + " gps_bias " + num(n.gps_bias) + " gps_tau " + num(n.gps_tau) + '\n';
  o += "lanechanges " + num(s.lane_changes_per_km) + '\n';
  o += "lanechange_amplitude " + num(s.lc_amplitude_min) + ' ' + num(s.lc_amplitude_max) + '\n';
  o += "lanechange_period " + num(s.lc_period_min) + ' ' + num(s.lc_period_max) + '\n';
  o += "violation " + num(s.violation) + '\n';
  if (s.mount) o += "mount " + num((*s.mount)[0]) + ' ' + num((*s.mount)[1]) + ' ' + num((*s.mount)[2]) + '\n';
  for (const auto& p : s.pieces) {
    switch (p.kind) {
      case PieceKind::Straight: o += "straight " + num(p.length_m); break;
      case PieceKind::Curve:
        o += "curve " + side_name(p.direction) + ' ' + num(p.sweep_deg) + ' ' + num(p.radius_m);
        break;
      case PieceKind::Turn:
        o += "turn " + side_name(p.direction);
        if (p.lanes_after) o += " lanes " + std::to_string(p.lanes_after);
        break;
      case PieceKind::UTurn:
        o += "uturn";
        if (p.lanes_after) o += " lanes " + std::to_string(p.lanes_after);
        break;
      case PieceKind::Tunnel:
        o += "tunnel " + num(p.length_m);
        for (double v : p.tunnel_variance) o += ' ' + num(v);
        break;
      case PieceKind::Exit:
        o += "exit " + side_name(p.direction) + ' ' + num(p.length_m) + ' ' + num(p.take_probability);
        break;
      case PieceKind::Merge: o += "merge " + side_name(p.direction) + ' ' + num(p.length_m); break;
    }
    o += '\n';
    for (const auto& f : p.features) {
      switch (f.kind) {
        case PieceFeature::Kind::LaneChange:
          o += "lanechange " + side_name(f.direction) + ' ' + num(f.offset_m);
          break;
        case PieceFeature::Kind::Pothole: o += "pothole " + std::to_string(f.lane) + ' ' + num(f.offset_m); break;
        case PieceFeature::Kind::Bump: o += "bump " + num(f.offset_m); break;
        case PieceFeature::Kind::Stop:
          o += "stop " + num(f.offset_m) + ' ' + num(f.duration_s);
          if (f.park) o += " park";
          break;
      }
      o += '\n';
    }
  }
  return o;
}

void validate(const Scenario& s) {
  const auto fail = [](const std::string& m) { throw ScenarioError(m); };
  if (!(s.rate_hz > 0.0)) fail("rate must be positive");
  if (!(s.speed > 0.0)) fail("speed must be positive");
  if (!(s.speed_jitter >= 0.0 && s.speed_jitter < 0.5)) fail("speed jitter must be in [0, 0.5)");
  if (s.lanes < 1) fail("lanes must be >= 1");
  if (s.start_lane && (*s.start_lane < 1 || *s.start_lane > s.lanes)) fail("start lane off the road");
  if (!(s.lane_width > 0.0)) fail("lane width must be positive");
  const auto& n = s.noise;
  for (double v : {n.accel, n.gyro, n.mag, n.yaw, n.gps, n.gps_bias})
    if (!(v >= 0.0)) fail("noise levels must be >= 0");
  if (!(n.gps_tau > 0.0)) fail("gps_tau must be positive");
  if (!(s.lane_changes_per_km >= 0.0)) fail("lane change rate must be >= 0");
  if (!(s.lc_amplitude_min > 0.0 && s.lc_amplitude_max >= s.lc_amplitude_min))
    fail("lane change amplitudes must satisfy 0 < min <= max");
  if (!(s.lc_period_min > 0.0 && s.lc_period_max >= s.lc_period_min && s.lc_period_max <= 6.0))
    fail("lane change periods must satisfy 0 < min <= max <= 6 s");
  if (!(s.violation >= 0.0 && s.violation <= 1.0)) fail("violation probability must be in [0, 1]");
  if (s.pieces.empty()) fail("scenario has no road pieces");
  if (s.pieces.front().kind != PieceKind::Straight || s.pieces.front().length_m < 100.0)
    fail("first piece must be a straight of at least 100 m");

  const double w = s.lane_width;
  int lanes = s.lanes;
  // Lanes the driver policy can put the car in (violations aside).
  std::set<int> possible;
  const auto all_lanes = [&] {
    possible.clear();
    for (int l = 1; l <= lanes; ++l) possible.insert(l);
  };
  if (s.start_lane)
    possible = {*s.start_lane};
  else
    all_lanes();

  std::optional<std::size_t> open_exit;
  double exit_gap = 0.0;
  for (std::size_t i = 0; i < s.pieces.size(); ++i) {
    const Piece& p = s.pieces[i];
    const std::string at = "piece " + std::to_string(i + 1) + ": ";
    switch (p.kind) {
      case PieceKind::Straight:
      case PieceKind::Tunnel:
      case PieceKind::Exit:
      case PieceKind::Merge:
        if (!(p.length_m > 0.0)) fail(at + "length must be positive");
        break;
      default: break;
    }
    if (open_exit && p.kind != PieceKind::Straight && p.kind != PieceKind::Tunnel && p.kind != PieceKind::Merge)
      fail(at + "only straight or tunnel pieces may sit between a taken exit and its merge");

    for (const auto& f : p.features) {
      if (f.offset_m < 0.0 || f.offset_m > p.length_m) fail(at + "feature offset outside the piece");
      if (f.kind == PieceFeature::Kind::Pothole && (f.lane < 1 || f.lane > lanes)) fail(at + "pothole lane off the road");
      if (f.kind == PieceFeature::Kind::Stop && !(f.duration_s > 0.0)) fail(at + "stop duration must be positive");
    }

    switch (p.kind) {
      case PieceKind::Straight: {
        const bool discretionary = s.lane_changes_per_km > 0.0 && lanes > 1;
        for (const auto& f : p.features) {
          if (f.kind != PieceFeature::Kind::LaneChange) continue;
          if (discretionary && f.offset_m >= 60.0) all_lanes();
          std::set<int> next;
          for (int l : possible) {
            const int to = f.direction == Side::Left ? l - 1 : l + 1;
            if (to < 1 || to > lanes)
              fail(at + "scripted " + side_name(f.direction) + " lane change leaves the road from lane " +
                   std::to_string(l));
            next.insert(to);
          }
          possible = next;
        }
        if (discretionary) all_lanes();
        if (std::any_of(p.features.begin(), p.features.end(),
                        [](const auto& f) { return f.kind == PieceFeature::Kind::Stop && f.park; }))
          possible = {lanes};
        if (open_exit) exit_gap += p.length_m;
        break;
      }
      case PieceKind::Curve: {
        if (!(p.sweep_deg > 0.0 && p.sweep_deg <= 90.0)) fail(at + "curve sweep must be in (0, 90] degrees");
        // Lane radii are the centerline radius shifted by lane offsets; the
        // inner lane must keep a positive radius.
        const double inner = p.radius_m - (lanes - 1) * w / 2.0;
        if (!(inner > w)) fail(at + "curve radius too small for the lane count");
        break;
      }
      case PieceKind::Turn:
      case PieceKind::UTurn:
        if (p.lanes_after < 0) fail(at + "lane count must be >= 1");
        if (p.lanes_after > 0) lanes = p.lanes_after;
        if (p.kind == PieceKind::Turn && p.direction == Side::Right)
          possible = {lanes};
        else
          possible = {1};
        break;
      case PieceKind::Tunnel:
        if (static_cast<int>(p.tunnel_variance.size()) != lanes)
          fail(at + "tunnel needs one variance per lane");
        for (double v : p.tunnel_variance)
          if (!(v > 0.0)) fail(at + "tunnel variances must be positive");
        if (open_exit) exit_gap += p.length_m;
        break;
      case PieceKind::Exit:
        if (!(p.take_probability >= 0.0 && p.take_probability <= 1.0)) fail(at + "take probability must be in [0, 1]");
        if (lanes < 2) fail(at + "exit needs a road with at least 2 lanes");
        if (open_exit) fail(at + "exit inside an open exit/merge bypass");
        if (p.take_probability > 0.0) {
          open_exit = i;
          exit_gap = p.length_m / 2.0;
        }
        break;
      case PieceKind::Merge:
        if (lanes < 2) fail(at + "merge needs a road with at least 2 lanes");
        if (open_exit) {
          if (s.pieces[*open_exit].direction != p.direction) fail(at + "merge side differs from its exit");
          exit_gap += p.length_m / 2.0;
          if (exit_gap < 2.0 * kRampTransitionM + 20.0) fail(at + "exit and merge markers too close for a ramp");
          open_exit.reset();
          all_lanes();
        }
        break;
    }
  }
  if (open_exit) fail("taken exit is never closed by a merge");
}

}  // namespace lanequest
