// Drive simulator: a scenario becomes a chain of line and arc primitives in
// a local east/north frame; each trip plans its lane changes up front and
// then integrates car kinematics at the sample rate.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>

#include "lanequest/simulator.hpp"
#include "lanequest/text.hpp"

namespace lanequest {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kGravity = 9.81;
constexpr double kFieldH = 32.0;  // uT, horizontal
constexpr double kFieldZ = 30.0;  // uT, downward
constexpr double kTurnRadius = 10.0;
constexpr double kTurnSpeed = 6.0;
constexpr double kUTurnRadius = 6.0;
constexpr double kUTurnSpeed = 4.0;
constexpr double kRampRadius = 800.0;
constexpr double kRampSweepDeg = 4.0;
constexpr double kRampLink = 40.0;
constexpr double kStubLength = 100.0;
constexpr double kWheelbase = 2.7;
constexpr double kBrake = 2.0;
constexpr double kAccelMax = 2.5;
constexpr double kLatAccelMax = 3.0;
constexpr double kStartHoldS = 5.0;
constexpr double kPieceMargin = 60.0;
constexpr double kCheckpointLead = 40.0;
constexpr double kImpulseTau = 0.08;
constexpr double kImpulseHz = 10.0;
constexpr double kPotholeAmp = 6.0;
constexpr double kBumpAmp = 5.0;
constexpr double kFixAccuracy = 5.0;

Point2 fwd(double h) { return {std::sin(h), std::cos(h)}; }
Point2 left_of(double h) { return {-std::cos(h), std::sin(h)}; }
Point2 add(Point2 a, Point2 b, double k = 1.0) { return {a.x + k * b.x, a.y + k * b.y}; }

int side_sign(Side s) { return s == Side::Right ? 1 : -1; }

double lane_offset(int lane, int n, double w) { return ((n + 1) / 2.0 - lane) * w; }

int side_lane(Side s, int n) { return s == Side::Right ? n : 1; }

int lane_from_offset(double c, int n, double w) {
  return std::clamp(static_cast<int>(std::lround((n + 1) / 2.0 - c / w)), 1, n);
}

enum class Role { Road, Junction, Ramp };

struct Prim {
  Point2 start;
  double heading{};  // compass, radians
  double length{};   // centerline
  double radius{};
  int turn{0};  // 0 line, +1 right, -1 left
  Role role{Role::Road};
  std::string segment;
  int lanes{1};
  std::optional<std::size_t> piece;
  int half{0};  // exit/merge pieces are split at the marker
  bool lc_ok{false};
  double shift{};     // junction: new centerline offset, left positive
  int lanes_after{};  // junction
  double speed_cap{kInf};
};

struct Pose {
  Point2 p;
  double heading{};
};

Pose centerline(const Prim& m, double s) {
  if (m.turn == 0) return {add(m.start, fwd(m.heading), s), m.heading};
  const Point2 right{std::cos(m.heading), -std::sin(m.heading)};
  const Point2 center = add(m.start, right, m.turn * m.radius);
  const double h = m.heading + m.turn * s / m.radius;
  return {add(center, Point2{std::cos(h), -std::sin(h)}, -m.turn * m.radius), h};
}

Point2 position(const Prim& m, double s, double c) {
  const Pose q = centerline(m, s);
  return add(q.p, left_of(q.heading), c);
}

double path_radius(const Prim& m, double c) { return m.radius + m.turn * c; }

struct LocalSegment {
  std::string id;
  std::vector<Point2> points;
  int lanes{1};
  std::vector<std::pair<SpecialLane, std::size_t>> markers;  // vertex index
};

struct Network {
  std::vector<Prim> main;
  std::map<std::size_t, std::vector<Prim>> ramps;  // by exit piece
  std::map<std::size_t, std::size_t> merge_of;     // exit piece -> merge piece
  std::vector<LocalSegment> segments;
};

void sample_into(const Prim& m, std::vector<Point2>& pts) {
  const int k = m.turn == 0 ? 1 : std::max(1, static_cast<int>(std::ceil(m.length / 2.0)));
  for (int i = 1; i <= k; ++i) pts.push_back(centerline(m, m.length * i / k).p);
}

// Builds the ramp primitive chain from `start` (side-lane path at a marker).
std::vector<Prim> chain(Pose start, const std::vector<std::pair<int, double>>& parts, const std::string& seg) {
  std::vector<Prim> out;
  Pose p = start;
  const double sweep = deg2rad(kRampSweepDeg);
  for (const auto& [turn, len] : parts) {
    Prim m;
    m.start = p.p;
    m.heading = p.heading;
    m.turn = turn;
    m.role = Role::Ramp;
    m.segment = seg;
    m.lanes = 1;
    if (turn == 0) {
      m.length = len;
    } else {
      m.radius = kRampRadius;
      m.length = kRampRadius * sweep;
    }
    p = centerline(m, m.length);
    out.push_back(m);
  }
  return out;
}

double ramp_long() {
  const double th = deg2rad(kRampSweepDeg);
  return 2.0 * kRampRadius * std::sin(th) + kRampLink * std::cos(th);
}

double ramp_lat() {
  const double th = deg2rad(kRampSweepDeg);
  return 2.0 * kRampRadius * (1.0 - std::cos(th)) + kRampLink * std::sin(th);
}

std::string numbered(const char* prefix, int k) {
  std::string n = std::to_string(k);
  if (n.size() < 2) n.insert(0, "0");
  return prefix + n;
}

Network build_network(const Scenario& s) {
  Network net;
  const double w = s.lane_width;
  Pose p{{0.0, 0.0}, deg2rad(s.heading_deg)};
  int n = s.lanes;
  int road_no = 1, ramp_no = 1, stub_no = 1;
  const auto open_segment = [&] {
    net.segments.push_back({numbered("road-", road_no++), {p.p}, n, {}});
  };
  open_segment();

  const auto push = [&](Prim m) {
    m.start = p.p;
    m.heading = p.heading;
    m.segment = net.segments.back().id;
    m.lanes = n;
    if (m.role == Role::Road) sample_into(m, net.segments.back().points);
    p = centerline(m, m.length);
    net.main.push_back(m);
  };

  for (std::size_t i = 0; i < s.pieces.size(); ++i) {
    const Piece& pc = s.pieces[i];
    Prim m;
    m.piece = i;
    switch (pc.kind) {
      case PieceKind::Straight:
        m.length = pc.length_m;
        m.lc_ok = true;
        push(m);
        break;
      case PieceKind::Tunnel:
        m.length = pc.length_m;
        push(m);
        break;
      case PieceKind::Curve:
        m.turn = side_sign(pc.direction);
        m.radius = pc.radius_m;
        m.length = pc.radius_m * deg2rad(pc.sweep_deg);
        m.speed_cap = std::sqrt(kLatAccelMax * (pc.radius_m - (n - 1) * w / 2.0));
        push(m);
        break;
      case PieceKind::Turn:
      case PieceKind::UTurn: {
        const bool uturn = pc.kind == PieceKind::UTurn;
        const double edge = uturn ? kUTurnRadius : kTurnRadius;
        m.role = Role::Junction;
        m.turn = uturn ? -1 : side_sign(pc.direction);
        m.radius = edge + (n - 1) * w / 2.0;
        m.length = m.radius * (uturn ? std::numbers::pi : std::numbers::pi / 2.0);
        m.speed_cap = uturn ? kUTurnSpeed : kTurnSpeed;
        const int after = pc.lanes_after > 0 ? pc.lanes_after : n;
        // Right turns keep right edges aligned, left turns and u-turns left edges.
        m.shift = m.turn > 0 ? (after - n) * w / 2.0 : (n - after) * w / 2.0;
        m.lanes_after = after;
        push(m);
        p.p = add(p.p, left_of(p.heading), net.main.back().shift);
        n = after;
        open_segment();
        break;
      }
      case PieceKind::Exit:
      case PieceKind::Merge: {
        m.length = pc.length_m / 2.0;
        push(m);
        auto& seg = net.segments.back();
        SpecialLane sl;
        sl.kind = pc.kind == PieceKind::Exit ? SpecialLaneKind::Exit : SpecialLaneKind::Merge;
        sl.side = pc.direction;
        seg.markers.push_back({sl, seg.points.size() - 1});
        m.half = 1;
        push(m);
        break;
      }
    }
  }

  // Ramps and stubs hang off the side-lane path at each marker.
  for (std::size_t k = 0; k < net.main.size(); ++k) {
    const Prim& m = net.main[k];
    if (!m.piece || m.half != 0) continue;
    const Piece& pc = s.pieces[*m.piece];
    if (pc.kind != PieceKind::Exit && pc.kind != PieceKind::Merge) continue;
    const Pose mk = centerline(m, m.length);
    const int ss = side_sign(pc.direction);
    const double c_side = lane_offset(side_lane(pc.direction, m.lanes), m.lanes, s.lane_width);
    const Pose at_marker{add(mk.p, left_of(mk.heading), c_side), mk.heading};

    if (pc.kind == PieceKind::Exit && pc.take_probability > 0.0) {
      std::size_t j = k + 1;
      double gap = 0.0;
      for (; j < net.main.size(); ++j) {
        gap += net.main[j].length;
        const Prim& q = net.main[j];
        if (q.piece && s.pieces[*q.piece].kind == PieceKind::Merge && q.half == 0) break;
      }
      const double parallel = gap - 2.0 * ramp_long();
      const std::string id = numbered("ramp-", ramp_no++);
      auto prims = chain(at_marker, {{ss, 0}, {0, kRampLink}, {-ss, 0}, {0, parallel}, {-ss, 0}, {0, kRampLink}, {ss, 0}},
                         id);
      LocalSegment seg{id, {at_marker.p}, 1, {}};
      for (const auto& r : prims) sample_into(r, seg.points);
      net.segments.push_back(seg);
      net.ramps[*m.piece] = std::move(prims);
      net.merge_of[*m.piece] = *net.main[j].piece;
      continue;
    }
    bool bypass_merge = false;
    for (const auto& [e, mg] : net.merge_of)
      if (mg == *m.piece) bypass_merge = true;
    if (bypass_merge) continue;

    const std::string id = numbered("stub-", stub_no++);
    std::vector<Prim> prims;
    if (pc.kind == PieceKind::Exit) {
      prims = chain(at_marker, {{ss, 0}, {0, kRampLink}, {-ss, 0}, {0, kStubLength}}, id);
    } else {
      Pose st{add(add(at_marker.p, fwd(mk.heading), -(ramp_long() + kStubLength)), left_of(mk.heading), -ss * ramp_lat()),
              mk.heading};
      prims = chain(st, {{0, kStubLength}, {-ss, 0}, {0, kRampLink}, {ss, 0}}, id);
    }
    LocalSegment seg{id, {prims.front().start}, 1, {}};
    for (const auto& r : prims) sample_into(r, seg.points);
    net.segments.push_back(seg);
  }
  return net;
}

// ---------------------------------------------------------------- planning

struct LcAction {
  double s{};  // centerline offset on the prim
  Side dir{Side::Left};
  double period{};
  double amp{};
};

struct Leg {
  const Prim* prim{};
  std::vector<LcAction> actions;
};

std::vector<const Prim*> trip_route(const Network& net, const std::map<std::size_t, bool>& take) {
  std::vector<const Prim*> route;
  for (std::size_t k = 0; k < net.main.size(); ++k) {
    const Prim& m = net.main[k];
    route.push_back(&m);
    if (!m.piece || m.half != 0) continue;
    const auto t = take.find(*m.piece);
    if (t == take.end() || !t->second) continue;
    for (const auto& r : net.ramps.at(*m.piece)) route.push_back(&r);
    const std::size_t merge = net.merge_of.at(*m.piece);
    while (k + 1 < net.main.size() && !(net.main[k + 1].piece == merge && net.main[k + 1].half == 1)) ++k;
  }
  return route;
}

// Lane after moving from prim `a` onto prim `b`.
int carry_lane(int lane, const Prim& a, const Prim& b, const Scenario& s, const std::optional<Side>& ramp_side) {
  const double w = s.lane_width;
  if (a.role == Role::Junction) return lane_from_offset(lane_offset(lane, a.lanes, w) - a.shift, a.lanes_after, w);
  if (b.role == Role::Ramp && a.role != Role::Ramp) return 1;
  if (a.role == Role::Ramp && b.role != Role::Ramp) return side_lane(ramp_side.value_or(Side::Right), b.lanes);
  return std::clamp(lane, 1, b.lanes);
}

struct Requirement {
  double pos{};
  bool exact{true};  // exact lane, otherwise avoid `lane`
  int lane{1};
  bool mandatory{false};
  double lead{kCheckpointLead};  // the change must finish this far before pos
};

struct Plan {
  std::vector<Leg> legs;
  std::map<std::size_t, bool> take;
  double cruise{};
  int start_lane{1};
  std::vector<std::optional<Side>> ramp_side;  // per leg
};

Plan make_plan(const Scenario& s, const Network& net, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Plan plan;
  plan.cruise = s.speed * (1.0 + s.speed_jitter * (2.0 * U(rng) - 1.0));
  plan.start_lane = s.start_lane ? *s.start_lane
                                 : 1 + static_cast<int>(std::floor(U(rng) * s.lanes * (1.0 - 1e-12)));
  for (const auto& [piece, ramp] : net.ramps) plan.take[piece] = U(rng) < s.pieces[piece].take_probability;

  const double gap = std::max(120.0, 10.0 * plan.cruise);
  const double lc_len = s.lc_period_max * plan.cruise;
  const std::uint64_t plan_seed = rng();

  for (int attempt = 0; attempt < 64; ++attempt) {
    std::mt19937_64 prng(plan_seed);
    const auto route = trip_route(net, plan.take);
    plan.legs.assign(route.size(), {});
    plan.ramp_side.assign(route.size(), std::nullopt);
    std::optional<Side> cur_ramp;
    for (std::size_t i = 0; i < route.size(); ++i) {
      plan.legs[i].prim = route[i];
      if (route[i]->role == Role::Ramp) {
        if (i > 0 && route[i - 1]->role != Role::Ramp) cur_ramp = s.pieces[*route[i - 1]->piece].direction;
        plan.ramp_side[i] = cur_ramp;
      }
    }
    const auto draw_lc = [&](double pos, Side dir) {
      std::uniform_real_distribution<double> A(s.lc_amplitude_min, s.lc_amplitude_max);
      std::uniform_real_distribution<double> T(s.lc_period_min, s.lc_period_max);
      const double amp = A(prng);
      const double per = T(prng);
      return LcAction{pos, dir, per, amp};
    };

    int lane = plan.start_lane;
    std::optional<std::size_t> failed_exit;
    for (std::size_t i = 0; i < route.size() && !failed_exit; ++i) {
      const Prim& m = *route[i];
      if (i > 0) lane = carry_lane(lane, *route[i - 1], m, s, plan.ramp_side[i - 1]);
      // Taken exit: the car must reach the side lane by the marker.
      if (m.piece && m.half == 0 && i + 1 < route.size() && route[i + 1]->role == Role::Ramp &&
          lane != side_lane(s.pieces[*m.piece].direction, m.lanes))
        failed_exit = *m.piece;
      if (!m.lc_ok) continue;
      const int n = m.lanes;
      const Piece& pc = s.pieces[*m.piece];

      std::vector<Requirement> reqs;
      for (const auto& f : pc.features)
        if (f.kind == PieceFeature::Kind::Stop && f.park) reqs.push_back({f.offset_m, true, n, false});
      for (std::size_t j = i + 1; j < route.size() && !route[j]->lc_ok; ++j) {
        const Prim& q = *route[j];
        if (q.role == Role::Junction) {
          // Finish before braking for the junction starts.
          const double v = std::min(plan.cruise, m.speed_cap);
          const double brake = std::max(0.0, (v * v - q.speed_cap * q.speed_cap) / (2.0 * kBrake));
          reqs.push_back({m.length, true, q.turn > 0 ? n : 1, false, kCheckpointLead + brake});
          break;
        }
        if (q.role == Role::Ramp) break;
        if (q.piece && q.half == 0) {
          const Piece& qp = s.pieces[*q.piece];
          if (qp.kind != PieceKind::Exit && qp.kind != PieceKind::Merge) continue;
          const int sl = side_lane(qp.direction, n);
          const bool taking = j + 1 < route.size() && route[j + 1]->role == Role::Ramp;
          if (taking)
            reqs.push_back({m.length, true, sl, true});
          else
            reqs.push_back({m.length, false, sl, false});
          break;
        }
      }
      reqs.push_back({m.length, false, 0, false});  // sentinel: no constraint at the end

      std::vector<LcAction> scripted;
      for (const auto& f : pc.features)
        if (f.kind == PieceFeature::Kind::LaneChange) scripted.push_back(draw_lc(f.offset_m, f.direction));

      auto& out = plan.legs[i].actions;
      double a = 0.0, last = -kInf;
      std::size_t si = 0;
      for (const auto& rq : reqs) {
        if (rq.pos < a) continue;
        const bool skip = !rq.mandatory && U(prng) < s.violation;
        const auto need = [&](int l) {
          if (skip || rq.lane == 0) return 0;
          if (rq.exact) return std::abs(l - rq.lane);
          return l == rq.lane ? 1 : 0;
        };
        const double latest = rq.pos - rq.lead - lc_len;

        struct Cand {
          double pos;
          bool scripted;
          LcAction lc;
        };
        std::vector<Cand> events;
        for (; si < scripted.size() && scripted[si].s <= rq.pos; ++si) events.push_back({scripted[si].s, true, scripted[si]});
        if (s.lane_changes_per_km > 0.0 && n > 1) {
          std::exponential_distribution<double> E(s.lane_changes_per_km / 1000.0);
          const double lo = std::max(a, kPieceMargin);
          const double hi = std::min(rq.pos, m.length - kPieceMargin - lc_len);
          for (double x = lo + E(prng); x < hi; x += E(prng)) events.push_back({x, false, {}});
        }
        std::stable_sort(events.begin(), events.end(), [](const Cand& x, const Cand& y) { return x.pos < y.pos; });

        for (const auto& e : events) {
          if (e.scripted) {
            const int to = lane + (e.lc.dir == Side::Right ? 1 : -1);
            if (to < 1 || to > n) continue;
            out.push_back(e.lc);
            lane = to;
            last = e.pos;
            continue;
          }
          if (e.pos - last < gap) continue;
          std::vector<int> dirs;
          if (lane > 1) dirs.push_back(-1);
          if (lane < n) dirs.push_back(1);
          if (dirs.empty()) continue;
          const int d = dirs[static_cast<std::size_t>(U(prng) * dirs.size()) % dirs.size()];
          const int k = need(lane + d);
          const double room = k > 0 ? latest - (k - 1) * gap - gap : rq.pos - rq.lead - lc_len;
          if (e.pos > room) continue;
          out.push_back(draw_lc(e.pos, d < 0 ? Side::Left : Side::Right));
          lane += d;
          last = e.pos;
        }

        int k = need(lane);
        double x = std::max({last + gap, latest - (k - 1) * gap, a + 10.0});
        for (; k > 0 && x <= rq.pos - 10.0; --k, x += gap) {
          Side dir;
          if (rq.exact)
            dir = rq.lane > lane ? Side::Right : Side::Left;
          else
            dir = lane == n ? Side::Left : Side::Right;
          out.push_back(draw_lc(x, dir));
          lane += dir == Side::Right ? 1 : -1;
          last = x;
        }
        a = rq.pos;
      }
    }
    if (!failed_exit) return plan;
    plan.take[*failed_exit] = false;
  }
  throw ScenarioError("could not plan a feasible trip");
}

// ---------------------------------------------------------------- sensors

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 mount_matrix(const std::array<double, 3>& rpy) {
  const double a = deg2rad(rpy[0]), b = deg2rad(rpy[1]), g = deg2rad(rpy[2]);
  const Mat3 rx{{{1, 0, 0}, {0, std::cos(a), -std::sin(a)}, {0, std::sin(a), std::cos(a)}}};
  const Mat3 ry{{{std::cos(b), 0, std::sin(b)}, {0, 1, 0}, {-std::sin(b), 0, std::cos(b)}}};
  const Mat3 rz{{{std::cos(g), -std::sin(g), 0}, {std::sin(g), std::cos(g), 0}, {0, 0, 1}}};
  const auto mul = [](const Mat3& x, const Mat3& y) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) r[i][j] += x[i][k] * y[k][j];
    return r;
  };
  return mul(rz, mul(ry, rx));
}

Vec3 rotate(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z, m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
          m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

struct Impulse {
  double t0;
  double amp;
};

struct Zone {
  double begin;
  double end;
  double vmax;
  bool stop{false};
  double hold{};
  bool park{false};
  bool done{false};
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::string kind_of_junction(const Prim& m, const Scenario& s) {
  const Piece& pc = s.pieces[*m.piece];
  if (pc.kind == PieceKind::UTurn) return "UTurn";
  return pc.direction == Side::Right ? "TurnRight" : "TurnLeft";
}

}  // namespace

RoadMap build_map(const Scenario& s) {
  validate(s);
  const Network net = build_network(s);
  const LocalFrame frame(s.origin);
  std::vector<RoadSegment> segs;
  for (const auto& ls : net.segments) {
    RoadSegment rs;
    rs.id = ls.id;
    rs.lane_count = ls.lanes;
    for (const auto& p : ls.points) rs.polyline.push_back(frame.to_latlon(p));
    for (const auto& [sl, vertex] : ls.markers) {
      SpecialLane x = sl;
      std::vector<LatLon> prefix(rs.polyline.begin(), rs.polyline.begin() + static_cast<std::ptrdiff_t>(vertex + 1));
      x.position_m = polyline_length_m(prefix);
      rs.special_lanes.push_back(x);
    }
    segs.push_back(std::move(rs));
  }
  return RoadMap(std::move(segs));
}

std::uint64_t trip_seed(std::uint64_t fleet_seed, std::size_t trip) {
  return splitmix64(fleet_seed ^ splitmix64(static_cast<std::uint64_t>(trip) + 1));
}

SimTrip simulate(const Scenario& s) { return simulate(s, s.seed); }

SimTrip simulate(const Scenario& s, std::uint64_t seed) {
  validate(s);
  const Network net = build_network(s);
  const LocalFrame frame(s.origin);
  std::mt19937_64 plan_rng(seed);
  std::mt19937_64 rng(splitmix64(seed));
  const Plan plan = make_plan(s, net, plan_rng);
  const double w = s.lane_width;
  const auto& legs = plan.legs;

  std::normal_distribution<double> N(0.0, 1.0);
  const auto& nm = s.noise;
  const std::optional<Mat3> mount = s.mount ? std::optional<Mat3>(mount_matrix(*s.mount)) : std::nullopt;
  const double mount_yaw = s.mount ? (*s.mount)[2] : 0.0;

  // Speed zones along the route (centerline distance).
  std::vector<double> cum(legs.size() + 1, 0.0);
  for (std::size_t i = 0; i < legs.size(); ++i) cum[i + 1] = cum[i] + legs[i].prim->length;
  std::vector<Zone> zones;
  for (std::size_t i = 0; i < legs.size(); ++i) {
    const Prim& m = *legs[i].prim;
    if (m.speed_cap < kInf) zones.push_back({cum[i], cum[i + 1], m.speed_cap});
    if (m.piece && m.role == Role::Road)
      for (const auto& f : s.pieces[*m.piece].features)
        if (f.kind == PieceFeature::Kind::Stop)
          zones.push_back({cum[i] + f.offset_m, cum[i] + f.offset_m, 0.0, true, f.duration_s, f.park});
  }
  std::sort(zones.begin(), zones.end(), [](const Zone& a, const Zone& b) { return a.begin < b.begin; });

  SimTrip trip;
  auto& tr = trip.trace;
  auto& truth = trip.truth;
  const double dt = 1.0 / s.rate_hz;
  const long fix_every = std::max(1L, std::lround(s.rate_hz));

  std::size_t ri = 0;
  double sl = 0.0;  // centerline offset on the current prim
  double v = 0.0;
  int lane = plan.start_lane;
  double c = lane_offset(lane, legs[0].prim->lanes, w);
  std::size_t next_action = 0;

  struct ActiveLc {
    LcAction lc;
    double t0;
    double v_ref;
    double c_from;
    double c_to;
    int to;
    bool switched{false};
  };
  std::optional<ActiveLc> active;
  double dpsi = 0.0;  // lane-change heading deviation, compass radians

  std::optional<double> hold_until;
  std::size_t hold_zone = 0;
  double hold_begin = 0.0;
  std::vector<Impulse> impulses;
  double prim_enter_t = 0.0;
  int prim_enter_lane = lane;
  double prim_enter_c = c;
  Point2 gm_bias{nm.gps_bias * N(rng), nm.gps_bias * N(rng)};
  std::string last_fix_segment;

  truth.labels.push_back({0.0, lane});

  const auto true_pos = [&] { return position(*legs[ri].prim, sl, c); };
  const auto add_ledger = [&](double t, double tb, double te, std::string kind, Point2 where, int ln, double value,
                              bool taken) {
    LedgerEntry e;
    e.t = t;
    e.t_begin = tb;
    e.t_end = te;
    e.kind = std::move(kind);
    e.location = frame.to_latlon(where);
    e.lane = ln;
    e.segment = legs[ri].prim->segment;
    e.value = value;
    e.taken = taken;
    truth.ledger.push_back(std::move(e));
  };

  const std::size_t max_steps = static_cast<std::size_t>(s.rate_hz * 6.0 * 3600.0);
  for (std::size_t k = 0; k < max_steps && ri < legs.size(); ++k) {
    const double t = static_cast<double>(k) * dt;
    const Prim& m = *legs[ri].prim;
    const double scum = cum[ri] + sl;

    // Longitudinal control.
    double a = 0.0;
    if (t < kStartHoldS || hold_until) {
      a = 0.0;
      v = 0.0;
      if (hold_until && t >= *hold_until) {
        const Zone& z = zones[hold_zone];
        add_ledger(0.5 * (hold_begin + t), hold_begin, t, "Stop", true_pos(), lane, z.hold, true);
        hold_until.reset();
      }
    } else {
      double target = plan.cruise;
      bool stopping = false;
      for (std::size_t zi = 0; zi < zones.size(); ++zi) {
        Zone& z = zones[zi];
        if (z.done || z.end < scum) continue;
        if (z.begin > scum + 400.0) break;
        if (z.stop) {
          const double d = z.begin - scum;
          if (d <= 0.05 || (v < 0.05 && d < 1.0)) {
            z.done = true;
            v = 0.0;
            hold_until = t + z.hold;
            hold_zone = zi;
            hold_begin = t;
            stopping = true;
            break;
          }
          if (v * v / (2.0 * kBrake) + 1.0 >= d) {
            a = -std::min(6.0, v * v / (2.0 * d));
            stopping = true;
          }
          target = std::min(target, std::sqrt(2.0 * kBrake * d));
        } else if (scum < z.begin) {
          target = std::min(target, std::sqrt(z.vmax * z.vmax + 2.0 * kBrake * std::max(0.0, z.begin - scum - 2.0)));
        } else {
          target = std::min(target, z.vmax);
        }
      }
      if (hold_until) {
        a = 0.0;
      } else if (!stopping) {
        a = std::clamp((target - v) / 0.5, -4.0, kAccelMax);
      }
      if (!hold_until) v = std::max(0.0, v + a * dt);
    }

    // Lane change in progress.
    double ax_lc = 0.0, w_lc = 0.0;
    if (active) {
      const double tau = t - active->t0;
      const double T = active->lc.period;
      if (tau >= T) {
        c = active->c_to;
        dpsi = 0.0;
        add_ledger(active->t0 + T / 2.0, active->t0, active->t0 + T,
                   active->lc.dir == Side::Left ? "LeftChange" : "RightChange", true_pos(), lane, 0.0, true);
        active.reset();
      } else {
        const double sg = active->lc.dir == Side::Left ? 1.0 : -1.0;
        ax_lc = -sg * active->lc.amp * std::sin(2.0 * std::numbers::pi * tau / T);
        w_lc = -ax_lc / active->v_ref;
        dpsi += -w_lc * dt;
        c = active->c_from + (active->c_to - active->c_from) * 0.5 * (1.0 - std::cos(std::numbers::pi * tau / T));
        if (!active->switched && tau >= T / 2.0) {
          active->switched = true;
          lane = active->to;
          truth.labels.push_back({t, lane});
        }
      }
    }
    if (!active && !hold_until && next_action < legs[ri].actions.size() && sl >= legs[ri].actions[next_action].s) {
      const LcAction& lc = legs[ri].actions[next_action++];
      const int to = lane + (lc.dir == Side::Right ? 1 : -1);
      if (to >= 1 && to <= m.lanes)
        active = ActiveLc{lc, t, std::max(v, 3.0), c, lane_offset(to, m.lanes, w), to};
    }

    // Kinematics in the car frame.
    const Pose cp = centerline(m, sl);
    const double psi = cp.heading + dpsi;
    double omega = w_lc;
    if (m.turn != 0) omega += -m.turn * v / path_radius(m, c);
    Vec3 acc{v * (omega - w_lc) + ax_lc, a, kGravity};
    for (auto it = impulses.begin(); it != impulses.end();) {
      const double d = t - it->t0;
      if (d > 0.6) {
        it = impulses.erase(it);
        continue;
      }
      if (d >= 0.0) acc.z += it->amp * std::exp(-d / kImpulseTau) * std::sin(2.0 * std::numbers::pi * kImpulseHz * d);
      ++it;
    }
    Vec3 gyr{0.0, 0.0, omega};
    Vec3 mag{kFieldH * std::sin(psi), kFieldH * std::cos(psi), -kFieldZ};
    if (m.piece && s.pieces[*m.piece].kind == PieceKind::Tunnel && m.role == Role::Road) {
      const auto& var = s.pieces[*m.piece].tunnel_variance;
      mag.x += std::sqrt(var[static_cast<std::size_t>(lane - 1)]) * N(rng);
    }
    acc = {acc.x + nm.accel * N(rng), acc.y + nm.accel * N(rng), acc.z + nm.accel * N(rng)};
    gyr = {gyr.x + nm.gyro * N(rng), gyr.y + nm.gyro * N(rng), gyr.z + nm.gyro * N(rng)};
    mag = {mag.x + nm.mag * N(rng), mag.y + nm.mag * N(rng), mag.z + nm.mag * N(rng)};
    double yaw = rad2deg(psi) + nm.yaw * N(rng);
    if (mount) {
      acc = rotate(*mount, acc);
      gyr = rotate(*mount, gyr);
      mag = rotate(*mount, mag);
      yaw -= mount_yaw;
    }
    tr.samples.push_back({t, acc, gyr, mag, wrap_degrees_360(yaw)});

    // GPS.
    if (static_cast<long>(k) % fix_every == 0) {
      const double step = static_cast<double>(fix_every) * dt;
      const double phi = std::exp(-step / nm.gps_tau);
      const double q = nm.gps_bias * std::sqrt(1.0 - phi * phi);
      gm_bias = {gm_bias.x * phi + q * N(rng), gm_bias.y * phi + q * N(rng)};
      const Point2 p = true_pos();
      const Point2 noisy{p.x + gm_bias.x + nm.gps * N(rng), p.y + gm_bias.y + nm.gps * N(rng)};
      tr.fixes.push_back({t, frame.to_latlon(noisy), kFixAccuracy, m.segment});
      if (!last_fix_segment.empty() && m.segment != last_fix_segment &&
          (truth.labels.empty() || truth.labels.back().t < t || truth.labels.back().lane != lane))
        truth.labels.push_back({t, lane});
      last_fix_segment = m.segment;
    }

    // Advance along the route.
    const double ds = v * dt;
    const double prev_sl = sl;
    sl += m.turn != 0 ? ds * m.radius / path_radius(m, c) : ds;

    if (m.piece && m.role == Role::Road) {
      for (const auto& f : s.pieces[*m.piece].features) {
        if (f.kind != PieceFeature::Kind::Pothole && f.kind != PieceFeature::Kind::Bump) continue;
        if (!(prev_sl < f.offset_m && f.offset_m <= sl)) continue;
        const bool pothole = f.kind == PieceFeature::Kind::Pothole;
        if (pothole && f.lane != lane) continue;
        const double amp = pothole ? -kPotholeAmp : kBumpAmp;
        impulses.push_back({t + dt, amp});
        impulses.push_back({t + dt + kWheelbase / std::max(v, 0.5), amp});
        add_ledger(t + dt, t + dt, t + dt, pothole ? "Pothole" : "Bump", position(m, f.offset_m, c), lane, 0.0, true);
      }
    }

    while (ri < legs.size() && sl >= legs[ri].prim->length) {
      const Prim& cur = *legs[ri].prim;
      const double t_now = t + dt;
      const Point2 mid = position(cur, cur.length / 2.0, prim_enter_c);
      if (cur.role == Role::Junction) {
        add_ledger(0.5 * (prim_enter_t + t_now), prim_enter_t, t_now, kind_of_junction(cur, s), mid, prim_enter_lane,
                   0.0, true);
      } else if (cur.turn != 0 && cur.role == Role::Road) {
        add_ledger(0.5 * (prim_enter_t + t_now), prim_enter_t, t_now, "Curve", mid, prim_enter_lane,
                   path_radius(cur, prim_enter_c), true);
      } else if (cur.piece && cur.role == Role::Road && s.pieces[*cur.piece].kind == PieceKind::Tunnel) {
        const auto& var = s.pieces[*cur.piece].tunnel_variance;
        add_ledger(0.5 * (prim_enter_t + t_now), prim_enter_t, t_now, "TunnelLaneFeature", mid, prim_enter_lane,
                   var[static_cast<std::size_t>(prim_enter_lane - 1)], true);
      }
      if (cur.piece && cur.half == 0 && cur.role == Role::Road) {
        const Piece& pc = s.pieces[*cur.piece];
        if (pc.kind == PieceKind::Exit || pc.kind == PieceKind::Merge) {
          const bool via_ramp =
              pc.kind == PieceKind::Exit && ri + 1 < legs.size() && legs[ri + 1].prim->role == Role::Ramp;
          add_ledger(t_now, t_now, t_now, pc.kind == PieceKind::Exit ? "ExitLane" : "MergeLane",
                     position(cur, cur.length, c), lane, 0.0, via_ramp);
        }
      }
      if (ri + 1 >= legs.size()) {
        ++ri;
        break;
      }
      const Prim& nxt = *legs[ri + 1].prim;
      sl -= cur.length;
      lane = carry_lane(lane, cur, nxt, s, plan.ramp_side[ri]);
      if (cur.role == Role::Junction) {
        c = lane_offset(lane, nxt.lanes, w);
      } else if (nxt.role == Role::Ramp && cur.role != Role::Ramp) {
        c = 0.0;
      } else if (cur.role == Role::Ramp && nxt.role != Role::Ramp) {
        c = lane_offset(lane, nxt.lanes, w);
      }
      ++ri;
      if (cur.role == Role::Ramp && nxt.role != Role::Ramp)
        add_ledger(t_now, t_now, t_now, "MergeLane", true_pos(), lane, 0.0, true);
      next_action = 0;
      while (next_action < legs[ri].actions.size() && legs[ri].actions[next_action].s < sl) ++next_action;
      prim_enter_t = t_now;
      prim_enter_lane = lane;
      prim_enter_c = c;
    }
  }

  std::stable_sort(truth.ledger.begin(), truth.ledger.end(), [](const auto& x, const auto& y) { return x.t < y.t; });
  tr.ground_truth = truth.labels;
  return trip;
}

std::vector<SimTrip> generate_fleet(const Scenario& s, std::size_t trips, std::uint64_t seed) {
  std::vector<SimTrip> out;
  out.reserve(trips);
  for (std::size_t i = 0; i < trips; ++i) out.push_back(simulate(s, trip_seed(seed, i)));
  return out;
}

std::string format_ledger(const GroundTruth& truth) {
  std::string o = "#lanequest-ledger v1\n";
  for (const auto& e : truth.ledger) {
    o += "G\t" + text::format_double(e.t) + '\t' + text::format_double(e.t_begin) + '\t' +
         text::format_double(e.t_end) + '\t' + e.kind + '\t' + text::format_double(e.location.lat) + '\t' +
         text::format_double(e.location.lon) + '\t' + std::to_string(e.lane) + '\t' + e.segment + '\t' +
         text::format_double(e.value) + '\t' + (e.taken ? "1" : "0") + '\n';
  }
  return o;
}

std::vector<LedgerEntry> parse_ledger_text(std::string_view text) {
  std::vector<LedgerEntry> out;
  std::size_t line_no = 0;
  bool header = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text::chomp(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (!header) {
      if (line != "#lanequest-ledger v1") throw ParseError(line_no, "missing '#lanequest-ledger v1' header");
      header = true;
      continue;
    }
    if (line.empty() || line.front() == '#') continue;
    const auto f = text::split_fields(line);
    if (f[0] != "G" || f.size() != 11) throw ParseError(line_no, "expected a G record with 10 fields");
    LedgerEntry e;
    e.t = text::parse_double(f[1], line_no);
    e.t_begin = text::parse_double(f[2], line_no);
    e.t_end = text::parse_double(f[3], line_no);
    e.kind = std::string(f[4]);
    e.location = {text::parse_double(f[5], line_no), text::parse_double(f[6], line_no)};
    e.lane = static_cast<int>(text::parse_int(f[7], line_no));
    e.segment = std::string(f[8]);
    e.value = text::parse_double(f[9], line_no);
    e.taken = f[10] != "0";
    out.push_back(std::move(e));
  }
  if (!header) throw ParseError(1, "missing '#lanequest-ledger v1' header");
  return out;
}

std::vector<LedgerEntry> load_ledger(const std::string& path) {
  try {
    return parse_ledger_text(text::read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.detail(), path);
  }
}

}  // namespace lanequest
