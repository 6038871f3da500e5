#include <cmath>

#include "doctest.h"
#include "lanequest/simulator.hpp"
#include "lanequest/text.hpp"
#include "support.hpp"

using namespace lanequest;

namespace {

Scenario scn(const std::string& body) { return parse_scenario_text(lqtest::scenario(body)); }

bool changes_near(const GroundTruth& g, double t, double margin) {
  for (const auto& e : g.ledger)
    if ((e.kind == "LeftChange" || e.kind == "RightChange") && e.t_begin - margin <= t && t <= e.t_end + margin)
      return true;
  return false;
}

}  // namespace

TEST_CASE("straight drive without noise") {
  const SimTrip trip = simulate(scn("lanes 3\nspeed 12 0\nlanechanges 0\n" + lqtest::quiet_noise() +
                                    "straight 650\n"));
  const auto& s = trip.trace.samples;
  CHECK(s.back().t >= 60.0);
  for (const auto& x : s) {
    CHECK(x.accel.x == 0.0);
    CHECK(x.gyro.z == 0.0);
    CHECK(x.yaw == s.front().yaw);
  }
  REQUIRE(!trip.truth.labels.empty());
  for (const auto& l : trip.truth.labels) CHECK(l.lane == trip.truth.labels.front().lane);
  CHECK(trip.trace.ground_truth == trip.truth.labels);
}

TEST_CASE("curve signals satisfy a = omega^2 r exactly before noise") {
  const SimTrip trip = simulate(scn("lanes 3\nstart_lane 2\nspeed 10 0\nlanechanges 0\n" + lqtest::quiet_noise() +
                                    "straight 200\ncurve right 90 100\nstraight 200\n"));
  const LedgerEntry* curve = nullptr;
  for (const auto& e : trip.truth.ledger)
    if (e.kind == "Curve") curve = &e;
  REQUIRE(curve != nullptr);
  CHECK(curve->value == 100.0);
  std::size_t on_arc = 0;
  for (const auto& x : trip.trace.samples) {
    if (x.t < curve->t_begin || x.t > curve->t_end || std::abs(x.gyro.z) < 1e-6) continue;
    CHECK(std::abs(x.accel.x) == doctest::Approx(x.gyro.z * x.gyro.z * curve->value).epsilon(1e-9));
    if (std::abs(std::abs(x.gyro.z) - 0.1) < 1e-12) {
      CHECK(std::abs(x.accel.x) == doctest::Approx(1.0).epsilon(1e-12));
      ++on_arc;
    }
  }
  CHECK(on_arc > 100);
}

TEST_CASE("outer lanes get larger radii") {
  for (int lane = 1; lane <= 3; ++lane) {
    const SimTrip trip = simulate(scn("lanes 3\nstart_lane " + std::to_string(lane) +
                                      "\nspeed 10 0\nlanechanges 0\nlane_width 3.5\nstraight 200\n"
                                      "curve right 45 100\nstraight 100\n"));
    for (const auto& e : trip.truth.ledger)
      if (e.kind == "Curve") CHECK(e.value == doctest::Approx(100.0 + (2 - lane) * 3.5));
  }
}

TEST_CASE("fleet of one equals a single trip on the derived seed") {
  const Scenario s = scn("lanes 3\nspeed 13\nlanechanges 1\nstraight 600\npothole 2 300\n");
  const auto fleet = generate_fleet(s, 1, 42);
  REQUIRE(fleet.size() == 1);
  const SimTrip one = simulate(s, trip_seed(42, 0));
  CHECK(fleet[0].trace == one.trace);
  CHECK(fleet[0].truth == one.truth);
}

TEST_CASE("fleets are reproducible and trips independent") {
  const Scenario s = scn("lanes 4\nspeed 13\nlanechanges 1\nstraight 700\ncurve left 30 200\nstraight 300\n");
  const auto a = generate_fleet(s, 4, 9);
  const auto b = generate_fleet(s, 4, 9);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(format_trace(a[i].trace) == format_trace(b[i].trace));
    CHECK(format_ledger(a[i].truth) == format_ledger(b[i].truth));
  }
  CHECK(a[0].trace != a[1].trace);
  CHECK(trip_seed(9, 0) != trip_seed(9, 1));
  CHECK(trip_seed(9, 0) != trip_seed(10, 0));
}

TEST_CASE("every trip through the pothole lane logs it") {
  const Scenario s = scn("seed 4\nlanes 3\nspeed 13 0.1\nlanechanges 1.5\nnoise gps 0 gps_bias 0\n"
                         "straight 1500\npothole 2 900\n");
  const auto fleet = generate_fleet(s, 30, s.seed);
  // Where the pothole is, from any trip that hit it.
  std::optional<LatLon> spot;
  for (const auto& t : fleet)
    for (const auto& e : t.truth.ledger)
      if (e.kind == "Pothole") spot = e.location;
  REQUIRE(spot.has_value());
  std::size_t hits = 0, checked = 0;
  for (const auto& t : fleet) {
    std::size_t logged = 0;
    for (const auto& e : t.truth.ledger)
      if (e.kind == "Pothole") {
        ++logged;
        CHECK(e.lane == 2);
        CHECK(label_at(t.truth.labels, e.t) == 2);
      }
    // When the car passes the spot: the fix closest to it along the road.
    double best = INFINITY, when = 0;
    for (const auto& f : t.trace.fixes) {
      const double d = haversine_m(f.pos, *spot);
      if (d < best) best = d, when = f.t;
    }
    if (changes_near(t.truth, when, 3.0)) continue;
    ++checked;
    const bool in_lane = label_at(t.truth.labels, when) == 2;
    CHECK(logged == (in_lane ? 1u : 0u));
    hits += logged;
  }
  CHECK(checked >= 20);
  CHECK(hits >= 3);
}

TEST_CASE("lane changes in the ledger match the labels") {
  const Scenario s = parse_scenario(LANEQUEST_SOURCE_DIR "/scenarios/smoke.scn");
  for (std::size_t i = 0; i < 3; ++i) {
    const SimTrip t = simulate(s, trip_seed(s.seed, i));
    for (const auto& e : t.truth.ledger) {
      if (e.kind != "LeftChange" && e.kind != "RightChange") continue;
      const auto before = label_at(t.truth.labels, e.t_begin - 0.01);
      const auto after = label_at(t.truth.labels, e.t_end + 0.01);
      REQUIRE(before.has_value());
      REQUIRE(after.has_value());
      CHECK(*after - *before == (e.kind == "LeftChange" ? -1 : 1));
      // the x-accel swing sits inside the window
      double lo = 0, hi = 0;
      for (const auto& x : t.trace.samples)
        if (x.t >= e.t_begin && x.t <= e.t_end) lo = std::min(lo, x.accel.x), hi = std::max(hi, x.accel.x);
      CHECK(hi - lo > 0.8);
    }
  }
}

TEST_CASE("simulated traces validate against the map") {
  const Scenario s = parse_scenario(LANEQUEST_SOURCE_DIR "/scenarios/city.scn");
  const RoadMap map = build_map(s);
  CHECK(map.segments().size() > 5);
  const SimTrip t = simulate(s);
  CHECK_NOTHROW(validate_trace(t.trace, &map));
  CHECK(parse_map_text(format_map(map)) == map);
}

TEST_CASE("inconsistent scripts are rejected before generation") {
  CHECK_THROWS_AS(scn("lanes 3\nstart_lane 1\nlanechanges 0\nstraight 500\nlanechange left 100\n"), ScenarioError);
  CHECK_THROWS_AS(scn("lanes 3\nstart_lane 3\nlanechanges 0\nstraight 500\nlanechange right 100\n"), ScenarioError);
  CHECK_THROWS_AS(scn("lanes 3\nstraight 500\npothole 4 100\n"), ScenarioError);
  CHECK_THROWS_AS(scn("lanes 3\nstart_lane 4\nstraight 500\n"), ScenarioError);
  CHECK_THROWS_AS(scn("lanes 3\nstraight 500\ncurve left 30 4\n"), ScenarioError);
  CHECK_THROWS_AS(scn("lanes 3\nstraight 500\ntunnel 100 1 2\n"), ScenarioError);
  CHECK_THROWS_AS(scn("lanes 3\nstraight 500\nbump 900\n"), ScenarioError);
  CHECK_THROWS_AS(parse_scenario_text("lanes 3\n"), ParseError);
  CHECK_THROWS_AS(scn("lanes 3\nwiggle 4\n"), ParseError);
}

TEST_CASE("scenario text round trips") {
  for (const char* name : {"city.scn", "potholes.scn", "smoke.scn"}) {
    const Scenario s = parse_scenario(std::string(LANEQUEST_SOURCE_DIR "/scenarios/") + name);
    CHECK(parse_scenario_text(format_scenario(s)) == s);
  }
}

TEST_CASE("ledger text round trips") {
  const Scenario s = parse_scenario(LANEQUEST_SOURCE_DIR "/scenarios/smoke.scn");
  const SimTrip t = simulate(s);
  CHECK(!t.truth.ledger.empty());
  CHECK(parse_ledger_text(format_ledger(t.truth)) == t.truth.ledger);
  CHECK_THROWS_AS(parse_ledger_text("G\t1\n"), ParseError);
}

TEST_CASE("phone mount rotates the streams") {
  const SimTrip car = simulate(scn("lanes 2\nspeed 10 0\nlanechanges 0\n" + lqtest::quiet_noise() + "straight 200\n"));
  const SimTrip phone =
      simulate(scn("lanes 2\nspeed 10 0\nlanechanges 0\n" + lqtest::quiet_noise() + "mount 0 0 90\nstraight 200\n"));
  REQUIRE(car.trace.samples.size() == phone.trace.samples.size());
  // At rest gravity stays on z; the yaw reading carries the mount offset.
  CHECK(phone.trace.samples[10].accel.z == doctest::Approx(car.trace.samples[10].accel.z));
  CHECK(std::abs(wrap_degrees_180(phone.trace.samples[10].yaw - car.trace.samples[10].yaw)) ==
        doctest::Approx(90.0));
}
