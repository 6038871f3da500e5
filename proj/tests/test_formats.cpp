#include "doctest.h"
#include "lanequest/config.hpp"
#include "lanequest/formats.hpp"
#include "lanequest/simulator.hpp"
#include "support.hpp"

using namespace lanequest;

namespace {

struct Smoke {
  Scenario s = parse_scenario(LANEQUEST_SOURCE_DIR "/scenarios/smoke.scn");
  RoadMap map = build_map(s);
  SimTrip sim = simulate(s);
  TripEvents trip;
  Smoke() {
    PipelineConfig cfg;
    trip = extract_events(sim.trace, map, cfg, 3);
    attach_reporter_beliefs(trip, cfg.filter);
  }
};

}  // namespace

TEST_CASE("events text round trips") {
  const Smoke w;
  REQUIRE(w.trip.events.size() > 5);
  const std::string text = format_events(w.trip, w.sim.trace.fixes);
  const TripEvents back = parse_events_text(text);
  CHECK(back.initial_lanes == w.trip.initial_lanes);
  CHECK(back.t_start == w.trip.t_start);
  REQUIRE(back.events.size() == w.trip.events.size());
  for (std::size_t i = 0; i < back.events.size(); ++i) {
    CHECK(back.events[i].index() == w.trip.events[i].index());
    if (const auto* o = std::get_if<AnchorObservation>(&w.trip.events[i])) CHECK(std::get<AnchorObservation>(back.events[i]) == *o);
    if (const auto* m = std::get_if<MotionEvent>(&w.trip.events[i])) CHECK(std::get<MotionEvent>(back.events[i]) == *m);
    if (const auto* c = std::get_if<SegmentChange>(&w.trip.events[i])) CHECK(std::get<SegmentChange>(back.events[i]) == *c);
  }
  CHECK(format_events(back, w.sim.trace.fixes) == text);

  lqtest::TempDir dir("events");
  save_events(w.trip, dir.file("e.txt"), w.sim.trace.fixes);
  CHECK(format_events(load_events(dir.file("e.txt")), w.sim.trace.fixes) == text);
}

TEST_CASE("estimates text round trips") {
  const Smoke w;
  const auto run = estimate_trip(w.trip, AnchorStore{}, FilterConfig{});
  const std::string text = format_estimates(run.estimates);
  const auto back = parse_estimates_text(text);
  REQUIRE(back.size() == run.estimates.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].t == run.estimates[i].t);
    CHECK(back[i].lane == run.estimates[i].lane);
    CHECK(back[i].source == run.estimates[i].source);
    CHECK(back[i].belief == run.estimates[i].belief);
  }
  lqtest::TempDir dir("est");
  save_estimates(run.estimates, dir.file("l.txt"));
  CHECK(format_estimates(load_estimates(dir.file("l.txt"))) == text);
}

TEST_CASE("malformed events and estimates") {
  CHECK_THROWS_AS(parse_events_text("#lanequest-events v1\nT\t3\t0\nE\t1\tWobble\t31\t29\n"), ParseError);
  CHECK_THROWS_AS(parse_events_text("nope\n"), ParseError);
  CHECK_THROWS_AS(parse_estimates_text("#lanequest-estimates v1\nL\t1\t2\t0.5\t0.6\tsrc=init\n"), Error);
  CHECK_THROWS_AS(parse_estimates_text("#lanequest-estimates v1\nL\t1\t1\t1\tsrc=guess\n"), ParseError);
}

TEST_CASE("config text round trips") {
  PipelineConfig cfg;
  const std::string text = format_config(cfg);
  for (const auto& k : config_keys()) CHECK(text.find(k) != std::string::npos);

  PipelineConfig changed;
  apply_config_text("# tuned\nphone_frame = true\n\nsmoothing_window = 0.75\n", changed);
  CHECK(changed.phone_frame);
  CHECK(changed.smoothing_window_s == 0.75);
  PipelineConfig again;
  apply_config_text(format_config(changed), again);
  CHECK(format_config(again) == format_config(changed));

  PipelineConfig c;
  CHECK_THROWS_AS(apply_config_text("no_such_key = 1\n", c), ParseError);
  CHECK_THROWS_AS(apply_config_text("smoothing_window = fast\n", c), ParseError);
  CHECK_THROWS_AS(apply_config_text("phone_frame\n", c), ParseError);
}
