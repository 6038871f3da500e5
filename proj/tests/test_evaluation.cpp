#include <cmath>

#include "doctest.h"
#include "lanequest/evaluation.hpp"
#include "lanequest/pipeline.hpp"
#include "support.hpp"

using namespace lanequest;

namespace {

LaneEstimate est(double t, int lane, int n) {
  std::vector<double> p(static_cast<std::size_t>(n), 0.0);
  p[static_cast<std::size_t>(lane - 1)] = 1.0;
  return {t, lane, LaneBelief(p), UpdateSource::Perception};
}

std::vector<LaneLabel> labels_every_second(const std::vector<int>& lanes) {
  std::vector<LaneLabel> out;
  for (std::size_t i = 0; i < lanes.size(); ++i) out.push_back({static_cast<double>(i), lanes[i]});
  return out;
}

}  // namespace

TEST_CASE("estimates equal to the truth score exact 1") {
  const auto truth = labels_every_second({1, 1, 2, 2, 3, 3, 2});
  std::vector<LaneEstimate> e;
  for (const auto& l : truth) e.push_back(est(l.t, l.lane, 3));
  const EvalReport r = evaluate(e, truth, 7.0);
  CHECK(r.all.exact() == 1.0);
  CHECK(r.all.within_one() == 1.0);
  CHECK(r.timed.exact() == 1.0);
  CHECK(r.all.total() == 7);
}

TEST_CASE("one lane off everywhere") {
  const auto truth = labels_every_second({1, 2, 3, 2, 1});
  std::vector<LaneEstimate> e;
  for (const auto& l : truth) e.push_back(est(l.t, l.lane == 3 ? 2 : l.lane + 1, 3));
  const EvalReport r = evaluate(e, truth, 5.0);
  CHECK(r.all.exact() == 0.0);
  CHECK(r.all.within_one() == 1.0);
  CHECK(r.timed.exact() == 0.0);
  CHECK(r.timed.within_one() == 1.0);
}

TEST_CASE("cdf is consistent with the exact fraction") {
  Tally t;
  for (int e : {0, 0, 0, 1, 1, 2, 3, 0, 1, 0}) t.add(e);
  const auto c = t.cdf();
  REQUIRE(!c.empty());
  CHECK(c.front().first == 0);
  CHECK(c.front().second == doctest::Approx(t.exact()));
  CHECK(c[1].second == doctest::Approx(t.within_one()));
  for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i].second >= c[i - 1].second);
  CHECK(c.back().second == doctest::Approx(1.0));
  CHECK(t.exact() == doctest::Approx(0.5));
  CHECK(t.within_one() == doctest::Approx(0.8));

  Tally empty;
  CHECK(empty.exact() == 0.0);
  CHECK(empty.total() == 0);
  Tally m = t;
  m.merge(t);
  CHECK(m.total() == 20);
  CHECK(m.exact() == doctest::Approx(0.5));
}

TEST_CASE("timed tally weights by duration") {
  // Correct for 1 s, then wrong for 9 s.
  const auto truth = labels_every_second({1, 1, 1, 1, 1, 1, 1, 1, 1, 1});
  const std::vector<LaneEstimate> e{est(0, 1, 2), est(1, 2, 2)};
  const EvalReport r = evaluate(e, truth, 10.0);
  CHECK(r.all.exact() == doctest::Approx(0.5));
  // one-second ticks 0..10, only the first is right
  CHECK(r.timed.exact() == doctest::Approx(1.0 / 11.0));
}

TEST_CASE("transient ends at the first confident perception update") {
  const auto truth = labels_every_second(std::vector<int>(20, 2));
  std::vector<LaneEstimate> e;
  e.push_back({0, 1, LaneBelief::uniform(3), UpdateSource::Init});
  e.push_back({4, 1, LaneBelief({0.5, 0.3, 0.2}), UpdateSource::Perception});
  e.push_back({8, 2, LaneBelief({0.1, 0.8, 0.1}), UpdateSource::Perception});
  e.push_back({12, 2, LaneBelief({0.1, 0.8, 0.1}), UpdateSource::Motion});
  const EvalReport r = evaluate(e, truth, 20.0);
  CHECK(r.transient_s == doctest::Approx(8.0));
  CHECK(r.steady.exact() == 1.0);
  CHECK(r.all.exact() == doctest::Approx(0.5));
}

TEST_CASE("no overlap with the labels is an error") {
  const auto truth = labels_every_second({1, 1});
  const std::vector<LaneEstimate> e{est(-10, 1, 2)};
  CHECK_THROWS_AS(evaluate(std::span<const LaneEstimate>{}, truth, 2.0), EvaluationError);
  CHECK_THROWS_AS(evaluate(e, std::span<const LaneLabel>{}, 2.0), EvaluationError);
  CHECK_THROWS_AS(evaluate(e, truth, -5.0), EvaluationError);
}

TEST_CASE("subsampling keeps lane and segment changes") {
  std::vector<DetectedEvent> ev;
  for (int i = 0; i < 200; ++i) {
    const double t = i * 10.0;
    if (i % 4 == 0) ev.push_back(MotionEvent{t, MotionKind::LeftChange, 1.0, t + 3});
    else if (i % 4 == 1) ev.push_back(SegmentChange{t, "s" + std::to_string(i), 3});
    else {
      AnchorObservation o;
      o.t = t;
      o.kind = AnchorKind::Curve;
      o.location = {31.2 + i * 1e-4, 29.9};
      o.feature = 100;
      o.id = static_cast<std::uint64_t>(i);
      ev.push_back(o);
    }
  }
  const double hours = 2000.0 / 3600.0;
  const auto anchors = [](const std::vector<DetectedEvent>& v) {
    std::size_t n = 0;
    for (const auto& e : v) n += std::holds_alternative<AnchorObservation>(e);
    return n;
  };
  const auto kept = subsample_events(ev, 36.0, 2000.0, 3);
  CHECK(anchors(kept) == static_cast<std::size_t>(std::lround(36.0 * hours)));
  CHECK(kept.size() - anchors(kept) == 100);
  for (std::size_t i = 1; i < kept.size(); ++i) CHECK(event_time(kept[i]) >= event_time(kept[i - 1]));
  CHECK(subsample_events(ev, 36.0, 2000.0, 3).size() == kept.size());

  const auto all = subsample_events(ev, 1e6, 2000.0, 3);
  CHECK(all.size() == ev.size());
  CHECK(anchors(subsample_events(ev, 1e-3, 2000.0, 3)) == 0);
}

TEST_CASE("rate far above the actual rate changes nothing") {
  const Scenario s = parse_scenario(LANEQUEST_SOURCE_DIR "/scenarios/smoke.scn");
  const RoadMap map = build_map(s);
  PipelineConfig cfg;
  std::vector<TripEvents> trips;
  std::vector<SimTrip> sims;
  for (std::uint32_t i = 0; i < 6; ++i) {
    sims.push_back(simulate(s, trip_seed(s.seed, i)));
    trips.push_back(extract_events(sims.back().trace, map, cfg, i));
  }
  const FleetModel fleet = learn_fleet(trips, cfg);
  const auto& trace = sims[0].trace;
  const double dur = trace.samples.back().t - trace.samples.front().t;
  TripEvents thin = trips[0];
  thin.events = subsample_events(trips[0].events, 1e5, dur, 1);
  const auto full = estimate_trip(trips[0], fleet.store, cfg.filter);
  const auto same = estimate_trip(thin, fleet.store, cfg.filter);
  REQUIRE(full.estimates.size() == same.estimates.size());
  for (std::size_t i = 0; i < full.estimates.size(); ++i) {
    CHECK(full.estimates[i].lane == same.estimates[i].lane);
    CHECK(lqtest::max_abs_diff(full.estimates[i].belief.vector(), same.estimates[i].belief.vector()) == 0.0);
  }
}

TEST_CASE("with no anchors accuracy falls to chance") {
  // Random start lane, no lane changes, so only priors remain.
  const Scenario s = parse_scenario_text(lqtest::scenario("seed 6\nlanes 4\nspeed 14\nlanechanges 0\n"
                                                          "straight 800\npothole 2 300\ncurve left 30 150\n"
                                                          "straight 500\n"));
  const RoadMap map = build_map(s);
  PipelineConfig cfg;
  EvalReport total;
  for (std::uint32_t i = 0; i < 60; ++i) {
    const SimTrip sim = simulate(s, trip_seed(s.seed, i));
    TripEvents trip = extract_events(sim.trace, map, cfg, i);
    const double dur = sim.trace.samples.back().t - sim.trace.samples.front().t;
    trip.events = subsample_events(trip.events, 1e-3, dur, i);
    const auto run = estimate_trip(trip, AnchorStore{}, cfg.filter);
    total.merge(evaluate(run.estimates, sim.truth.labels, sim.trace.samples.back().t));
  }
  CHECK(total.timed.exact() == doctest::Approx(0.25).epsilon(0.6));
}

TEST_CASE("GPS lane guess trails the filter under 10 m fix noise") {
  Scenario s = parse_scenario(LANEQUEST_SOURCE_DIR "/scenarios/city.scn");
  s.noise.gps = 10.0;
  const RoadMap map = build_map(s);
  PipelineConfig cfg;
  std::vector<SimTrip> sims;
  std::vector<TripEvents> trips;
  for (std::uint32_t i = 0; i < 20; ++i) {
    sims.push_back(simulate(s, trip_seed(s.seed, i)));
    trips.push_back(extract_events(sims.back().trace, map, cfg, i));
  }
  const FleetModel fleet = learn_fleet(trips, cfg);
  EvalReport filter, gps;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    const double t_end = sims[i].trace.samples.back().t;
    filter.merge(evaluate(estimate_trip(trips[i], fleet.store, cfg.filter).estimates, sims[i].truth.labels, t_end));
    const auto snapped = match_fixes(sims[i].trace.fixes, map);
    gps.merge(evaluate(gps_lane_estimates(snapped, map, s.lane_width), sims[i].truth.labels, t_end));
  }
  MESSAGE("filter " << filter.timed.exact() << " gps " << gps.timed.exact());
  CHECK(gps.timed.exact() < filter.timed.exact() - 0.1);
}

TEST_CASE("gps lane from lateral offset") {
  RoadMap map({RoadSegment{"s", {{31.2, 29.9}, {31.21, 29.9}}, 4, {}}});
  const LocalFrame frame({31.2, 29.9});
  std::vector<SnappedFix> fixes;
  // Heading north: +cross is left. Lane 1 is the left-most, centred at +5.25.
  for (double cross : {5.25, 1.75, -1.75, -5.25, 20.0, -20.0}) {
    LocationFix f{static_cast<double>(fixes.size()), frame.to_latlon({-cross, 500}), 3.0, "s"};
    fixes.push_back(project_onto(f, map.segments()[0]));
  }
  const auto e = gps_lane_estimates(fixes, map);
  REQUIRE(e.size() == 6);
  CHECK(e[0].lane == 1);
  CHECK(e[1].lane == 2);
  CHECK(e[2].lane == 3);
  CHECK(e[3].lane == 4);
  CHECK(e[4].lane == 1);
  CHECK(e[5].lane == 4);
}

TEST_CASE("detection scoring") {
  std::vector<DetectedEvent> det{MotionEvent{10, MotionKind::LeftChange, 1, 12},
                                 MotionEvent{50, MotionKind::RightChange, 1, 52},
                                 MotionEvent{90, MotionKind::RightChange, 1, 92}};
  std::vector<LedgerEntry> led(2);
  led[0].t = 10.5, led[0].t_begin = 9, led[0].t_end = 13, led[0].kind = "LeftChange";
  led[1].t = 300, led[1].t_begin = 299, led[1].t_end = 303, led[1].kind = "LeftChange";
  const auto scores = score_detections(det, led);
  const auto& left = scores.at(detection_class(det[0]));
  CHECK(left.true_positives == 1);
  CHECK(left.false_negatives == 1);
  CHECK(left.precision() == 1.0);
  CHECK(left.recall() == 0.5);
  const auto& right = scores.at(detection_class(det[1]));
  CHECK(right.false_positives == 2);
  CHECK(right.precision() == 0.0);
  CHECK(ClassScore{}.precision() == 1.0);
  CHECK(ClassScore{}.recall() == 1.0);
  auto merged = scores;
  merge_scores(merged, scores);
  CHECK(merged.at(detection_class(det[0])).true_positives == 2);
}

TEST_CASE("csv reports have headers and fixed decimals") {
  const auto truth = labels_every_second({1, 2, 2});
  const std::vector<LaneEstimate> e{est(0, 1, 2), est(1, 1, 2), est(2, 2, 2)};
  const EvalReport r = evaluate(e, truth, 3.0);
  const std::string rep = format_report_csv(r);
  CHECK(rep.find('\n') != std::string::npos);
  CHECK(rep.find("0.666667") != std::string::npos);
  const std::string cdf = format_cdf_csv(r);
  CHECK(cdf.find("1.000000") != std::string::npos);
  const std::vector<SweepPoint> sweep{{5, r}, {10, r}};
  const std::string sw = format_sweep_csv(sweep);
  std::size_t lines = 0;
  for (char c : sw) lines += c == '\n';
  CHECK(lines == 3);
  CHECK(format_report_csv(r) == rep);
}
