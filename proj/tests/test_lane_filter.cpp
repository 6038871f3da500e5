#include <cmath>
#include <random>

#include "doctest.h"
#include "lanequest/lane_filter.hpp"
#include "support.hpp"

using namespace lanequest;
using lqtest::max_abs_diff;
using lqtest::valid_belief;

namespace {

MotionConfusion confusion(double ll, double lr, double l0) {
  MotionConfusion c = MotionConfusion::perfect();
  c.m[0] = {ll, lr, l0};
  c.m[1] = {lr, ll, l0};
  return c;
}

std::vector<double> random_simplex(std::mt19937_64& rng, int n, double zero_chance = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(static_cast<std::size_t>(n));
  for (double& v : p) v = u(rng) < zero_chance ? 0.0 : u(rng) + 1e-6;
  if (lqtest::sum(p) == 0.0) p[0] = 1.0;
  const double s = lqtest::sum(p);
  for (double& v : p) v /= s;
  return p;
}

FilterConfig filter_config(const MotionConfusion& c) {
  FilterConfig cfg;
  cfg.confusion = c;
  return cfg;
}

std::vector<DetectedEvent> events_for(const std::vector<int>& symbols, int n) {
  std::vector<DetectedEvent> ev;
  for (std::size_t i = 0; i < symbols.size(); ++i) ev.push_back(lqtest::make_event(symbols[i], n, 10.0 * (i + 1)));
  return ev;
}

double oracle_error(const std::vector<int>& symbols, int n, const MotionConfusion& c) {
  const AnchorStore store = lqtest::archetype_store(n);
  const FilterConfig cfg = filter_config(c);
  const auto events = events_for(symbols, n);
  const FilterRun run = run_filter(events, store, cfg, n);
  const auto want = lqtest::oracle_run(symbols, n, c, cfg.negative_sigma);
  if (run.estimates.size() != want.size()) return INFINITY;
  double worst = 0;
  for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, max_abs_diff(run.estimates[i].belief.probs(), want[i]));
  return worst;
}

std::vector<double> reversed(std::span<const double> p) { return {p.rbegin(), p.rend()}; }

}  // namespace

TEST_CASE("init_belief") {
  CHECK(init_belief(1).vector() == std::vector<double>{1.0});
  CHECK(init_belief(4).vector() == std::vector<double>{0.25, 0.25, 0.25, 0.25});
  CHECK(lqtest::sum(init_belief(3).vector()) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(init_belief(0), DomainError);
}

TEST_CASE("LaneBelief validation") {
  CHECK_THROWS_AS(LaneBelief(std::vector<double>{}), Error);
  CHECK_THROWS_AS(LaneBelief(std::vector<double>{0.5, 0.6}), Error);
  CHECK_THROWS_AS(LaneBelief(std::vector<double>{1.5, -0.5}), Error);
  CHECK_THROWS_AS(LaneBelief::normalized({0.0, 0.0}), DomainError);
  CHECK(LaneBelief::normalized({1.0, 3.0}).vector() == std::vector<double>{0.25, 0.75});
}

TEST_CASE("motion_update examples") {
  const auto perfect = MotionConfusion::perfect();
  CHECK(motion_update(LaneBelief({1, 0, 0}), MotionKind::RightChange, perfect).vector() ==
        std::vector<double>{0, 1, 0});
  CHECK(motion_update(LaneBelief({0, 0, 1}), MotionKind::RightChange, perfect).vector() ==
        std::vector<double>{0, 0, 1});
  CHECK(motion_update(LaneBelief({1, 0, 0}), MotionKind::LeftChange, perfect).vector() ==
        std::vector<double>{1, 0, 0});
  CHECK(motion_update(LaneBelief({0, 1, 0}), MotionKind::LeftChange, perfect).vector() ==
        std::vector<double>{1, 0, 0});

  const auto c = confusion(0.9, 0.02, 0.08);
  const auto got = motion_update(init_belief(4), MotionKind::LeftChange, c);
  const auto want = lqtest::oracle_motion({0.25, 0.25, 0.25, 0.25}, 0, c);
  CHECK(max_abs_diff(got.probs(), want) <= 1e-12);
  // By hand: lane 1 keeps its stay + left mass and gains lane 2's left move.
  CHECK(got.at(1) == doctest::Approx(0.25 * (0.9 + 0.08) + 0.25 * 0.9));
}

TEST_CASE("motion_update matches the enumeration oracle on random inputs") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + trial % 6;
    const auto prior = random_simplex(rng, n, 0.3);
    const auto c = lqtest::random_confusion(rng);
    for (int d = 0; d < 2; ++d) {
      const auto got = motion_update(LaneBelief(prior), d == 0 ? MotionKind::LeftChange : MotionKind::RightChange, c);
      CHECK(max_abs_diff(got.probs(), lqtest::oracle_motion(prior, d, c)) <= 1e-12);
    }
  }
}

TEST_CASE("perception_update examples") {
  SUBCASE("a peaked anchor dominates") {
    const auto r = perception_update(init_belief(3), std::vector<double>{0, 1, 0}, 0.5);
    CHECK_FALSE(r.mismatch);
    CHECK(r.belief.vector() == std::vector<double>{0, 1, 0});
  }
  SUBCASE("a uniform anchor leaves only the Gaussian term") {
    const std::vector<double> anchor(4, 0.25);
    for (double sigma : {0.3, 1.0, 2.5}) {
      const auto r = perception_update(init_belief(4), anchor, sigma);
      std::vector<double> g(4);
      for (int l = 0; l < 4; ++l) g[static_cast<std::size_t>(l)] = std::exp(-0.5 * (l / sigma) * (l / sigma));
      const double s = lqtest::sum(g);
      for (double& v : g) v /= s;
      CHECK(max_abs_diff(r.belief.probs(), g) <= 1e-12);
      CHECK(argmax_lane(r.belief) == 1);
    }
  }
  SUBCASE("disjoint prior and anchor support") {
    const auto r = perception_update(LaneBelief({0.5, 0.5, 0, 0}), std::vector<double>{0, 0, 0.5, 0.5}, 1.0);
    CHECK(r.mismatch);
    CHECK(r.belief.vector() == std::vector<double>{0.5, 0.5, 0, 0});
  }
  SUBCASE("overlapping support equals the pointwise product") {
    const std::vector<double> prior{0.5, 0.5, 0, 0};
    const std::vector<double> anchor{0, 0.2, 0.5, 0.3};
    const auto r = perception_update(LaneBelief(prior), anchor, 1.0);
    CHECK_FALSE(r.mismatch);
    CHECK(valid_belief(r.belief.probs()));
    CHECK(max_abs_diff(r.belief.probs(), *lqtest::oracle_perception(prior, anchor, 1.0)) <= 1e-12);
    CHECK(r.belief.vector() == std::vector<double>{0, 1, 0, 0});
  }
  SUBCASE("bad input") {
    CHECK_THROWS_AS(perception_update(init_belief(3), std::vector<double>{0.5, 0.5}, 1.0), DomainError);
    CHECK_THROWS_AS(perception_update(init_belief(2), std::vector<double>{0.5, 0.5}, 0.0), DomainError);
  }
}

TEST_CASE("estimate_sigma_mad") {
  CHECK(estimate_sigma_mad(std::vector<double>{0, 0, 0}) == 0.25);
  CHECK(estimate_sigma_mad(std::vector<double>{1, 1, 1}) == doctest::Approx(1.4826));
  CHECK(estimate_sigma_mad(std::vector<double>{0, 1, 2, 5}) == doctest::Approx(1.4826));
  CHECK(estimate_sigma_mad(std::vector<double>{5, 2, 1, 0}) == doctest::Approx(1.4826));
  CHECK(estimate_sigma_mad(std::vector<double>{}) == 1.0);
}

TEST_CASE("argmax_lane") {
  CHECK(argmax_lane(std::vector<double>{0.2, 0.5, 0.3}) == 2);
  CHECK(argmax_lane(init_belief(4)) == 1);
  CHECK(argmax_lane(std::vector<double>{0.4, 0.4, 0.2}) == 1);
}

TEST_CASE("complement distribution") {
  CHECK(complement_distribution(std::vector<double>{0.25, 0.25, 0.25, 0.25}) ==
        std::vector<double>{0.25, 0.25, 0.25, 0.25});
  const auto c = complement_distribution(std::vector<double>{0.7, 0.2, 0.1});
  CHECK(c[0] == 0.0);
  CHECK(c[1] == doctest::Approx(0.5 / 1.1));
  CHECK(c[2] == doctest::Approx(0.6 / 1.1));
}

TEST_CASE("reproject_belief stretches the cumulative mass") {
  CHECK(reproject_belief(LaneBelief({0.5, 0.5}), 4).vector() == std::vector<double>{0.25, 0.25, 0.25, 0.25});
  const auto r = reproject_belief(LaneBelief({1, 0, 0, 0}), 2);
  CHECK(r.vector() == std::vector<double>{1, 0});
  const auto g = reproject_belief(LaneBelief({0, 0, 1}), 5);
  CHECK(argmax_lane(g) == 5);
  CHECK(valid_belief(g.probs()));
  CHECK_THROWS_AS(reproject_belief(init_belief(3), 0), DomainError);
}

TEST_CASE("bootstrap priors lean to the required edge") {
  CHECK(argmax_lane(bootstrap_prior(AnchorKind::TurnRight, Side::Right, 4)) == 4);
  CHECK(argmax_lane(bootstrap_prior(AnchorKind::TurnLeft, Side::Right, 4)) == 1);
  CHECK(argmax_lane(bootstrap_prior(AnchorKind::UTurn, Side::Right, 4)) == 1);
  CHECK(argmax_lane(bootstrap_prior(AnchorKind::ExitLane, Side::Left, 4)) == 1);
  CHECK(argmax_lane(bootstrap_prior(AnchorKind::MergeLane, Side::Right, 5)) == 5);
  CHECK(bootstrap_prior(AnchorKind::Stop, Side::Right, 1) == std::vector<double>{1.0});
  CHECK_THROWS_AS(bootstrap_prior(AnchorKind::Curve, Side::Right, 3), DomainError);
}

TEST_CASE("run_filter: empty stream") {
  const FilterRun run = run_filter({}, AnchorStore{}, FilterConfig{}, 4);
  REQUIRE(run.estimates.size() == 1);
  CHECK(run.estimates[0].lane == 1);
  CHECK(run.estimates[0].belief.vector() == std::vector<double>(4, 0.25));
  CHECK(run.estimates[0].source == UpdateSource::Init);
}

TEST_CASE("run_filter: three right changes reach the right-most lane") {
  std::vector<DetectedEvent> ev;
  for (int i = 0; i < 3; ++i) ev.emplace_back(MotionEvent{10.0 * (i + 1), MotionKind::RightChange, 2.0, 10.0 * (i + 1)});
  const FilterRun perfect = run_filter(ev, AnchorStore{}, filter_config(MotionConfusion::perfect()), 4);
  CHECK(perfect.estimates.back().belief.vector() == std::vector<double>{0, 0, 0, 1});
  const FilterRun calibrated = run_filter(ev, AnchorStore{}, FilterConfig{}, 4);
  CHECK(calibrated.estimates.back().lane == 4);
  CHECK(calibrated.estimates.back().belief.at(4) > 0.9);
}

TEST_CASE("run_filter: random 8-event sequences on 5 lanes match the oracle") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> sym(0, 4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> s(8);
    for (int& v : s) v = sym(rng);
    CHECK(oracle_error(s, 5, trial % 2 ? MotionConfusion::calibrated() : lqtest::random_confusion(rng)) <= 1e-9);
  }
}

TEST_CASE("run_filter: exhaustive short sequences match the oracle") {
  // The acceptance runner covers length 6 on every n; this keeps unit runs quick.
  for (int n = 1; n <= 5; ++n) {
    double worst = 0;
    for (int len = 0; len <= 4; ++len) {
      int total = 1;
      for (int i = 0; i < len; ++i) total *= 5;
      for (int code = 0; code < total; ++code) {
        std::vector<int> s;
        for (int c = code, i = 0; i < len; ++i, c /= 5) s.push_back(c % 5);
        worst = std::max(worst, oracle_error(s, n, MotionConfusion::calibrated()));
      }
    }
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("run_filter: estimate bookkeeping") {
  const AnchorStore store = lqtest::archetype_store(3);
  std::vector<DetectedEvent> ev{lqtest::make_event(1, 3, 5.0), lqtest::make_event(2, 3, 7.0)};
  std::get<MotionEvent>(ev[0]).t_end = 6.0;
  AnchorObservation lost;
  lost.t = 8.0;
  lost.kind = AnchorKind::Curve;
  lost.feature = 80.0;
  lost.location = {40.0, 10.0};
  ev.emplace_back(lost);
  ev.emplace_back(SegmentChange{9.0, "next", 4});
  const FilterRun run = run_filter(ev, store, FilterConfig{}, 3, 1.0);
  REQUIRE(run.estimates.size() == 4);
  CHECK(run.estimates[0].t == 1.0);
  CHECK(run.estimates[1].t == 6.0);  // stamped when the change completes
  CHECK(run.estimates[1].source == UpdateSource::Motion);
  CHECK(run.estimates[2].source == UpdateSource::Perception);
  CHECK(run.estimates[3].source == UpdateSource::Segment);
  CHECK(run.estimates[3].belief.lane_count() == 4);
  CHECK(run.diagnostics.no_anchor == 1);
  CHECK(run.prior_beliefs.size() == ev.size());
  for (const auto& e : run.estimates) CHECK(e.lane == argmax_lane(e.belief));
}

TEST_CASE("calming devices are skipped, bootstrap kinds fall back to priors") {
  AnchorStore store;
  store.insert({"bump", AnchorKind::CalmingDevice, {31.0, 29.0}, {0.34, 0.33, 0.33}, 5.0, 1.0, 20});
  AnchorObservation a;
  a.t = 1.0;
  a.kind = AnchorKind::SurfaceAnomaly;
  a.location = {31.0, 29.0};
  a.feature = 5.0;
  AnchorObservation turn;
  turn.t = 2.0;
  turn.kind = AnchorKind::TurnRight;
  turn.location = {31.5, 29.5};
  const std::vector<DetectedEvent> ev{a, turn};
  const FilterRun run = run_filter(ev, store, FilterConfig{}, 3);
  CHECK(run.diagnostics.calming_skipped == 1);
  CHECK(run.diagnostics.fallback_priors == 1);
  CHECK(run.estimates.back().lane == 3);
  FilterConfig strict;
  strict.bootstrap_fallback = false;
  CHECK(run_filter(ev, store, strict, 3).estimates.size() == 1);
}

TEST_CASE("property: beliefs stay normalized over many random updates") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> kind(0, 2);
  std::size_t updates = 0;
  for (int chain = 0; chain < 200; ++chain) {
    const int n = 1 + chain % 5;
    LaneBelief b = init_belief(n);
    const auto c = lqtest::random_confusion(rng);
    for (int step = 0; step < 60; ++step) {
      const int k = kind(rng);
      if (k < 2) {
        b = motion_update(b, k == 0 ? MotionKind::LeftChange : MotionKind::RightChange, c);
      } else {
        std::uniform_real_distribution<double> sg(0.2, 3.0);
        b = perception_update(b, random_simplex(rng, n, 0.2), sg(rng)).belief;
      }
      ++updates;
      REQUIRE(valid_belief(b.probs()));
    }
  }
  CHECK(updates >= 10000);
}

TEST_CASE("property: motion and perception do not commute") {
  const LaneBelief prior({0.5, 0.5, 0.0});
  const std::vector<double> anchor{0.1, 0.1, 0.8};
  const auto c = MotionConfusion::perfect();
  const auto a = perception_update(motion_update(prior, MotionKind::RightChange, c), anchor, 0.5).belief;
  const auto b = motion_update(perception_update(prior, anchor, 0.5).belief, MotionKind::RightChange, c);
  CHECK(max_abs_diff(a.probs(), b.probs()) > 1e-3);

  // And the filter applies them in timestamp order.
  AnchorStore store;
  store.insert({"p", AnchorKind::Pothole, {31.0, 29.0}, anchor, 4.0, 1.0, 10});
  store.set_sigma(sigma_key(AnchorKind::Pothole), 0.5);
  AnchorObservation o;
  o.kind = AnchorKind::SurfaceAnomaly;
  o.location = {31.0, 29.0};
  o.feature = 4.0;
  const std::vector<DetectedEvent> right_first{MotionEvent{1, MotionKind::RightChange, 2, 1}, [&] {
                                                 auto x = o;
                                                 x.t = 2;
                                                 return x;
                                               }()};
  const std::vector<DetectedEvent> anchor_first{[&] {
                                                  auto x = o;
                                                  x.t = 1;
                                                  return x;
                                                }(),
                                                MotionEvent{2, MotionKind::RightChange, 2, 2}};
  const auto f1 = run_filter(right_first, store, filter_config(c), 3).estimates.back().belief;
  const auto f2 = run_filter(anchor_first, store, filter_config(c), 3).estimates.back().belief;
  CHECK(f1 != f2);
}

TEST_CASE("property: a one-hot anchor collapses any positive prior") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 6;
    const int lane = trial % n;
    std::vector<double> anchor(static_cast<std::size_t>(n), 0.0);
    anchor[static_cast<std::size_t>(lane)] = 1.0;
    const auto r = perception_update(LaneBelief(random_simplex(rng, n)), anchor, 0.3 + trial % 4);
    CHECK(r.belief.at(lane + 1) == 1.0);
  }
}

TEST_CASE("property: a wider sigma lifts every lane relative to the anchor peak") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.1, 4.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + trial % 5;
    const LaneBelief prior(random_simplex(rng, n));
    const auto anchor = random_simplex(rng, n);
    double s1 = u(rng), s2 = u(rng);
    if (s1 > s2) std::swap(s1, s2);
    const auto narrow = perception_update(prior, anchor, s1).belief.vector();
    const auto wide = perception_update(prior, anchor, s2).belief.vector();
    const auto k = static_cast<std::size_t>(argmax_lane(anchor) - 1);
    REQUIRE(narrow[k] > 0.0);
    for (std::size_t l = 0; l < narrow.size(); ++l)
      CHECK(wide[l] / wide[k] >= narrow[l] / narrow[k] * (1 - 1e-12));
  }
}

TEST_CASE("property: mirror symmetry") {
  std::mt19937_64 rng(14);
  std::uniform_int_distribution<int> sym(0, 2);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + trial % 5;
    std::vector<double> anchor = random_simplex(rng, n);
    // Keep the argmax unique so reversing it is unambiguous.
    anchor[static_cast<std::size_t>(trial % n)] += 1.0;
    const double s = lqtest::sum(anchor);
    for (double& v : anchor) v /= s;
    const auto mirror = reversed(anchor);

    MotionConfusion c = lqtest::random_confusion(rng);
    MotionConfusion cm = c;  // swap the left and right roles
    cm.m[0] = {c.m[1][1], c.m[1][0], c.m[1][2]};
    cm.m[1] = {c.m[0][1], c.m[0][0], c.m[0][2]};

    LaneBelief a = init_belief(n), b = init_belief(n);
    for (int step = 0; step < 10; ++step) {
      const int k = sym(rng);
      if (k == 2) {
        a = perception_update(a, anchor, 0.8).belief;
        b = perception_update(b, mirror, 0.8).belief;
      } else {
        a = motion_update(a, k == 0 ? MotionKind::LeftChange : MotionKind::RightChange, c);
        b = motion_update(b, k == 0 ? MotionKind::RightChange : MotionKind::LeftChange, cm);
      }
      CHECK(max_abs_diff(a.probs(), reversed(b.probs())) <= 1e-12);
    }
  }
}

TEST_CASE("smoothed priors equal the leave-one-out path posterior") {
  // Enumerate every lane path; an observation's belief uses every event
  // except itself. Lane changes past the edge are impossible here.
  std::mt19937_64 rng(15);
  std::uniform_int_distribution<int> sym(0, 4);
  const int n = 3;
  const AnchorStore store = lqtest::archetype_store(n);
  const FilterConfig cfg;
  const auto arch = lqtest::archetypes(n);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<int> s(6);
    for (int& v : s) v = sym(rng);
    const auto events = events_for(s, n);
    const auto got = smoothed_priors(events, store, cfg, n);
    REQUIRE(got.size() == s.size());

    std::vector<std::vector<double>> like(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (s[k] < 2) continue;
      const auto& a = arch[static_cast<std::size_t>(s[k] - 2)];
      const auto dist = a.taken ? a.distribution : lqtest::oracle_complement(a.distribution);
      const double sigma = a.taken ? a.sigma : cfg.negative_sigma;
      like[k] = perception_likelihood(dist, sigma);
    }
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (s[k] < 2) continue;
      std::vector<double> marg(n, 0.0);
      // paths: lane before each event plus the final lane
      const std::size_t steps = s.size() + 1;
      std::size_t total = 1;
      for (std::size_t i = 0; i < steps; ++i) total *= n;
      for (std::size_t code = 0; code < total; ++code) {
        std::vector<int> path;
        for (std::size_t c = code, i = 0; i < steps; ++i, c /= n) path.push_back(static_cast<int>(c % n));
        double w = 1.0 / n;
        for (std::size_t j = 0; j < s.size() && w > 0; ++j) {
          const int from = path[j], to = path[j + 1];
          if (s[j] < 2) {
            const Motion d = s[j] == 0 ? Motion::Left : Motion::Right;
            const int delta = to - from;
            w *= delta == 0 ? cfg.confusion(d, Motion::None)
                 : delta == -1 ? cfg.confusion(d, Motion::Left)
                 : delta == 1 ? cfg.confusion(d, Motion::Right) : 0.0;
          } else {
            if (to != from) w = 0;
            if (j != k) w *= like[j][static_cast<std::size_t>(from)];
          }
        }
        marg[static_cast<std::size_t>(path[k])] += w;
      }
      const double z = lqtest::sum(marg);
      for (double& v : marg) v /= z;
      CHECK(max_abs_diff(got[k].probs(), marg) <= 1e-9);
    }
  }
}
