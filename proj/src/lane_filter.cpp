#include "lanequest/lane_filter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lanequest/error.hpp"

namespace lanequest {

namespace {

constexpr double kMadScale = 1.4826;

bool is_organic(AnchorKind k) { return !is_bootstrap(k); }

struct Resolved {
  std::vector<double> distribution;
  double sigma{kDefaultSigma};
};

std::optional<Resolved> resolve(const AnchorObservation& obs, const AnchorStore& store, const FilterConfig& cfg,
                                int n, FilterDiagnostics& diag) {
  if (is_organic(obs.kind) && !cfg.use_organic) {
    ++diag.no_anchor;
    return std::nullopt;
  }
  std::vector<AnchorKind> kinds{obs.kind};
  if (obs.kind == AnchorKind::SurfaceAnomaly) kinds = {AnchorKind::SurfaceAnomaly, AnchorKind::Pothole, AnchorKind::CalmingDevice};

  const auto nearby = store.query_nearby(obs.location, cfg.association_radius_m, kinds);
  std::vector<const Anchor*> fitting;
  for (const Anchor* a : nearby)
    if (static_cast<int>(a->lane_distribution.size()) == n) fitting.push_back(a);

  const Anchor* chosen = nullptr;
  if (!fitting.empty()) {
    chosen = fitting.front();  // nearest, ties by id
    if ((obs.kind == AnchorKind::Curve || obs.kind == AnchorKind::TunnelLaneFeature) && obs.feature) {
      double best = std::abs(chosen->feature_mean - *obs.feature);
      for (const Anchor* a : fitting) {
        const double d = std::abs(a->feature_mean - *obs.feature);
        if (d < best) {
          best = d;
          chosen = a;
        }
      }
    }
  }

  Resolved r;
  if (chosen != nullptr) {
    if (chosen->kind == AnchorKind::CalmingDevice) {
      ++diag.calming_skipped;
      return std::nullopt;
    }
    r.distribution = chosen->lane_distribution;
    r.sigma = store.sigma(sigma_key(chosen->kind)).value_or(kDefaultSigma);
  } else if (!nearby.empty()) {
    ++diag.lane_count_mismatch;
    return std::nullopt;
  } else if (is_bootstrap(obs.kind) && cfg.bootstrap_fallback) {
    ++diag.fallback_priors;
    r.distribution = bootstrap_prior(obs.kind, obs.side, n);
    r.sigma = store.sigma(sigma_key(obs.kind)).value_or(kDefaultSigma);
  } else {
    ++diag.no_anchor;
    return std::nullopt;
  }

  if ((obs.kind == AnchorKind::MergeLane || obs.kind == AnchorKind::ExitLane) && !obs.taken) {
    r.distribution = complement_distribution(r.distribution);
    r.sigma = cfg.negative_sigma;
  }
  return r;
}

}  // namespace

MotionConfusion MotionConfusion::perfect() {
  MotionConfusion c;
  c.m = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  return c;
}

MotionConfusion MotionConfusion::calibrated() {
  MotionConfusion c;
  c.m = {{{0.93, 0.01, 0.06}, {0.01, 0.93, 0.06}, {0.03, 0.03, 0.94}}};
  return c;
}

void validate(const MotionConfusion& c) {
  for (const auto& row : c.m)
    for (double v : row)
      if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("confusion entries must be finite and >= 0");
  for (int d = 0; d < 2; ++d) {
    const auto& row = c.m[static_cast<std::size_t>(d)];
    if (!(row[0] + row[1] + row[2] > 0.0)) throw ValidationError("confusion row has no weight");
  }
}

LaneBelief init_belief(int lane_count) { return LaneBelief::uniform(lane_count); }

LaneBelief motion_update(const LaneBelief& belief, MotionKind detected, const MotionConfusion& confusion) {
  const Motion d = detected == MotionKind::LeftChange ? Motion::Left : Motion::Right;
  const double w_left = confusion(d, Motion::Left);
  const double w_right = confusion(d, Motion::Right);
  const double w_stay = confusion(d, Motion::None);
  const int n = belief.lane_count();
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const double b = belief.probs()[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(std::max(i - 1, 0))] += w_left * b;
    out[static_cast<std::size_t>(std::min(i + 1, n - 1))] += w_right * b;
    out[static_cast<std::size_t>(i)] += w_stay * b;
  }
  return LaneBelief::normalized(std::move(out));
}

std::vector<double> perception_likelihood(std::span<const double> anchor, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("sigma must be positive");
  const int la = argmax_lane(anchor);
  const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * sigma);
  std::vector<double> out(anchor.size());
  for (std::size_t i = 0; i < anchor.size(); ++i) {
    const double z = std::abs(static_cast<double>(static_cast<int>(i) + 1 - la)) / sigma;
    out[i] = anchor[i] * norm * std::exp(-0.5 * z * z);
  }
  return out;
}

PerceptionResult perception_update(const LaneBelief& belief, std::span<const double> anchor, double sigma) {
  if (static_cast<int>(anchor.size()) != belief.lane_count())
    throw DomainError("anchor distribution and belief have different lane counts");
  const std::vector<double> like = perception_likelihood(anchor, sigma);
  std::vector<double> post(like.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < like.size(); ++i) {
    post[i] = like[i] * belief.probs()[i];
    sum += post[i];
  }
  if (!(sum > 0.0)) return {belief, true};
  for (double& p : post) p /= sum;
  return {LaneBelief(std::move(post)), false};
}

double estimate_sigma_mad(std::span<const double> residuals) {
  if (residuals.empty()) return kDefaultSigma;
  std::vector<double> r(residuals.begin(), residuals.end());
  std::sort(r.begin(), r.end());
  const double median = r[(r.size() - 1) / 2];
  return std::max(kSigmaFloor, kMadScale * median);
}

int argmax_lane(std::span<const double> p) {
  if (p.empty()) throw DomainError("argmax of an empty distribution");
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()) + 1;
}

std::vector<double> complement_distribution(std::span<const double> p) {
  if (p.empty()) throw DomainError("complement of an empty distribution");
  const double mx = *std::max_element(p.begin(), p.end());
  std::vector<double> c(p.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    c[i] = mx - p[i];
    sum += c[i];
  }
  if (!(sum > 0.0)) return std::vector<double>(p.size(), 1.0 / static_cast<double>(p.size()));
  for (double& v : c) v /= sum;
  return c;
}

LaneBelief reproject_belief(const LaneBelief& belief, int lane_count) {
  if (lane_count < 1) throw DomainError("invalid road: lane count must be >= 1");
  const int n = belief.lane_count();
  if (n == lane_count) return belief;
  const auto p = belief.probs();
  // Piecewise-linear CDF on [0, 1] with lane i spread over [i/n, (i+1)/n).
  const auto cdf = [&](double x) {
    const double pos = x * n;
    const int full = std::min(n, static_cast<int>(std::floor(pos)));
    double acc = 0.0;
    for (int i = 0; i < full; ++i) acc += p[static_cast<std::size_t>(i)];
    if (full < n) acc += (pos - full) * p[static_cast<std::size_t>(full)];
    return acc;
  };
  std::vector<double> out(static_cast<std::size_t>(lane_count));
  for (int j = 0; j < lane_count; ++j) {
    const double a = cdf(static_cast<double>(j) / lane_count);
    const double b = cdf(static_cast<double>(j + 1) / lane_count);
    out[static_cast<std::size_t>(j)] = std::max(0.0, b - a);
  }
  return LaneBelief::normalized(std::move(out));
}

std::vector<double> bootstrap_prior(AnchorKind kind, Side side, int n) {
  if (n < 1) throw DomainError("invalid road: lane count must be >= 1");
  bool right_edge = false;
  switch (kind) {
    case AnchorKind::TurnRight:
    case AnchorKind::Stop: right_edge = true; break;
    case AnchorKind::TurnLeft:
    case AnchorKind::UTurn: right_edge = false; break;
    case AnchorKind::MergeLane:
    case AnchorKind::ExitLane: right_edge = side == Side::Right; break;
    default: throw DomainError("no bootstrap prior for organic anchor kinds");
  }
  std::vector<double> p(static_cast<std::size_t>(n), 0.0);
  if (n == 1) {
    p[0] = 1.0;
  } else if (n == 2) {
    p = {0.9, 0.1};
  } else {
    p[0] = 0.85;
    p[1] = 0.10;
    for (int i = 2; i < n; ++i) p[static_cast<std::size_t>(i)] = 0.05 / (n - 2);
  }
  if (right_edge) std::reverse(p.begin(), p.end());
  return p;
}

FilterRun run_filter(std::span<const DetectedEvent> events, const AnchorStore& store, const FilterConfig& cfg,
                     int lane_count, std::optional<double> t_start) {
  validate(cfg.confusion);
  FilterRun run;
  LaneBelief bel = init_belief(lane_count);
  const double t0 = t_start.value_or(events.empty() ? 0.0 : event_time(events.front()));
  run.estimates.push_back({t0, argmax_lane(bel), bel, UpdateSource::Init});
  run.prior_beliefs.reserve(events.size());

  double last_t = t0;
  for (const auto& ev : events) {
    run.prior_beliefs.push_back(bel);
    // A lane change is complete at its second extremum; estimate times stay
    // non-decreasing.
    const auto* m = std::get_if<MotionEvent>(&ev);
    const double t = last_t = std::max(last_t, m != nullptr ? m->t_end : event_time(ev));
    if (m != nullptr) {
      bel = motion_update(bel, m->kind, cfg.confusion);
      ++run.diagnostics.motion_updates;
      run.estimates.push_back({t, argmax_lane(bel), bel, UpdateSource::Motion});
    } else if (const auto* s = std::get_if<SegmentChange>(&ev)) {
      bel = reproject_belief(bel, s->lane_count);
      ++run.diagnostics.segment_changes;
      run.estimates.push_back({t, argmax_lane(bel), bel, UpdateSource::Segment});
    } else {
      const auto& obs = std::get<AnchorObservation>(ev);
      const auto r = resolve(obs, store, cfg, bel.lane_count(), run.diagnostics);
      if (!r) continue;
      auto res = perception_update(bel, r->distribution, r->sigma);
      if (res.mismatch) {
        ++run.diagnostics.anchor_mismatch;
        continue;
      }
      bel = std::move(res.belief);
      ++run.diagnostics.perception_updates;
      run.estimates.push_back({t, argmax_lane(bel), bel, UpdateSource::Perception});
    }
  }
  return run;
}

std::vector<LaneBelief> smoothed_priors(std::span<const DetectedEvent> events, const AnchorStore& store,
                                        const FilterConfig& cfg, int lane_count) {
  validate(cfg.confusion);
  // Each step is a transition map from the lanes before an event to the
  // lanes after it, plus a likelihood for perception updates.
  struct Step {
    std::vector<std::vector<double>> map;  // empty for perception and skips
    std::vector<double> like;              // empty unless perception
  };
  std::vector<Step> steps(events.size());
  std::vector<LaneBelief> priors;
  priors.reserve(events.size());
  FilterDiagnostics diag;
  LaneBelief bel = init_belief(lane_count);
  const auto unit = [](int n, int i) {
    std::vector<double> e(static_cast<std::size_t>(n), 0.0);
    e[static_cast<std::size_t>(i)] = 1.0;
    return LaneBelief(std::move(e));
  };

  for (std::size_t k = 0; k < events.size(); ++k) {
    priors.push_back(bel);
    const int n = bel.lane_count();
    Step& st = steps[k];
    if (const auto* m = std::get_if<MotionEvent>(&events[k])) {
      // Unlike the forward filter, a change past the road edge is impossible
      // here; clamping would let the edge lane explain any detection.
      const Motion d = m->kind == MotionKind::LeftChange ? Motion::Left : Motion::Right;
      std::vector<double> next(static_cast<std::size_t>(n), 0.0);
      for (int i = 0; i < n; ++i) {
        std::vector<double> row(static_cast<std::size_t>(n), 0.0);
        row[static_cast<std::size_t>(i)] = cfg.confusion(d, Motion::None);
        if (i > 0) row[static_cast<std::size_t>(i - 1)] = cfg.confusion(d, Motion::Left);
        if (i + 1 < n) row[static_cast<std::size_t>(i + 1)] = cfg.confusion(d, Motion::Right);
        for (int j = 0; j < n; ++j)
          next[static_cast<std::size_t>(j)] += bel.probs()[static_cast<std::size_t>(i)] * row[static_cast<std::size_t>(j)];
        st.map.push_back(std::move(row));
      }
      bel = LaneBelief::normalized(std::move(next));
    } else if (const auto* sc = std::get_if<SegmentChange>(&events[k])) {
      for (int i = 0; i < n; ++i) st.map.push_back(reproject_belief(unit(n, i), sc->lane_count).vector());
      bel = reproject_belief(bel, sc->lane_count);
    } else {
      const auto r = resolve(std::get<AnchorObservation>(events[k]), store, cfg, n, diag);
      if (!r) continue;
      auto res = perception_update(bel, r->distribution, r->sigma);
      if (res.mismatch) continue;
      st.like = perception_likelihood(r->distribution, r->sigma);
      bel = std::move(res.belief);
    }
  }

  std::vector<LaneBelief> out = priors;
  std::vector<double> beta(static_cast<std::size_t>(bel.lane_count()), 1.0);
  for (std::size_t k = events.size(); k-- > 0;) {
    const Step& st = steps[k];
    if (std::holds_alternative<AnchorObservation>(events[k])) {
      // Everything except the observation itself.
      std::vector<double> g(beta.size());
      double sum = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) sum += g[i] = priors[k].probs()[i] * beta[i];
      if (sum > 0.0) out[k] = LaneBelief::normalized(std::move(g));
      for (std::size_t i = 0; i < st.like.size(); ++i) beta[i] *= st.like[i];
    } else {
      std::vector<double> prev(st.map.size(), 0.0);
      for (std::size_t i = 0; i < st.map.size(); ++i)
        for (std::size_t j = 0; j < beta.size(); ++j) prev[i] += st.map[i][j] * beta[j];
      beta = std::move(prev);
    }
    const double mx = *std::max_element(beta.begin(), beta.end());
    if (mx > 0.0)
      for (double& v : beta) v /= mx;
    else
      std::fill(beta.begin(), beta.end(), 1.0);
  }
  return out;
}

}  // namespace lanequest
