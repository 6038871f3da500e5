#include "lanequest/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

namespace lanequest {

namespace {
constexpr double kInfinityTime = std::numeric_limits<double>::infinity();
}

void Tally::add(int error) {
  const auto k = static_cast<std::size_t>(std::abs(error));
  if (errors.size() <= k) errors.resize(k + 1, 0);
  ++errors[k];
}

void Tally::merge(const Tally& o) {
  if (errors.size() < o.errors.size()) errors.resize(o.errors.size(), 0);
  for (std::size_t k = 0; k < o.errors.size(); ++k) errors[k] += o.errors[k];
}

std::size_t Tally::total() const { return std::accumulate(errors.begin(), errors.end(), std::size_t{0}); }

double Tally::exact() const {
  const std::size_t n = total();
  return n == 0 ? 0.0 : static_cast<double>(errors[0]) / static_cast<double>(n);
}

double Tally::within_one() const {
  const std::size_t n = total();
  if (n == 0) return 0.0;
  const std::size_t ok = errors[0] + (errors.size() > 1 ? errors[1] : 0);
  return static_cast<double>(ok) / static_cast<double>(n);
}

std::vector<std::pair<int, double>> Tally::cdf() const {
  std::vector<std::pair<int, double>> out;
  const std::size_t n = total();
  if (n == 0) return out;
  std::size_t acc = 0;
  for (std::size_t k = 0; k < errors.size(); ++k) {
    acc += errors[k];
    out.emplace_back(static_cast<int>(k), static_cast<double>(acc) / static_cast<double>(n));
  }
  out.back().second = 1.0;
  return out;
}

void EvalReport::merge(const EvalReport& o) {
  all.merge(o.all);
  steady.merge(o.steady);
  timed.merge(o.timed);
  timed_steady.merge(o.timed_steady);
  const double n = static_cast<double>(trips + o.trips);
  if (n > 0) transient_s = (transient_s * static_cast<double>(trips) + o.transient_s * static_cast<double>(o.trips)) / n;
  trips += o.trips;
}

EvalReport evaluate(std::span<const LaneEstimate> estimates, std::span<const LaneLabel> truth, double t_end,
                    double transient_peak) {
  if (truth.empty() || estimates.empty()) throw EvaluationError("nothing to compare: estimates or truth are empty");
  const std::vector<LaneLabel> labels(truth.begin(), truth.end());

  double steady_from = kInfinityTime;
  for (const auto& e : estimates) {
    if (e.source != UpdateSource::Perception) continue;
    const auto p = e.belief.probs();
    if (*std::max_element(p.begin(), p.end()) >= transient_peak) {
      steady_from = e.t;
      break;
    }
  }

  EvalReport r;
  r.trips = 1;
  const double t0 = estimates.front().t;
  r.transient_s = (steady_from == kInfinityTime ? t_end : steady_from) - t0;
  for (const auto& e : estimates) {
    const auto lane = label_at(labels, e.t);
    if (!lane) continue;
    r.all.add(e.lane - *lane);
    if (e.t >= steady_from) r.steady.add(e.lane - *lane);
  }
  if (r.all.total() == 0) throw EvaluationError("estimates and ground truth do not overlap in time");

  std::size_t k = 0;
  for (double t = std::max(t0, labels.front().t); t <= t_end; t += 1.0) {
    while (k + 1 < estimates.size() && estimates[k + 1].t <= t) ++k;
    const auto lane = label_at(labels, t);
    if (!lane) continue;
    r.timed.add(estimates[k].lane - *lane);
    if (t >= steady_from) r.timed_steady.add(estimates[k].lane - *lane);
  }
  return r;
}

std::vector<LaneEstimate> gps_lane_estimates(std::span<const SnappedFix> fixes, const RoadMap& map, double lane_width) {
  std::vector<LaneEstimate> out;
  for (const auto& f : fixes) {
    const RoadSegment* seg = map.find(f.segment);
    if (seg == nullptr) continue;
    const int n = seg->lane_count;
    const int lane =
        std::clamp(static_cast<int>(std::lround((n + 1) / 2.0 - f.cross_m / lane_width)), 1, n);
    std::vector<double> p(static_cast<std::size_t>(n), 0.0);
    p[static_cast<std::size_t>(lane - 1)] = 1.0;
    out.push_back({f.original.t, lane, LaneBelief(std::move(p)), UpdateSource::Perception});
  }
  return out;
}

std::vector<DetectedEvent> subsample_events(std::span<const DetectedEvent> events, double rate_per_hour,
                                            double duration_s, std::uint64_t seed) {
  if (!(rate_per_hour > 0.0)) throw DomainError("event rate must be positive");
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < events.size(); ++i)
    if (std::holds_alternative<AnchorObservation>(events[i])) candidates.push_back(i);
  const auto keep = static_cast<std::size_t>(std::lround(rate_per_hour * duration_s / 3600.0));
  if (keep >= candidates.size()) return {events.begin(), events.end()};

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  std::sample(candidates.begin(), candidates.end(), std::back_inserter(chosen), keep, rng);
  std::vector<bool> mask(events.size(), false);
  for (std::size_t i : chosen) mask[i] = true;
  std::vector<DetectedEvent> out;
  for (std::size_t i = 0; i < events.size(); ++i)
    if (mask[i] || !std::holds_alternative<AnchorObservation>(events[i])) out.push_back(events[i]);
  return out;
}

double ClassScore::precision() const {
  const std::size_t d = true_positives + false_positives;
  return d == 0 ? 1.0 : static_cast<double>(true_positives) / static_cast<double>(d);
}

double ClassScore::recall() const {
  const std::size_t d = true_positives + false_negatives;
  return d == 0 ? 1.0 : static_cast<double>(true_positives) / static_cast<double>(d);
}

void ClassScore::merge(const ClassScore& o) {
  true_positives += o.true_positives;
  false_positives += o.false_positives;
  false_negatives += o.false_negatives;
}

std::string detection_class(const DetectedEvent& e) {
  if (const auto* m = std::get_if<MotionEvent>(&e)) return std::string(to_string(m->kind));
  if (const auto* o = std::get_if<AnchorObservation>(&e)) {
    std::string name(to_string(o->kind));
    if (o->kind == AnchorKind::MergeLane || o->kind == AnchorKind::ExitLane) name += o->taken ? "/taken" : "/passed";
    return name;
  }
  return {};
}

std::string ledger_class(const LedgerEntry& e) {
  if (e.kind == "Pothole" || e.kind == "Bump") return "SurfaceAnomaly";
  if (e.kind == "Stop") return e.value > 180.0 ? "Stop" : "";
  if (e.kind == "MergeLane" || e.kind == "ExitLane") return e.kind + (e.taken ? "/taken" : "/passed");
  return e.kind;
}

namespace {

double tolerance(const std::string& cls) {
  if (cls == "LeftChange" || cls == "RightChange") return 2.0;
  if (cls == "Stop") return 20.0;
  if (cls.starts_with("MergeLane") || cls.starts_with("ExitLane")) return 5.0;
  if (cls == "SurfaceAnomaly") return 1.5;
  return 3.0;
}

}  // namespace

std::map<std::string, ClassScore> score_detections(std::span<const DetectedEvent> detected,
                                                   std::span<const LedgerEntry> ledger) {
  std::map<std::string, std::vector<double>> det;
  for (const auto& e : detected) {
    const std::string c = detection_class(e);
    if (!c.empty()) det[c].push_back(event_time(e));
  }
  std::map<std::string, std::vector<const LedgerEntry*>> truth;
  for (const auto& e : ledger) {
    const std::string c = ledger_class(e);
    if (!c.empty()) truth[c].push_back(&e);
  }

  std::map<std::string, ClassScore> out;
  for (auto& [cls, times] : det) {
    std::sort(times.begin(), times.end());
    out[cls];
  }
  for (const auto& [cls, entries] : truth) {
    ClassScore& sc = out[cls];
    const double tol = tolerance(cls);
    std::vector<double>& times = det[cls];
    std::vector<bool> used(times.size(), false);
    for (const LedgerEntry* e : entries) {
      bool hit = false;
      for (std::size_t i = 0; i < times.size(); ++i) {
        if (used[i] || times[i] < e->t_begin - tol) continue;
        if (times[i] > e->t_end + tol) break;
        used[i] = true;
        hit = true;
        break;
      }
      if (hit)
        ++sc.true_positives;
      else
        ++sc.false_negatives;
    }
    sc.false_positives += static_cast<std::size_t>(std::count(used.begin(), used.end(), false));
  }
  for (auto& [cls, times] : det)
    if (!truth.count(cls)) out[cls].false_positives = times.size();
  return out;
}

void merge_scores(std::map<std::string, ClassScore>& into, const std::map<std::string, ClassScore>& from) {
  for (const auto& [k, v] : from) into[k].merge(v);
}

namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string format_report_csv(const EvalReport& r) {
  std::string o = "metric,value\n";
  const auto row = [&](const char* k, const std::string& v) { o += std::string(k) + "," + v + "\n"; };
  row("trips", std::to_string(r.trips));
  row("comparisons", std::to_string(r.all.total()));
  row("exact", fixed(r.all.exact()));
  row("within_one", fixed(r.all.within_one()));
  row("steady_exact", fixed(r.steady.exact()));
  row("steady_within_one", fixed(r.steady.within_one()));
  row("timed_exact", fixed(r.timed.exact()));
  row("timed_within_one", fixed(r.timed.within_one()));
  row("timed_steady_exact", fixed(r.timed_steady.exact()));
  row("timed_steady_within_one", fixed(r.timed_steady.within_one()));
  row("transient_s", fixed(r.transient_s));
  return o;
}

std::string format_cdf_csv(const EvalReport& r) {
  std::string o = "error_lanes,per_estimate,per_second\n";
  const auto a = r.all.cdf(), b = r.timed.cdf();
  const std::size_t n = std::max(a.size(), b.size());
  const auto at = [](const std::vector<std::pair<int, double>>& c, std::size_t k) {
    return c.empty() ? 0.0 : k < c.size() ? c[k].second : 1.0;
  };
  for (std::size_t k = 0; k < n; ++k) o += std::to_string(k) + "," + fixed(at(a, k)) + "," + fixed(at(b, k)) + "\n";
  return o;
}

std::string format_detections_csv(const std::map<std::string, ClassScore>& scores) {
  std::string o = "class,true_positives,false_positives,false_negatives,precision,recall\n";
  for (const auto& [cls, s] : scores)
    o += cls + "," + std::to_string(s.true_positives) + "," + std::to_string(s.false_positives) + "," +
         std::to_string(s.false_negatives) + "," + fixed(s.precision()) + "," + fixed(s.recall()) + "\n";
  return o;
}

std::string format_sweep_csv(std::span<const SweepPoint> points) {
  std::string o = "rate_per_hour,exact,within_one,timed_exact,timed_within_one\n";
  for (const auto& p : points)
    o += fixed(p.rate_per_hour) + "," + fixed(p.report.all.exact()) + "," + fixed(p.report.all.within_one()) + "," +
         fixed(p.report.timed.exact()) + "," + fixed(p.report.timed.within_one()) + "\n";
  return o;
}

}  // namespace lanequest
