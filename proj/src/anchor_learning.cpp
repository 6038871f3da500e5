#include "lanequest/anchor_learning.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>

#include "lanequest/error.hpp"
#include "lanequest/lane_filter.hpp"

namespace lanequest {

namespace {

constexpr double kMetersPerDegree = kEarthRadiusM * std::numbers::pi / 180.0;

// 1-D DBSCAN on values already in processing order.
Clustering dbscan_1d(const std::vector<double>& v, double eps, std::size_t min_pts) {
  std::vector<std::size_t> by_value(v.size());
  std::iota(by_value.begin(), by_value.end(), 0);
  std::stable_sort(by_value.begin(), by_value.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> sorted(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) sorted[k] = v[by_value[k]];
  return dbscan(v.size(), min_pts, [&](std::size_t i) {
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), v[i] - eps);
    std::vector<std::size_t> out;
    for (auto it = lo; it != sorted.end() && *it <= v[i] + eps; ++it) {
      const std::size_t j = by_value[static_cast<std::size_t>(it - sorted.begin())];
      if (std::abs(v[j] - v[i]) <= eps) out.push_back(j);
    }
    std::sort(out.begin(), out.end());
    return out;
  });
}

std::string slug(AnchorKind k) {
  std::string s(to_string(k));
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string make_id(AnchorKind k, int seq) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", seq);
  return slug(k) + "-" + buf;
}

}  // namespace

void validate(const ClusterParams& p) {
  if (!(p.spatial_eps_m > 0.0) || !(p.curve_feature_eps_m > 0.0) || !(p.tunnel_feature_eps_log > 0.0))
    throw ValidationError("cluster eps values must be positive");
  if (p.min_pts < 2) throw ValidationError("min_pts must be at least 2");
  if (!(p.bootstrap_prior_weight >= 0.0)) throw ValidationError("bootstrap prior weight must be >= 0");
  if (!(p.anomaly_concentration > 0.0)) throw ValidationError("anomaly concentration must be positive");
}

Clustering dbscan(std::size_t n, std::size_t min_pts,
                  const std::function<std::vector<std::size_t>(std::size_t)>& neighbors) {
  constexpr int kUnset = -1;
  std::vector<int> label(n, kUnset);
  std::vector<char> core(n, 0);
  std::vector<std::vector<std::size_t>> nbrs(n);
  for (std::size_t i = 0; i < n; ++i) {
    nbrs[i] = neighbors(i);
    core[i] = nbrs[i].size() >= min_pts;
  }
  Clustering out;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] != kUnset || !core[i]) continue;
    const int c = static_cast<int>(out.clusters.size());
    out.clusters.emplace_back();
    std::deque<std::size_t> queue{i};
    label[i] = c;
    while (!queue.empty()) {
      const std::size_t q = queue.front();
      queue.pop_front();
      out.clusters.back().push_back(q);
      if (!core[q]) continue;
      for (std::size_t j : nbrs[q]) {
        if (label[j] != kUnset) continue;
        label[j] = c;
        queue.push_back(j);
      }
    }
    std::sort(out.clusters.back().begin(), out.clusters.back().end());
  }
  for (std::size_t i = 0; i < n; ++i)
    if (label[i] == kUnset) out.noise.push_back(i);
  return out;
}

std::vector<std::size_t> canonical_order(std::span<const AnchorObservation> obs) {
  std::vector<std::size_t> idx(obs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) {
    if (obs[a].t != obs[b].t) return obs[a].t < obs[b].t;
    return obs[a].id < obs[b].id;
  });
  return idx;
}

Clustering spatial_cluster(std::span<const AnchorObservation> obs, const ClusterParams& p) {
  const std::vector<std::size_t> order = canonical_order(obs);
  const std::size_t n = order.size();
  // Latitude-sorted view for candidate search.
  std::vector<std::size_t> by_lat(n);
  std::iota(by_lat.begin(), by_lat.end(), 0);
  std::stable_sort(by_lat.begin(), by_lat.end(),
                   [&](auto a, auto b) { return obs[order[a]].location.lat < obs[order[b]].location.lat; });
  std::vector<double> lats(n);
  for (std::size_t k = 0; k < n; ++k) lats[k] = obs[order[by_lat[k]]].location.lat;
  const double dlat = p.spatial_eps_m * 1.01 / kMetersPerDegree;

  Clustering c = dbscan(n, p.min_pts, [&](std::size_t i) {
    const LatLon& a = obs[order[i]].location;
    std::vector<std::size_t> out;
    auto it = std::lower_bound(lats.begin(), lats.end(), a.lat - dlat);
    for (; it != lats.end() && *it <= a.lat + dlat; ++it) {
      const std::size_t j = by_lat[static_cast<std::size_t>(it - lats.begin())];
      if (haversine_m(a, obs[order[j]].location) <= p.spatial_eps_m) out.push_back(j);
    }
    std::sort(out.begin(), out.end());
    return out;
  });
  // Back to input indices; cluster order and membership follow canonical order.
  for (auto& cl : c.clusters)
    for (auto& i : cl) i = order[i];
  for (auto& i : c.noise) i = order[i];
  return c;
}

Clustering feature_cluster(std::span<const AnchorObservation> obs, std::span<const std::size_t> members,
                           const ClusterParams& p) {
  Clustering c;
  if (members.empty()) return c;
  const AnchorKind kind = obs[members.front()].kind;
  if (kind != AnchorKind::Curve && kind != AnchorKind::TunnelLaneFeature) {
    c.clusters.emplace_back(members.begin(), members.end());
    return c;
  }
  std::vector<double> v;
  v.reserve(members.size());
  for (std::size_t m : members) {
    const auto& f = obs[m].feature;
    if (!f) throw DomainError("feature clustering needs a feature on every observation");
    v.push_back(kind == AnchorKind::TunnelLaneFeature ? std::log(std::max(*f, 1e-12)) : *f);
  }
  const double eps = kind == AnchorKind::TunnelLaneFeature ? p.tunnel_feature_eps_log : p.curve_feature_eps_m;
  Clustering local = dbscan_1d(v, eps, p.min_pts);
  for (auto& cl : local.clusters) {
    for (auto& i : cl) i = members[i];
    c.clusters.push_back(std::move(cl));
  }
  for (auto i : local.noise) c.noise.push_back(members[i]);
  return c;
}

std::vector<double> aggregate_distribution(std::span<const LaneBelief> beliefs) {
  if (beliefs.empty()) throw DomainError("cannot aggregate an empty set of beliefs");
  const int n = beliefs.front().lane_count();
  std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
  for (const auto& b : beliefs) {
    if (b.lane_count() != n) throw DomainError("aggregation over beliefs with different lane counts");
    for (int i = 0; i < n; ++i) acc[static_cast<std::size_t>(i)] += b.probs()[static_cast<std::size_t>(i)];
  }
  const double c = static_cast<double>(beliefs.size());
  for (double& v : acc) v /= c;
  // Guard the last ulp so the result validates as a distribution.
  return LaneBelief::normalized(std::move(acc)).vector();
}

AnchorKind classify_anomaly_span(std::span<const double> d, double concentration) {
  if (d.empty()) throw DomainError("empty distribution");
  const double mx = *std::max_element(d.begin(), d.end());
  return mx >= concentration / static_cast<double>(d.size()) ? AnchorKind::Pothole : AnchorKind::CalmingDevice;
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DomainError("total variation needs equal-length distributions");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

LearnResult learn_anchors(std::span<const AnchorObservation> corpus, const ClusterParams& p) {
  validate(p);
  LearnResult result;
  std::map<AnchorKind, std::vector<std::size_t>> by_kind;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& o = corpus[i];
    if (!o.reporter_belief) continue;
    if ((o.kind == AnchorKind::MergeLane || o.kind == AnchorKind::ExitLane) && !o.taken) continue;
    if (has_feature(o.kind) && !o.feature) continue;
    by_kind[o.kind].push_back(i);
  }

  std::map<AnchorKind, int> seq;
  std::map<AnchorKind, std::vector<double>> residuals;
  for (const auto& [kind, idx] : by_kind) {
    std::vector<AnchorObservation> subset;
    subset.reserve(idx.size());
    for (std::size_t i : idx) subset.push_back(corpus[i]);
    const Clustering spatial = spatial_cluster(subset, p);
    result.noise_points += spatial.noise.size();

    for (const auto& cl : spatial.clusters) {
      // Canonical order inside the cluster drives the convergence trace.
      std::vector<std::size_t> members = cl;
      std::stable_sort(members.begin(), members.end(), [&](auto a, auto b) {
        if (subset[a].t != subset[b].t) return subset[a].t < subset[b].t;
        return subset[a].id < subset[b].id;
      });
      LatLon centroid{};
      for (std::size_t m : members) {
        centroid.lat += subset[m].location.lat;
        centroid.lon += subset[m].location.lon;
      }
      centroid.lat /= static_cast<double>(members.size());
      centroid.lon /= static_cast<double>(members.size());

      const Clustering feat = feature_cluster(subset, members, p);
      result.noise_points += feat.noise.size();
      for (auto sub : feat.clusters) {
        std::stable_sort(sub.begin(), sub.end(), [&](auto a, auto b) {
          if (subset[a].t != subset[b].t) return subset[a].t < subset[b].t;
          return subset[a].id < subset[b].id;
        });
        // Majority lane count; other reporters are re-projected onto it.
        std::map<int, std::size_t> counts;
        for (std::size_t m : sub) ++counts[subset[m].reporter_belief->lane_count()];
        int n = counts.begin()->first;
        for (const auto& [k, c] : counts)
          if (c > counts[n]) n = k;

        LearnedAnchor la;
        std::vector<double> running(static_cast<std::size_t>(n), 0.0), prev;
        std::vector<LaneBelief> beliefs;
        double fsum = 0.0, fsq = 0.0;
        std::size_t right_side = 0;
        for (std::size_t k = 0; k < sub.size(); ++k) {
          const auto& o = subset[sub[k]];
          beliefs.push_back(reproject_belief(*o.reporter_belief, n));
          for (int i = 0; i < n; ++i)
            running[static_cast<std::size_t>(i)] += beliefs.back().probs()[static_cast<std::size_t>(i)];
          std::vector<double> cur(running);
          for (double& v : cur) v /= static_cast<double>(k + 1);
          if (!prev.empty()) la.convergence.push_back(tv_distance(cur, prev));
          prev = std::move(cur);
          const double f = o.feature.value_or(0.0);
          fsum += f;
          fsq += f * f;
          if (o.side == Side::Right) ++right_side;
          la.members.push_back(idx[sub[k]]);
        }
        std::vector<double> dist = aggregate_distribution(beliefs);
        AnchorKind out_kind = kind;
        if (is_bootstrap(kind)) {
          const Side side = 2 * right_side >= sub.size() ? Side::Right : Side::Left;
          const double c = static_cast<double>(sub.size());
          const double w = c / (c + p.bootstrap_prior_weight);
          const std::vector<double> prior = bootstrap_prior(kind, side, n);
          for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = w * dist[i] + (1.0 - w) * prior[i];
          dist = LaneBelief::normalized(std::move(dist)).vector();
        }
        if (kind == AnchorKind::SurfaceAnomaly) out_kind = classify_anomaly_span(dist, p.anomaly_concentration);

        const double c = static_cast<double>(sub.size());
        const double mean = fsum / c;
        la.anchor.id = make_id(out_kind, ++seq[out_kind]);
        la.anchor.kind = out_kind;
        la.anchor.centroid = centroid;
        la.anchor.lane_distribution = dist;
        la.anchor.feature_mean = mean;
        la.anchor.feature_spread = std::sqrt(std::max(0.0, fsq / c - mean * mean));
        la.anchor.support_count = static_cast<int>(sub.size());
        const int lane = argmax_lane(dist);
        for (const auto& b : beliefs) residuals[out_kind].push_back(std::abs(argmax_lane(b) - lane));
        result.anchors.push_back(std::move(la));
      }
    }
  }
  for (const auto& [kind, r] : residuals) result.sigmas[sigma_key(kind)] = estimate_sigma_mad(r);
  return result;
}

void add_to_store(const LearnResult& r, AnchorStore& store) {
  for (const auto& la : r.anchors) store.insert(la.anchor);
  for (const auto& [key, s] : r.sigmas) store.set_sigma(key, s);
}

}  // namespace lanequest
