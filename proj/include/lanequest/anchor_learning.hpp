#pragma once

// Crowd learning of anchors: spatial DBSCAN, per-lane feature DBSCAN, then
// averaging of the reporters' lane beliefs.

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lanequest/anchor_store.hpp"
#include "lanequest/events.hpp"

namespace lanequest {

struct ClusterParams {
  double spatial_eps_m = 15.0;
  double curve_feature_eps_m = 1.5;
  /// Tunnel variances are clustered on a log scale.
  double tunnel_feature_eps_log = 0.2;
  std::size_t min_pts = 5;
  /// Bootstrap anchors mix prior and aggregate with weight c / (c + this).
  double bootstrap_prior_weight = 10.0;
  /// Pothole when the aggregate's max entry is at least this over n.
  double anomaly_concentration = 2.0;
};

void validate(const ClusterParams& p);

struct Clustering {
  std::vector<std::vector<std::size_t>> clusters;  // ascending indices
  std::vector<std::size_t> noise;
};

/// DBSCAN over points 0..n-1 visited in index order. `neighbors(i)` returns
/// every j (including i) within eps of i. Border points join the first
/// cluster that reaches them.
Clustering dbscan(std::size_t n, std::size_t min_pts,
                  const std::function<std::vector<std::size_t>(std::size_t)>& neighbors);

/// Canonical processing order: by time, then id.
std::vector<std::size_t> canonical_order(std::span<const AnchorObservation> obs);

/// Haversine DBSCAN on observation locations. Returned indices refer to
/// `obs`; points are visited in canonical order.
Clustering spatial_cluster(std::span<const AnchorObservation> obs, const ClusterParams& p);

/// One-dimensional DBSCAN on feature values over the given members of a
/// spatial cluster. Kinds without a lane-discriminating feature pass
/// through as one cluster.
Clustering feature_cluster(std::span<const AnchorObservation> obs, std::span<const std::size_t> members,
                           const ClusterParams& p);

/// Entrywise mean. Throws DomainError on empty input or mixed lane counts.
std::vector<double> aggregate_distribution(std::span<const LaneBelief> beliefs);

AnchorKind classify_anomaly_span(std::span<const double> distribution, double concentration = 2.0);

/// Half the L1 distance. Throws DomainError on length mismatch.
double tv_distance(std::span<const double> p, std::span<const double> q);

struct LearnedAnchor {
  Anchor anchor;
  /// TV distance between successive running aggregates, one entry per
  /// observation after the first.
  std::vector<double> convergence;
  std::vector<std::size_t> members;  // indices into the corpus
};

struct LearnResult {
  std::vector<LearnedAnchor> anchors;
  std::map<std::string, double> sigmas;  // by sigma_key
  std::size_t noise_points{};
};

/// Learns anchors from observations that carry reporter beliefs. Passed
/// merge/exit observations and observations without a belief are ignored.
LearnResult learn_anchors(std::span<const AnchorObservation> corpus, const ClusterParams& p = {});

/// Inserts learned anchors and sigmas into a store.
void add_to_store(const LearnResult& r, AnchorStore& store);

}  // namespace lanequest
