#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <numbers>
#include <optional>
#include <random>
#include <unistd.h>
#include <string>
#include <variant>
#include <vector>

#include "lanequest/anchor_learning.hpp"
#include "lanequest/anchor_store.hpp"
#include "lanequest/geo.hpp"
#include "lanequest/belief.hpp"
#include "lanequest/events.hpp"
#include "lanequest/lane_filter.hpp"

namespace lqtest {

using namespace lanequest;

/// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("lanequest-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline double sum(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s;
}

inline bool valid_belief(std::span<const double> p) {
  double s = 0;
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x)) return false;
    s += x;
  }
  return std::abs(s - 1.0) <= 1e-9;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------------------
// Brute-force forward recursion, written from the model definition rather
// than from the filter code.

/// Transition: enumerate every (previous lane, actual motion) pair, weight
/// it by P(detected | actual), and land it on the boundary when it would
/// leave the road.
inline std::vector<double> oracle_motion(const std::vector<double>& prior, int detected,
                                         const MotionConfusion& c) {
  const int n = static_cast<int>(prior.size());
  std::vector<double> out(prior.size(), 0.0);
  const int shift[3] = {-1, +1, 0};  // actual left, right, none
  for (int prev = 0; prev < n; ++prev)
    for (int actual = 0; actual < 3; ++actual) {
      const int next = std::clamp(prev + shift[actual], 0, n - 1);
      out[static_cast<std::size_t>(next)] += c.m[static_cast<std::size_t>(detected)][static_cast<std::size_t>(actual)] *
                                             prior[static_cast<std::size_t>(prev)];
    }
  const double s = sum(out);
  for (double& x : out) x /= s;
  return out;
}

/// Bayes step with P(l|a) times a Gaussian in |l - argmax|. Returns nullopt
/// when the product vanishes (the filter skips such updates).
inline std::optional<std::vector<double>> oracle_perception(const std::vector<double>& prior,
                                                            const std::vector<double>& anchor, double sigma) {
  std::size_t la = 0;
  for (std::size_t i = 1; i < anchor.size(); ++i)
    if (anchor[i] > anchor[la]) la = i;
  std::vector<double> out(prior.size());
  for (std::size_t l = 0; l < prior.size(); ++l) {
    const double z = (static_cast<double>(l) - static_cast<double>(la)) / sigma;
    const double g = std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * sigma);
    out[l] = prior[l] * anchor[l] * g;
  }
  const double s = sum(out);
  if (!(s > 0.0)) return std::nullopt;
  for (double& x : out) x /= s;
  return out;
}

inline std::vector<double> oracle_complement(const std::vector<double>& p) {
  const double mx = *std::max_element(p.begin(), p.end());
  std::vector<double> c(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) c[i] = mx - p[i];
  const double s = sum(c);
  if (!(s > 0.0)) return std::vector<double>(p.size(), 1.0 / static_cast<double>(p.size()));
  for (double& x : c) x /= s;
  return c;
}

// ---------------------------------------------------------------------------
// A tiny world with three anchor archetypes, placed far apart:
//   0: a curve whose distribution leans to the outer lane
//   1: a surface anomaly resolved to a learned pothole
//   2: an exit lane on the right that the car drove past (complement update)

struct Archetype {
  AnchorKind observed;
  AnchorKind stored;
  LatLon where;
  std::vector<double> distribution;
  double sigma;
  bool taken{true};
};

inline std::vector<double> skewed(int n, int peak, double spread) {
  std::vector<double> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = std::exp(-std::abs(i - peak) / spread) + 0.02;
  const double s = sum(p);
  for (double& x : p) x /= s;
  return p;
}

inline std::vector<Archetype> archetypes(int n) {
  return {
      {AnchorKind::Curve, AnchorKind::Curve, {31.2000, 29.9000}, skewed(n, 0, 0.6), 0.7},
      {AnchorKind::SurfaceAnomaly, AnchorKind::Pothole, {31.2100, 29.9000}, skewed(n, n / 2, 0.4), 1.3},
      {AnchorKind::ExitLane, AnchorKind::ExitLane, {31.2200, 29.9000}, skewed(n, n - 1, 0.8), 0.5, false},
  };
}

inline AnchorStore archetype_store(int n) {
  AnchorStore store;
  int k = 0;
  for (const auto& a : archetypes(n)) {
    Anchor an;
    an.id = "arch" + std::to_string(k++);
    an.kind = a.stored;
    an.centroid = a.where;
    an.lane_distribution = a.distribution;
    an.feature_mean = a.observed == AnchorKind::Curve ? 150.0 : 0.0;
    an.support_count = 10;
    store.insert(an);
    store.set_sigma(sigma_key(a.stored), a.sigma);
  }
  return store;
}

/// Symbols 0/1 are left/right changes; 2..4 observe archetype symbol-2.
inline DetectedEvent make_event(int symbol, int n, double t) {
  if (symbol < 2) return MotionEvent{t, symbol == 0 ? MotionKind::LeftChange : MotionKind::RightChange, 2.0, t};
  const auto a = archetypes(n)[static_cast<std::size_t>(symbol - 2)];
  AnchorObservation o;
  o.t = o.t_begin = o.t_end = t;
  o.kind = a.observed;
  o.location = a.where;
  if (a.observed == AnchorKind::Curve) o.feature = 150.0;
  if (a.observed == AnchorKind::SurfaceAnomaly) o.feature = 4.0;
  o.side = Side::Right;
  o.taken = a.taken;
  return o;
}

/// Beliefs after each applied update, starting with the uniform prior.
inline std::vector<std::vector<double>> oracle_run(const std::vector<int>& symbols, int n,
                                                   const MotionConfusion& c, double negative_sigma) {
  std::vector<double> bel(static_cast<std::size_t>(n), 1.0 / n);
  std::vector<std::vector<double>> out{bel};
  const auto arch = archetypes(n);
  for (int s : symbols) {
    if (s < 2) {
      bel = oracle_motion(bel, s, c);
      out.push_back(bel);
      continue;
    }
    const auto& a = arch[static_cast<std::size_t>(s - 2)];
    const auto dist = a.taken ? a.distribution : oracle_complement(a.distribution);
    const auto post = oracle_perception(bel, dist, a.taken ? a.sigma : negative_sigma);
    if (!post) continue;
    bel = *post;
    out.push_back(bel);
  }
  return out;
}

inline MotionConfusion random_confusion(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MotionConfusion c;
  for (auto& row : c.m) {
    double s = 0;
    for (double& v : row) s += (v = u(rng) + 1e-3);
    for (double& v : row) v /= s;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Clustering oracle

/// An observation at a local offset from (31.2, 29.9).
inline AnchorObservation obs_at(Point2 p, double t, std::uint64_t id, AnchorKind kind = AnchorKind::Curve,
                                double feature = 100.0) {
  AnchorObservation o;
  o.t = o.t_begin = o.t_end = t;
  o.kind = kind;
  o.location = LocalFrame({31.2, 29.9}).to_latlon(p);
  if (has_feature(kind)) o.feature = feature;
  o.id = id;
  return o;
}

using ClusterSet = std::set<std::set<std::size_t>>;

inline ClusterSet as_set(const Clustering& c) {
  ClusterSet out;
  for (const auto& cl : c.clusters) out.emplace(cl.begin(), cl.end());
  return out;
}

/// Density connectivity from scratch: core components by union-find, each
/// border point joins the earliest-founded component it touches, where a
/// component is founded by its first core point in visiting order.
inline ClusterSet oracle_dbscan(std::size_t n, std::size_t min_pts, const std::function<bool(std::size_t, std::size_t)>& near,
                         std::set<std::size_t>* noise = nullptr) {
  std::vector<char> core(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = 0;
    for (std::size_t j = 0; j < n; ++j) k += near(i, j);
    core[i] = k >= min_pts;
  }
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  const std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    return parent[x] == x ? x : parent[x] = find(parent[x]);
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (core[i] && core[j] && near(i, j)) parent[std::max(find(i), find(j))] = std::min(find(i), find(j));
  // Roots are the smallest member, which is also the founding core.
  std::map<std::size_t, std::set<std::size_t>> comp;
  for (std::size_t i = 0; i < n; ++i)
    if (core[i]) comp[find(i)].insert(i);
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    std::optional<std::size_t> best;
    for (std::size_t j = 0; j < n; ++j)
      if (core[j] && near(i, j) && (!best || find(j) < *best)) best = find(j);
    if (best)
      comp[*best].insert(i);
    else if (noise)
      noise->insert(i);
  }
  ClusterSet out;
  for (auto& [root, members] : comp) out.insert(members);
  return out;
}

/// Maps oracle positions (canonical order) back to observation indices.
inline ClusterSet remap(const ClusterSet& s, const std::vector<std::size_t>& order) {
  ClusterSet out;
  for (const auto& cl : s) {
    std::set<std::size_t> m;
    for (std::size_t i : cl) m.insert(order[i]);
    out.insert(m);
  }
  return out;
}

inline std::vector<double> dirichlet(std::mt19937_64& rng, const std::vector<double>& alpha) {
  std::vector<double> out;
  for (double a : alpha) out.push_back(std::gamma_distribution<double>(a, 1.0)(rng));
  const double s = lqtest::sum(out);
  for (double& v : out) v /= s;
  return out;
}

// ---------------------------------------------------------------------------

/// Scenario text with a header and zero noise unless overridden.
inline std::string scenario(const std::string& body) { return "#lanequest-scenario v1\n" + body; }

inline std::string quiet_noise() { return "noise accel 0 gyro 0 mag 0 yaw 0 gps 0 gps_bias 0\n"; }

}  // namespace lqtest
