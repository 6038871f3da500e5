#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lanequest/events.hpp"
#include "lanequest/geo.hpp"

namespace lanequest {

/// A landmark with a known (or learned) lane distribution P(lane | anchor).
struct Anchor {
  std::string id;
  AnchorKind kind{AnchorKind::Curve};
  LatLon centroid;
  std::vector<double> lane_distribution;
  double feature_mean{};
  double feature_spread{};
  int support_count{};
  friend bool operator==(const Anchor&, const Anchor&) = default;
};

/// Throws ValidationError on an empty or whitespace-bearing id, a bad
/// distribution, non-finite numbers or negative support.
void validate(const Anchor& a);

/// Key for the per-kind perception sigma.
std::string sigma_key(AnchorKind kind);

/// Anchors indexed by id plus a uniform lat/lon grid over centroids.
class AnchorStore {
 public:
  /// Validates, then inserts or replaces the anchor with the same id.
  void insert(Anchor a);
  bool erase(const std::string& id);

  const Anchor* find(const std::string& id) const;
  std::size_t size() const { return anchors_.size(); }
  bool empty() const { return anchors_.empty(); }

  /// Anchors within `radius_m` (haversine, inclusive) whose kind is in
  /// `kinds` (all kinds when empty), sorted by distance then id.
  /// Throws DomainError when radius_m <= 0.
  std::vector<const Anchor*> query_nearby(const LatLon& where, double radius_m,
                                          std::span<const AnchorKind> kinds = {}) const;

  /// All anchors in id order.
  std::vector<const Anchor*> all() const;

  void set_sigma(const std::string& key, double sigma);
  std::optional<double> sigma(const std::string& key) const;
  const std::map<std::string, double>& sigmas() const { return sigmas_; }

  friend bool operator==(const AnchorStore& a, const AnchorStore& b) {
    return a.anchors_ == b.anchors_ && a.sigmas_ == b.sigmas_;
  }

 private:
  using Cell = std::pair<long long, long long>;
  static Cell cell_of(const LatLon& p);
  void unindex(const Anchor& a);

  std::map<std::string, Anchor> anchors_;
  std::map<Cell, std::vector<std::string>> grid_;
  std::map<std::string, double> sigmas_;
};

/// `#lanequest-anchors v1` text format. Throws ParseError (with line) on a
/// corrupt record or a version mismatch.
std::string format_anchors(const AnchorStore& store);
AnchorStore parse_anchors_text(std::string_view text);
void save_anchors(const AnchorStore& store, const std::string& path);
AnchorStore load_anchors(const std::string& path);

}  // namespace lanequest
