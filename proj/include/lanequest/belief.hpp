#pragma once

#include <span>
#include <vector>

namespace lanequest {

inline constexpr double kBeliefTolerance = 1e-9;

/// Probability mass over the lanes of the current road segment.
/// Lane indices are 1-based: lane 1 is the left-most lane.
class LaneBelief {
 public:
  /// Validates: non-empty, entries >= 0, sum within kBeliefTolerance of 1.
  explicit LaneBelief(std::vector<double> probs);

  static LaneBelief uniform(int lane_count);

  /// Scales non-negative weights to sum 1. Throws DomainError when the
  /// weights are all zero or not finite.
  static LaneBelief normalized(std::vector<double> weights);

  int lane_count() const { return static_cast<int>(p_.size()); }
  std::span<const double> probs() const { return p_; }
  const std::vector<double>& vector() const { return p_; }
  double at(int lane) const { return p_.at(static_cast<std::size_t>(lane - 1)); }
  double max() const;

  friend bool operator==(const LaneBelief&, const LaneBelief&) = default;

 private:
  std::vector<double> p_;
};

/// True when `p` is a valid distribution (entries >= 0, sum 1 +- tol).
bool is_distribution(std::span<const double> p, double tol = kBeliefTolerance);

}  // namespace lanequest
