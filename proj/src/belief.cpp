#include "lanequest/belief.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lanequest/error.hpp"

namespace lanequest {

bool is_distribution(std::span<const double> p, double tol) {
  if (p.empty()) return false;
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

LaneBelief::LaneBelief(std::vector<double> probs) : p_(std::move(probs)) {
  if (p_.empty()) throw ValidationError("lane belief needs at least one lane");
  if (!is_distribution(p_)) throw ValidationError("lane belief must be non-negative and sum to 1");
}

LaneBelief LaneBelief::uniform(int lane_count) {
  if (lane_count < 1) throw DomainError("invalid road: lane count must be >= 1");
  return LaneBelief(std::vector<double>(static_cast<std::size_t>(lane_count), 1.0 / lane_count));
}

LaneBelief LaneBelief::normalized(std::vector<double> weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("belief weights must be finite and non-negative");
    sum += w;
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) throw DomainError("degenerate belief: all weights are zero");
  for (double& w : weights) w /= sum;
  return LaneBelief(std::move(weights));
}

double LaneBelief::max() const { return *std::max_element(p_.begin(), p_.end()); }

}  // namespace lanequest
