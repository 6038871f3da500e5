#pragma once

// Discrete Markov lane estimator.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "lanequest/anchor_store.hpp"
#include "lanequest/belief.hpp"
#include "lanequest/events.hpp"

namespace lanequest {

enum class Motion { Left = 0, Right = 1, None = 2 };

/// Rows: detected kind, columns: actual kind, both ordered {left, right,
/// none}. Entry (d, a) is the weight of actual motion a when d is detected.
struct MotionConfusion {
  std::array<std::array<double, 3>, 3> m{};

  double operator()(Motion detected, Motion actual) const {
    return m[static_cast<std::size_t>(detected)][static_cast<std::size_t>(actual)];
  }
  static MotionConfusion perfect();
  /// Rates measured on the simulator at default noise.
  static MotionConfusion calibrated();
  friend bool operator==(const MotionConfusion&, const MotionConfusion&) = default;
};

/// Throws ValidationError unless entries are finite, non-negative and the
/// left/right rows carry some weight.
void validate(const MotionConfusion& c);

LaneBelief init_belief(int lane_count);

/// Total-probability step over the +-1/stay kernel. Transitions that would
/// leave the road land on the boundary lane.
LaneBelief motion_update(const LaneBelief& belief, MotionKind detected, const MotionConfusion& confusion);

struct PerceptionResult {
  LaneBelief belief;
  bool mismatch{false};  // likelihood vanished wherever the prior had mass
};

/// Weighted Gaussian likelihood P(l|a) * N(|l - l_a| / sigma) with l_a the
/// argmax of the anchor distribution.
std::vector<double> perception_likelihood(std::span<const double> anchor_distribution, double sigma);

/// Bayes step with the likelihood above. On mismatch the prior is returned
/// unchanged. Throws DomainError on lane-count mismatch or sigma <= 0.
PerceptionResult perception_update(const LaneBelief& belief, std::span<const double> anchor_distribution,
                                   double sigma);

inline constexpr double kSigmaFloor = 0.25;
inline constexpr double kDefaultSigma = 1.0;

/// 1.4826 x lower median, floored at kSigmaFloor; kDefaultSigma when empty.
double estimate_sigma_mad(std::span<const double> residuals);

/// 1-based lowest-index maximizer.
int argmax_lane(std::span<const double> p);
inline int argmax_lane(const LaneBelief& b) { return argmax_lane(b.probs()); }

/// c(l) proportional to max(p) - p(l); uniform when p is uniform.
std::vector<double> complement_distribution(std::span<const double> p);

/// Stretches the cumulative mass function onto `lane_count` lanes.
LaneBelief reproject_belief(const LaneBelief& belief, int lane_count);

/// Fallback distribution for a bootstrap observation with no stored anchor:
/// skewed toward the lane the maneuver requires.
std::vector<double> bootstrap_prior(AnchorKind kind, Side side, int lane_count);

struct FilterConfig {
  MotionConfusion confusion = MotionConfusion::calibrated();
  double association_radius_m = 30.0;
  /// Use bootstrap_prior when the repository has no anchor for a bootstrap
  /// observation.
  bool bootstrap_fallback = true;
  /// Apply organic observations (curves, tunnels, surface anomalies).
  bool use_organic = true;
  /// Sigma for the complement update of a passed merge/exit lane. Wide,
  /// because the complement's argmax is not where the car is.
  double negative_sigma = 3.0;
};

enum class UpdateSource { Init, Motion, Perception, Segment };

struct LaneEstimate {
  double t{};
  int lane{1};
  LaneBelief belief{std::vector<double>{1.0}};
  UpdateSource source{UpdateSource::Init};
};

struct FilterDiagnostics {
  std::size_t motion_updates{};
  std::size_t perception_updates{};
  std::size_t segment_changes{};
  std::size_t fallback_priors{};
  std::size_t no_anchor{};
  std::size_t calming_skipped{};
  std::size_t lane_count_mismatch{};
  std::size_t anchor_mismatch{};
};

struct FilterRun {
  std::vector<LaneEstimate> estimates;
  /// Belief just before each event was applied, parallel to the input.
  std::vector<LaneBelief> prior_beliefs;
  FilterDiagnostics diagnostics;
};

/// Runs the filter over time-ordered events starting from a uniform belief
/// over `lane_count` lanes. Emits one estimate up front, at `t_start` or else
/// the first event's time, and one after each applied update.
FilterRun run_filter(std::span<const DetectedEvent> events, const AnchorStore& store, const FilterConfig& cfg,
                     int lane_count, std::optional<double> t_start = std::nullopt);

/// Fixed-interval smoothing over a whole trip: for every observation, the
/// belief given all other events before and after it. Other entries are the
/// forward prior, as in FilterRun::prior_beliefs.
std::vector<LaneBelief> smoothed_priors(std::span<const DetectedEvent> events, const AnchorStore& store,
                                        const FilterConfig& cfg, int lane_count);

}  // namespace lanequest
