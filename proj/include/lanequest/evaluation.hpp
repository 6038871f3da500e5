#pragma once

// Accuracy reports against simulator ground truth.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lanequest/error.hpp"
#include "lanequest/events.hpp"
#include "lanequest/lane_filter.hpp"
#include "lanequest/simulator.hpp"

namespace lanequest {

class EvaluationError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Counts of lane errors |estimate - truth|.
struct Tally {
  std::vector<std::size_t> errors;  // errors[k] = comparisons off by k lanes

  void add(int error);
  void merge(const Tally& other);
  std::size_t total() const;
  double exact() const;       // 0 when empty
  double within_one() const;  // 0 when empty
  /// (error, cumulative fraction) pairs, ending at 1.
  std::vector<std::pair<int, double>> cdf() const;
};

struct EvalReport {
  Tally all;     // every estimate
  Tally steady;  // estimates after the transient
  /// One comparison per second of the trip, and the same after the transient.
  Tally timed;
  Tally timed_steady;
  double transient_s{};
  std::size_t trips{};

  void merge(const EvalReport& other);
};

/// Scores each estimate against the latest truth label at or before it. The
/// transient is the prefix before the first perception update whose belief
/// peaks at >= `transient_peak`. Throws EvaluationError when no estimate
/// falls inside the labelled span.
EvalReport evaluate(std::span<const LaneEstimate> estimates, std::span<const LaneLabel> truth, double t_end,
                    double transient_peak = 0.6);

/// Nearest lane to each snapped fix's lateral offset.
std::vector<LaneEstimate> gps_lane_estimates(std::span<const SnappedFix> fixes, const RoadMap& map,
                                             double lane_width = 3.5);

/// Keeps round(rate * hours) anchor observations chosen uniformly at random;
/// lane changes and segment changes always stay. Returns the input when it
/// already has fewer.
std::vector<DetectedEvent> subsample_events(std::span<const DetectedEvent> events, double rate_per_hour,
                                            double duration_s, std::uint64_t seed);

struct ClassScore {
  std::size_t true_positives{};
  std::size_t false_positives{};
  std::size_t false_negatives{};
  double precision() const;  // 1 when nothing was detected
  double recall() const;     // 1 when nothing was expected
  void merge(const ClassScore& o);
};

/// Class name of a detected event, or of a ledger entry ("" when the
/// ledger entry has no detector, like a short halt).
std::string detection_class(const DetectedEvent& e);
std::string ledger_class(const LedgerEntry& e);

/// Greedy one-to-one matching of detections to ledger entries of the same
/// class within a per-class time tolerance.
std::map<std::string, ClassScore> score_detections(std::span<const DetectedEvent> detected,
                                                   std::span<const LedgerEntry> ledger);

void merge_scores(std::map<std::string, ClassScore>& into, const std::map<std::string, ClassScore>& from);

struct SweepPoint {
  double rate_per_hour{};
  EvalReport report;
};

/// CSV reports with a header row and fixed six-decimal numbers.
std::string format_report_csv(const EvalReport& r);
std::string format_cdf_csv(const EvalReport& r);
std::string format_detections_csv(const std::map<std::string, ClassScore>& scores);
std::string format_sweep_csv(std::span<const SweepPoint> points);

}  // namespace lanequest
