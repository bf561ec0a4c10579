#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "entprog/denoiser.hpp"
#include "entprog/diffusion.hpp"
#include "entprog/synth_data.hpp"

namespace entprog {

/// Below this pooled standard deviation a prediction set is degenerate.
inline constexpr double kDispersionFloor = 1e-8;

/// What the dispersion is measured on.
enum class DispersionEstimator {
  kPredictions,  // eps_hat
  kErrors,       // eps_hat - eps
};

DispersionEstimator parse_dispersion_estimator(const std::string& name);
std::string to_string(DispersionEstimator e);

/// Tuples sharing one condition; tau and eps vary, and stay fixed across the
/// full and skipped evaluations.
struct PriorityGroup {
  Vector condition;
  std::vector<int> taus;
  Matrix x_tau;  // input x n
  Matrix eps;    // input x n

  std::size_t size() const { return taus.size(); }
  DenoiserInput as_input() const;
};

struct PrioritySampleSet {
  std::vector<PriorityGroup> groups;

  std::size_t size() const;
};

/// N tuples split over `num_groups` distinct training conditions (sizes differ
/// by at most one). Taus are uniform over [0, T).
PrioritySampleSet make_priority_samples(const SyntheticDataset& data, const NoiseSchedule& sched, std::size_t num_samples,
                                        std::size_t num_groups, std::uint64_t seed);

/// Population standard deviation of every element of `values` about their
/// pooled mean.
double pooled_std(const Matrix& values);

/// Pooled dispersion of the model's predictions over one condition group.
/// Throws DegenerateModelError below kDispersionFloor.
double pooled_sigma(const BlockwiseDenoiser& model, const PriorityGroup& group, const SkipSet& skip,
                    DispersionEstimator estimator = DispersionEstimator::kPredictions);

struct CEIEstimate {
  int block = 0;
  double sigma_full = 0.0;  // geometric mean over groups
  double sigma_skip = 0.0;  // geometric mean over groups
  double pi = 0.0;          // mean over groups of log(sigma_skip / sigma_full)
  bool clamped = false;     // some skipped group hit the floor
  std::uint64_t full_inputs_digest = 0;
  std::uint64_t skip_inputs_digest = 0;
};

/// Per-block estimates plus the ranking (pi descending, ties to the lower
/// block index).
struct BlockPriorityTable {
  std::vector<CEIEstimate> estimates;
  std::vector<int> ranking;

  int num_blocks() const { return static_cast<int>(estimates.size()); }
  std::vector<double> priorities() const;
  /// 1-based position of `block` in the ranking.
  int rank_of(int block) const;

  /// Table carrying only priorities (sigmas left at 1); ranking derived.
  static BlockPriorityTable from_priorities(const std::vector<double>& pi);
  /// Natural block order 0..L-1, all priorities equal.
  static BlockPriorityTable natural_order(int num_blocks);
};

/// Ranking for a priority vector: descending, ties by ascending index.
std::vector<int> rank_by_priority(const std::vector<double>& pi);

CEIEstimate compute_block_priority(const BlockwiseDenoiser& model, int block, const PrioritySampleSet& samples,
                                   DispersionEstimator estimator = DispersionEstimator::kPredictions);

BlockPriorityTable rank_blocks(const BlockwiseDenoiser& model, const PrioritySampleSet& samples,
                               DispersionEstimator estimator = DispersionEstimator::kPredictions);

}  // namespace entprog
