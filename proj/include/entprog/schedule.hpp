#pragma once

#include <vector>

#include "entprog/cei.hpp"
#include "entprog/denoiser.hpp"

namespace entprog {

/// One stage of a progressive schedule. Stages are numbered from 1.
struct StagePlan {
  int stage_index = 1;
  int unfrozen_blocks = 1;  // m_k
  int duration_steps = 1;
};

/// Candidate unfreezing counts for one stage, sorted ascending.
struct CandidateSet {
  std::vector<int> values;

  bool contains(int m) const;
  int min() const { return values.front(); }
  int max() const { return values.back(); }
};

/// Top-m blocks of the ranking, periphery trainable. Throws ParameterError
/// unless 1 <= m <= L.
FreezeMask select_subnetwork(const BlockPriorityTable& table, int m);

/// {min(m_prev + j * stride, L) : j < num_candidates}, deduplicated; {L} for
/// the final stage.
CandidateSet make_candidate_set(int stage, int num_stages, int m_prev, int num_blocks, int num_candidates, int stride);

/// m_k = ceil(k L / K), the non-adaptive linear schedule.
int linear_unfrozen_count(int stage, int num_stages, int num_blocks);

/// ceil(L / 4) and ceil(L / 8).
int default_initial_unfrozen(int num_blocks);
int default_candidate_stride(int num_blocks);

/// Checks the StagePlan invariants: contiguous indices, m in [1, L],
/// non-decreasing m, positive durations and m = L in the last stage.
void validate_schedule(const std::vector<StagePlan>& plan, int num_blocks);

}  // namespace entprog
