#include "entprog/schedule.hpp"

#include <algorithm>
#include <string>

namespace entprog {

bool CandidateSet::contains(int m) const { return std::binary_search(values.begin(), values.end(), m); }

FreezeMask select_subnetwork(const BlockPriorityTable& table, int m) {
  const int l = table.num_blocks();
  if (m < 1 || m > l)
    throw ParameterError("select_subnetwork: m=" + std::to_string(m) + " outside [1, " + std::to_string(l) + "]");
  if (static_cast<int>(table.ranking.size()) != l) throw ParameterError("select_subnetwork: ranking size mismatch");
  return {BlockSet(std::vector<int>(table.ranking.begin(), table.ranking.begin() + m)), true};
}

CandidateSet make_candidate_set(int stage, int num_stages, int m_prev, int num_blocks, int num_candidates, int stride) {
  if (num_blocks < 1 || m_prev < 1 || m_prev > num_blocks) throw ParameterError("make_candidate_set: m_prev outside [1, L]");
  if (num_candidates < 1 || stride < 1) throw ParameterError("make_candidate_set: need num_candidates >= 1, stride >= 1");
  if (stage < 1 || stage > num_stages) throw ParameterError("make_candidate_set: stage outside [1, K]");
  if (stage == num_stages) return {{num_blocks}};
  CandidateSet set;
  for (int j = 0; j < num_candidates; ++j) set.values.push_back(std::min(m_prev + j * stride, num_blocks));
  set.values.erase(std::unique(set.values.begin(), set.values.end()), set.values.end());
  return set;
}

int linear_unfrozen_count(int stage, int num_stages, int num_blocks) {
  if (stage < 1 || stage > num_stages) throw ParameterError("linear_unfrozen_count: stage outside [1, K]");
  return (stage * num_blocks + num_stages - 1) / num_stages;
}

int default_initial_unfrozen(int num_blocks) { return (num_blocks + 3) / 4; }

int default_candidate_stride(int num_blocks) { return std::max(1, (num_blocks + 7) / 8); }

void validate_schedule(const std::vector<StagePlan>& plan, int num_blocks) {
  if (plan.empty()) throw ParameterError("schedule is empty");
  int prev = 1;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& s = plan[i];
    if (s.stage_index != static_cast<int>(i) + 1) throw ParameterError("schedule: stage indices not contiguous");
    if (s.unfrozen_blocks < 1 || s.unfrozen_blocks > num_blocks) throw ParameterError("schedule: m_k outside [1, L]");
    if (s.unfrozen_blocks < prev) throw ParameterError("schedule: m_k decreased");
    if (s.duration_steps < 1) throw ParameterError("schedule: non-positive stage duration");
    prev = s.unfrozen_blocks;
  }
  if (plan.back().unfrozen_blocks != num_blocks) throw ParameterError("schedule: final stage must train all blocks");
}

}  // namespace entprog
