#include "entprog/cei.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "entprog/rng.hpp"

namespace entprog {

namespace {

struct GroupDispersion {
  double sigma = 0.0;
  std::uint64_t digest = 0;
};

GroupDispersion group_dispersion(const BlockwiseDenoiser& model, const PriorityGroup& group, const SkipSet& skip,
                                 DispersionEstimator estimator) {
  if (group.size() == 0) throw ParameterError("pooled_sigma: empty condition group");
  const DenoiserInput in = group.as_input();
  std::uint64_t h = digest(in.x_tau);
  h = digest(in.conditions, h);
  h = digest(group.eps, h);
  h = fnv1a(in.taus.data(), sizeof(int) * in.taus.size(), h);
  Matrix pred = model.forward(in, skip);
  if (estimator == DispersionEstimator::kErrors) pred -= group.eps;
  return {pooled_std(pred), h};
}

}  // namespace

DispersionEstimator parse_dispersion_estimator(const std::string& name) {
  if (name == "predictions") return DispersionEstimator::kPredictions;
  if (name == "errors") return DispersionEstimator::kErrors;
  throw ParameterError("unknown dispersion estimator '" + name + "'");
}

std::string to_string(DispersionEstimator e) {
  return e == DispersionEstimator::kPredictions ? "predictions" : "errors";
}

DenoiserInput PriorityGroup::as_input() const {
  DenoiserInput in;
  in.x_tau = x_tau;
  in.taus = taus;
  in.conditions = condition.replicate(1, static_cast<Eigen::Index>(taus.size()));
  in.use_null.assign(taus.size(), 0);
  return in;
}

std::size_t PrioritySampleSet::size() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

PrioritySampleSet make_priority_samples(const SyntheticDataset& data, const NoiseSchedule& sched, std::size_t num_samples,
                                        std::size_t num_groups, std::uint64_t seed) {
  if (num_groups == 0 || num_samples < num_groups)
    throw ParameterError("make_priority_samples: need num_samples >= num_groups >= 1");
  if (num_groups > data.train_count) throw ParameterError("make_priority_samples: more groups than training items");
  Rng rng(derive_seed(seed, {kStreamPriority}));
  std::vector<std::size_t> pool = data.train_indices();
  // Partial Fisher-Yates: the first num_groups entries are distinct items.
  for (std::size_t i = 0; i < num_groups; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);

  PrioritySampleSet set;
  set.groups.resize(num_groups);
  const Eigen::Index dim = data.images.rows();
  for (std::size_t g = 0; g < num_groups; ++g) {
    const std::size_t n = num_samples / num_groups + (g < num_samples % num_groups ? 1 : 0);
    const std::size_t item = pool[g];
    auto& group = set.groups[g];
    group.condition = data.conditions[item].to_vector();
    group.taus.resize(n);
    group.x_tau.resize(dim, static_cast<Eigen::Index>(n));
    group.eps.resize(dim, static_cast<Eigen::Index>(n));
    const Matrix x0 = to_model_space(data.images.col(static_cast<Eigen::Index>(item)));
    for (std::size_t j = 0; j < n; ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      group.taus[j] = static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.num_timesteps())));
      for (Eigen::Index k = 0; k < dim; ++k) group.eps(k, col) = rng.normal();
      group.x_tau.col(col) = forward_diffuse(x0, group.taus[j], group.eps.col(col), sched);
    }
  }
  return set;
}

double pooled_std(const Matrix& values) {
  if (values.size() == 0) return 0.0;
  const double mean = values.mean();
  double ss = 0.0;
  for (Eigen::Index j = 0; j < values.cols(); ++j)
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      const double d = values(i, j) - mean;
      ss += d * d;
    }
  return std::sqrt(ss / static_cast<double>(values.size()));
}

double pooled_sigma(const BlockwiseDenoiser& model, const PriorityGroup& group, const SkipSet& skip,
                    DispersionEstimator estimator) {
  const double sigma = group_dispersion(model, group, skip, estimator).sigma;
  if (sigma < kDispersionFloor) throw DegenerateModelError("pooled_sigma: prediction dispersion below floor");
  return sigma;
}

namespace {

std::vector<GroupDispersion> full_dispersions(const BlockwiseDenoiser& model, const PrioritySampleSet& samples,
                                              DispersionEstimator estimator) {
  if (samples.groups.empty()) throw ParameterError("priority samples are empty");
  std::vector<GroupDispersion> out;
  out.reserve(samples.groups.size());
  for (const auto& g : samples.groups) {
    auto d = group_dispersion(model, g, {}, estimator);
    if (d.sigma < kDispersionFloor)
      throw DegenerateModelError("full model prediction dispersion below floor; priorities are undefined");
    out.push_back(d);
  }
  return out;
}

CEIEstimate block_priority(const BlockwiseDenoiser& model, int block, const PrioritySampleSet& samples,
                           const std::vector<GroupDispersion>& full, DispersionEstimator estimator) {
  if (block < 0 || block >= model.num_blocks()) throw ParameterError("unknown block " + std::to_string(block));
  CEIEstimate est;
  est.block = block;
  const SkipSet skip{BlockSet{block}};
  double sum_pi = 0.0, sum_log_full = 0.0, sum_log_skip = 0.0;
  std::uint64_t full_digest = 0xcbf29ce484222325ULL, skip_digest = full_digest;
  for (std::size_t g = 0; g < samples.groups.size(); ++g) {
    auto skipped = group_dispersion(model, samples.groups[g], skip, estimator);
    if (skipped.sigma < kDispersionFloor) {
      skipped.sigma = kDispersionFloor;
      est.clamped = true;
    }
    const double log_full = std::log(full[g].sigma);
    const double log_skip = std::log(skipped.sigma);
    sum_pi += log_skip - log_full;
    sum_log_full += log_full;
    sum_log_skip += log_skip;
    full_digest = fnv1a(&full[g].digest, sizeof(std::uint64_t), full_digest);
    skip_digest = fnv1a(&skipped.digest, sizeof(std::uint64_t), skip_digest);
  }
  const double n = static_cast<double>(samples.groups.size());
  est.pi = sum_pi / n;
  est.sigma_full = std::exp(sum_log_full / n);
  est.sigma_skip = std::exp(sum_log_skip / n);
  est.full_inputs_digest = full_digest;
  est.skip_inputs_digest = skip_digest;
  return est;
}

}  // namespace

std::vector<double> BlockPriorityTable::priorities() const {
  std::vector<double> pi;
  pi.reserve(estimates.size());
  for (const auto& e : estimates) pi.push_back(e.pi);
  return pi;
}

int BlockPriorityTable::rank_of(int block) const {
  const auto it = std::find(ranking.begin(), ranking.end(), block);
  if (it == ranking.end()) throw ParameterError("block not in ranking");
  return static_cast<int>(it - ranking.begin()) + 1;
}

std::vector<int> rank_by_priority(const std::vector<double>& pi) {
  std::vector<int> order(pi.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return pi[static_cast<std::size_t>(a)] > pi[static_cast<std::size_t>(b)];
  });
  return order;
}

BlockPriorityTable BlockPriorityTable::from_priorities(const std::vector<double>& pi) {
  BlockPriorityTable t;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    CEIEstimate e;
    e.block = static_cast<int>(i);
    e.sigma_full = 1.0;
    e.sigma_skip = std::exp(pi[i]);
    e.pi = pi[i];
    t.estimates.push_back(e);
  }
  t.ranking = rank_by_priority(pi);
  return t;
}

BlockPriorityTable BlockPriorityTable::natural_order(int num_blocks) {
  return from_priorities(std::vector<double>(static_cast<std::size_t>(num_blocks), 0.0));
}

CEIEstimate compute_block_priority(const BlockwiseDenoiser& model, int block, const PrioritySampleSet& samples,
                                   DispersionEstimator estimator) {
  return block_priority(model, block, samples, full_dispersions(model, samples, estimator), estimator);
}

BlockPriorityTable rank_blocks(const BlockwiseDenoiser& model, const PrioritySampleSet& samples,
                               DispersionEstimator estimator) {
  const auto full = full_dispersions(model, samples, estimator);
  BlockPriorityTable table;
  for (int b = 0; b < model.num_blocks(); ++b) table.estimates.push_back(block_priority(model, b, samples, full, estimator));
  table.ranking = rank_by_priority(table.priorities());
  return table;
}

}  // namespace entprog
