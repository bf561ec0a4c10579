#include "entprog/training.hpp"

namespace entprog {

TrainingBatch make_training_batch(const SyntheticDataset& data, std::span<const std::size_t> indices,
                                  const NoiseSchedule& sched, ConditionMode mode, double drop_probability, Rng& rng) {
  const auto b = static_cast<Eigen::Index>(indices.size());
  const Eigen::Index dim = data.images.rows();
  TrainingBatch batch;
  auto& in = batch.input;
  in.x_tau.resize(dim, b);
  in.conditions.resize(2 * PoseCondition::kNumKeypoints, b);
  in.taus.resize(indices.size());
  in.use_null.resize(indices.size());
  batch.eps.resize(dim, b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const std::size_t item = indices[static_cast<std::size_t>(j)];
    if (data.is_holdout(item)) throw ParameterError("training batch drew a held-out item");
    const int tau = static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.num_timesteps())));
    for (Eigen::Index k = 0; k < dim; ++k) batch.eps(k, j) = rng.normal();
    const bool drop = mode == ConditionMode::kNull || rng.bernoulli(drop_probability);
    const Matrix x0 = to_model_space(data.images.col(static_cast<Eigen::Index>(item)));
    in.x_tau.col(j) = forward_diffuse(x0, tau, batch.eps.col(j), sched);
    in.taus[static_cast<std::size_t>(j)] = tau;
    in.conditions.col(j) = data.conditions[item].to_vector();
    in.use_null[static_cast<std::size_t>(j)] = drop ? 1 : 0;
  }
  return batch;
}

double train_step(BlockwiseDenoiser& model, Optimizer& optimizer, const TrainingBatch& batch, DenoiserParams& grads) {
  const double loss = model.loss_and_gradients(batch.input, batch.eps, grads);
  optimizer.step(model.params(), grads, model.freeze_mask());
  return loss;
}

}  // namespace entprog
