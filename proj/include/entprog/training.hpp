#pragma once

#include <cstddef>
#include <span>

#include "entprog/denoiser.hpp"
#include "entprog/diffusion.hpp"
#include "entprog/optimizer.hpp"
#include "entprog/rng.hpp"
#include "entprog/synth_data.hpp"

namespace entprog {

/// How conditions enter a training batch.
enum class ConditionMode {
  kNull,     // unconditional pretraining: always the null token
  kDropout,  // classifier-free guidance training: null with probability p
};

struct TrainingBatch {
  DenoiserInput input;
  Matrix eps;
};

/// Draws tau ~ U[0, T), eps ~ N(0, I) and the condition-drop flags for the
/// given dataset items, in item order.
TrainingBatch make_training_batch(const SyntheticDataset& data, std::span<const std::size_t> indices,
                                  const NoiseSchedule& sched, ConditionMode mode, double drop_probability, Rng& rng);

/// One optimizer step under the model's current freeze mask: full forward,
/// masked gradients, masked update. Returns the pre-update batch loss.
double train_step(BlockwiseDenoiser& model, Optimizer& optimizer, const TrainingBatch& batch, DenoiserParams& grads);

}  // namespace entprog
