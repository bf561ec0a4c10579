#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "entprog/denoiser.hpp"

namespace entprog {

enum class OptimizerKind { kSgd, kAdam };

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double learning_rate = 0.05;
  double momentum = 0.9;  // sgd
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;   // adam
  double epsilon = 1e-8;  // adam
};

/// SGD with momentum or Adam over a DenoiserParams store. Slots and step
/// counters are kept per block (and one for the periphery) so that a frozen
/// block's state is untouched while it is frozen.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, const DenoiserParams& like);

  /// Applies one update to every tensor that is trainable under `mask`.
  void step(DenoiserParams& params, const DenoiserParams& grads, const FreezeMask& mask);

  const OptimizerConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  /// First moment (sgd velocity or adam m), second moment (adam only).
  DenoiserParams& first_moment() { return first_; }
  DenoiserParams& second_moment() { return second_; }
  const DenoiserParams& first_moment() const { return first_; }
  const DenoiserParams& second_moment() const { return second_; }

  /// Step counters; index 0 is the periphery, index i+1 is block i.
  std::vector<std::int64_t>& step_counts() { return steps_; }
  const std::vector<std::int64_t>& step_counts() const { return steps_; }

 private:
  OptimizerConfig config_;
  DenoiserParams first_;
  DenoiserParams second_;
  std::vector<std::int64_t> steps_;
};

}  // namespace entprog
