#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "entprog/cei.hpp"
#include "entprog/denoiser.hpp"
#include "entprog/diffusion.hpp"
#include "entprog/optimizer.hpp"
#include "entprog/schedule.hpp"
#include "entprog/synth_data.hpp"
#include "entprog/training.hpp"

namespace entprog {

/// Held-out evaluation tuples with tau and eps frozen at creation.
struct HoldoutSet {
  DenoiserInput input;
  Matrix eps;
  std::vector<std::size_t> item_indices;  // dataset indices, all in the holdout split

  std::size_t size() const { return item_indices.size(); }
};

/// One fixed (tau, eps) per held-out item of `data`, conditioned on its pose.
HoldoutSet make_holdout_set(const SyntheticDataset& data, const NoiseSchedule& sched, std::uint64_t seed);

/// Mean per-item denoising loss. Pure; ignores any freeze mask. Throws
/// ParameterError on an empty set.
double holdout_eval(const BlockwiseDenoiser& model, const HoldoutSet& holdout, const SkipSet& skip = {});

/// Rounds a loss onto the 2^-40 grid used by supernet traces. On the grid,
/// differences and sums of losses below 2^12 are exact in double precision.
double quantize_loss(double loss);

/// Source of per-step durations.
class StepClock {
 public:
  virtual ~StepClock() = default;
  virtual void start_step() = 0;
  /// Duration of the step that just finished; `trainable_params` is the count
  /// under the step's freeze mask.
  virtual double finish_step(std::size_t trainable_params) = 0;
  virtual bool deterministic() const = 0;
};

/// time = a + b * trainable_params.
class CostModelClock final : public StepClock {
 public:
  CostModelClock(double a, double b);
  void start_step() override {}
  double finish_step(std::size_t trainable_params) override;
  bool deterministic() const override { return true; }

 private:
  double a_, b_;
};

/// Monotonic wall time in seconds.
class WallClock final : public StepClock {
 public:
  void start_step() override;
  double finish_step(std::size_t trainable_params) override;
  bool deterministic() const override { return false; }

 private:
  std::chrono::steady_clock::time_point start_{};
};

enum class ClockKind { kCostModel, kWall };
ClockKind parse_clock_kind(const std::string& name);
std::string to_string(ClockKind kind);

struct ClockConfig {
  ClockKind kind = ClockKind::kCostModel;
  double a = 1.0;
  double b = 1e-6;
};

std::unique_ptr<StepClock> make_clock(const ClockConfig& config);

struct StepRecord {
  int step = 0;  // 1-based
  int sampled_m = 0;
  double wall_time = 0.0;
  double holdout_loss = 0.0;  // most recent evaluation when !evaluated
  bool evaluated = true;
};

struct SupernetTrace {
  double initial_loss = 0.0;
  std::vector<StepRecord> records;
};

struct CandidateEfficiency {
  int m = 0;
  int steps_taken = 0;
  double delta_loss = 0.0;
  double total_time = 0.0;
  double ce = -std::numeric_limits<double>::infinity();
  bool selected = false;
};

struct CEReport {
  std::vector<CandidateEfficiency> candidates;  // ascending m
  int selected_m = 0;

  const CandidateEfficiency& at(int m) const;
  /// Sum of attributed loss changes in candidate order.
  double total_delta() const;
};

/// Attributes each evaluation window's loss change to the candidates sampled
/// in it (by wall-time share when a window spans several steps) and computes
/// CE(m) = -delta_m / time_m. `candidates` lists counts that should appear
/// even if never sampled (they get CE = -inf). Throws AccountingError on a
/// malformed trace or a sampled candidate with zero total time.
CEReport convergence_efficiency(std::span<const StepRecord> records, double initial_loss,
                                std::span<const int> candidates = {});

/// argmax CE, ties toward smaller m; marks the choice in the report. Throws
/// AccountingError if no candidate has finite CE.
int select_candidate(CEReport& report);

struct SupernetOptions {
  int stage = 1;
  int batch_size = 32;
  int eval_every = 1;
  ConditionMode condition_mode = ConditionMode::kDropout;
  double drop_probability = 0.1;
  std::uint64_t seed = 0;
};

/// One shared parameter store (the model itself) nesting every candidate
/// unfreezing count; candidates differ only in the gradient mask.
class NestedSupernet {
 public:
  NestedSupernet(BlockwiseDenoiser& model, Optimizer& optimizer, CandidateSet candidates, const BlockPriorityTable& table);

  BlockwiseDenoiser& model() { return model_; }
  const CandidateSet& candidates() const { return candidates_; }

  /// Number of steps in one epoch over `data`'s training split.
  int epoch_steps(const SyntheticDataset& data, int batch_size) const;

  /// Executes step `s` (1-based) of the epoch and returns its record.
  /// `last_loss` is the previous evaluated holdout loss.
  StepRecord step(int s, const SyntheticDataset& data, const NoiseSchedule& sched, const HoldoutSet& holdout,
                  StepClock& clock, const SupernetOptions& options, double last_loss);

 private:
  BlockwiseDenoiser& model_;
  Optimizer& optimizer_;
  CandidateSet candidates_;
  const BlockPriorityTable& table_;
  DenoiserParams grads_;
  std::vector<std::size_t> order_;
  std::uint64_t order_key_ = 0;
};

/// Exactly one epoch over the training split: sample m uniformly, unfreeze the
/// top-m blocks, take one step with full forward and masked gradients, time it,
/// evaluate the holdout. Deterministic given the seed and a deterministic clock.
SupernetTrace run_supernet_epoch(NestedSupernet& net, const SyntheticDataset& data, const NoiseSchedule& sched,
                                 const HoldoutSet& holdout, StepClock& clock, const SupernetOptions& options);

}  // namespace entprog
