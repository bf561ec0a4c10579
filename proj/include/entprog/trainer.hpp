#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "entprog/cei.hpp"
#include "entprog/checkpoint.hpp"
#include "entprog/config.hpp"
#include "entprog/denoiser.hpp"
#include "entprog/optimizer.hpp"
#include "entprog/schedule.hpp"
#include "entprog/supernet.hpp"
#include "entprog/synth_data.hpp"

namespace entprog {

/// Holdout loss sample on the loss-vs-time curve.
struct CurvePoint {
  std::int64_t step = 0;
  double time = 0.0;
  double holdout_loss = 0.0;
};

/// Everything recorded for one stage.
struct StageResult {
  int stage = 1;
  CandidateSet candidates;
  std::optional<SupernetTrace> trace;  // absent for non-adaptive schemes
  CEReport report;
  int selected_m = 0;
  int supernet_steps = 0;
  int remainder_steps = 0;
  std::size_t trainable_params = 0;       // under the selected mask
  std::size_t peak_trainable_params = 0;  // including supernet samples
  double stage_time = 0.0;
  double cumulative_time = 0.0;
  double cumulative_block_updates = 0.0;

  int duration_steps() const { return supernet_steps + remainder_steps; }
  /// Sum over the stage's steps of the number of trained blocks.
  double block_updates() const;
};

struct RunManifest {
  nlohmann::json config;
  std::string config_hash;
  std::string scheme;
  int num_blocks = 0;
  std::int64_t total_steps = 0;
  std::optional<BlockPriorityTable> priorities;
  std::vector<StageResult> stages;
  std::vector<CurvePoint> loss_curve;
  double initial_holdout_loss = 0.0;
  double final_holdout_loss = 0.0;
  double adherence_error = 0.0;
  std::uint64_t final_param_digest = 0;
  bool complete = false;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

nlohmann::json to_json(const BlockPriorityTable& t);
BlockPriorityTable priority_table_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SupernetTrace& t);
SupernetTrace trace_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CEReport& r);
CEReport ce_report_from_json(const nlohmann::json& j);

/// Desk-scale compute accounting for one run, with ratios against a
/// reference run (a run against itself gives ratios of exactly 1).
struct AccountingSummary {
  double block_updates = 0.0;
  std::size_t peak_trainable_params = 0;
  double total_time = 0.0;
  double final_holdout_loss = 0.0;
  double block_update_ratio = 1.0;
  double peak_param_ratio = 1.0;
  double time_ratio = 1.0;
  double loss_ratio = 1.0;
};

/// Throws AccountingError if either manifest is incomplete.
AccountingSummary accounting_summary(const RunManifest& manifest, const RunManifest& reference);
AccountingSummary accounting_summary(const RunManifest& manifest);

/// Unconditional training of a fresh model: the pretrained starting point.
BlockwiseDenoiser pretrain(const TrainConfig& config, const SyntheticDataset& data);

/// Dataset, holdout and priority samples shared by every run of a config.
SyntheticDataset make_dataset(const TrainConfig& config);

/// Step-driven Ent-Prog / baseline / ablation run. A run can be checkpointed
/// between any two steps and resumed bitwise in deterministic mode.
class Trainer {
 public:
  Trainer(TrainConfig config, const SyntheticDataset& data, BlockwiseDenoiser pretrained);

  static Trainer resume(const Checkpoint& ckpt, const SyntheticDataset& data);

  /// Runs until the schedule completes, or until `stop_at_step` global steps
  /// have been taken.
  void run(std::optional<std::int64_t> stop_at_step = std::nullopt);

  bool finished() const { return phase_ == Phase::kDone; }
  std::int64_t global_step() const { return global_step_; }
  int stage() const { return stage_; }

  Checkpoint checkpoint() const;
  const RunManifest& manifest() const { return manifest_; }
  const BlockwiseDenoiser& model() const { return model_; }
  BlockwiseDenoiser& model() { return model_; }
  const TrainConfig& config() const { return config_; }
  const HoldoutSet& holdout() const { return holdout_; }

 private:
  enum class Phase { kStageStart, kSupernet, kRemainder, kDone };

  Trainer(TrainConfig config, const SyntheticDataset& data, BlockwiseDenoiser model, std::optional<Optimizer> optimizer);

  void begin_stage();
  void supernet_step();
  void finish_supernet();
  void remainder_step();
  void finish_stage();
  void finish_run();
  void log_curve_point();
  void account_step(std::size_t trainable, int blocks, double time);
  bool adaptive() const;

  TrainConfig config_;
  const SyntheticDataset& data_;
  NoiseSchedule sched_;
  HoldoutSet holdout_;
  BlockwiseDenoiser model_;
  Optimizer optimizer_;
  std::unique_ptr<StepClock> clock_;
  DenoiserParams grads_;

  BlockPriorityTable table_;
  RunManifest manifest_;
  Phase phase_ = Phase::kStageStart;
  int stage_ = 1;
  int m_prev_ = 1;
  int phase_step_ = 0;  // steps taken in the current phase
  std::int64_t global_step_ = 0;
  double cumulative_time_ = 0.0;
  double cumulative_updates_ = 0.0;
  StageResult current_;
};

/// Convenience wrappers over Trainer. run_entprog accepts the three Ent-Prog
/// schemes; run_full_baseline requires scheme = full.
RunManifest run_entprog(const TrainConfig& config, const SyntheticDataset& data, const BlockwiseDenoiser& pretrained);
RunManifest run_full_baseline(const TrainConfig& config, const SyntheticDataset& data, const BlockwiseDenoiser& pretrained);

/// Mean adherence error of guided samples for the first `count` holdout items.
double sample_adherence(const BlockwiseDenoiser& model, const SyntheticDataset& data, const TrainConfig& config, int count);

}  // namespace entprog
