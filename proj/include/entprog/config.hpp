#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "entprog/cei.hpp"
#include "entprog/denoiser.hpp"
#include "entprog/diffusion.hpp"
#include "entprog/optimizer.hpp"
#include "entprog/supernet.hpp"

namespace entprog {

/// Training scheme axis: full training, Ent-Prog and its two ablations.
enum class Scheme { kFull, kEntProg, kEntProgNoCei, kEntProgNoAdaptive };

Scheme parse_scheme(const std::string& name);
std::string to_string(Scheme scheme);

struct DiffusionSettings {
  int timesteps = 1000;
  ScheduleKind kind = ScheduleKind::kLinear;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  double cfg_dropout = 0.1;
  int sample_steps = 50;
  double guidance_scale = 4.0;
  int adherence_samples = 8;
};

struct DataSettings {
  std::size_t train_items = 4096;
  std::size_t holdout_items = 128;
  int grid = 16;
};

struct ModelSettings {
  int blocks = 12;
  int hidden = 64;
  int mlp = 128;
  int time_features = 16;
};

struct TrainSettings {
  Scheme scheme = Scheme::kEntProg;
  int total_steps = 4000;
  int stages = 4;
  int batch_size = 32;
  int log_every = 100;
  int pretrain_steps = 3000;
};

struct ScheduleSettings {
  int initial_m = 0;  // 0: ceil(L/4)
  int stride = 0;     // 0: ceil(L/8)
  int num_candidates = 4;
};

struct CeiSettings {
  std::size_t samples = 1000;
  std::size_t groups = 50;
  DispersionEstimator estimator = DispersionEstimator::kPredictions;
  bool recompute_per_stage = false;
};

struct SupernetSettings {
  int eval_every = 1;
};

struct ExperimentSettings {
  int skip_min = 1;
  int skip_max = 0;  // 0: L - 2
  int skip_draws = 5;
  int group_budget = 600;
  int group_eval_every = 50;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
};

/// Every knob of a run. Serialized as JSON with one section per module.
struct TrainConfig {
  std::uint64_t seed = 0;
  ModelSettings model;
  DiffusionSettings diffusion;
  DataSettings data;
  OptimizerConfig optimizer;
  TrainSettings train;
  ScheduleSettings schedule;
  CeiSettings cei;
  SupernetSettings supernet;
  ClockConfig clock;
  ExperimentSettings experiment;

  DenoiserConfig denoiser_config() const;
  NoiseSchedule noise_schedule() const;
  int initial_unfrozen() const;
  int candidate_stride() const;
  int stage_steps() const { return train.total_steps / train.stages; }
  int supernet_epoch_steps() const;

  /// Throws ValidationError on any inconsistent field.
  void validate() const;

  nlohmann::json to_json() const;
  /// Missing keys take their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig load(const std::filesystem::path& path);

  /// FNV-1a of the canonical JSON dump, as 16 hex digits.
  std::string hash() const;
};

}  // namespace entprog
