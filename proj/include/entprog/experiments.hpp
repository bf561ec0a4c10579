#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "entprog/cei.hpp"
#include "entprog/config.hpp"
#include "entprog/denoiser.hpp"
#include "entprog/supernet.hpp"
#include "entprog/synth_data.hpp"
#include "entprog/trainer.hpp"

namespace entprog {

struct SkipRow {
  int skip_size = 0;
  int draw = 0;
  BlockSet skipped;
  double mean_pi = 0.0;  // 0 for the empty set
  double holdout_loss = 0.0;
  double loss_increase = 0.0;
};

struct SkipExperimentResult {
  double baseline_loss = 0.0;
  std::vector<SkipRow> rows;
  /// Spearman correlation of mean_pi against loss_increase over rows with a
  /// non-empty skip set.
  double spearman = 0.0;
  /// Same, against the sum of pi over the skipped set.
  double spearman_sum = 0.0;
};

/// For each size in [min_size, max_size], `draws` uniformly random skip sets;
/// holdout loss of the model with those blocks bypassed. Throws
/// ParameterError if max_size >= L.
SkipExperimentResult skip_experiment(const BlockwiseDenoiser& model, const BlockPriorityTable& table,
                                     const HoldoutSet& holdout, int min_size, int max_size, int draws,
                                     std::uint64_t seed);

struct GroupArm {
  std::string label;
  BlockSet blocks;
  std::vector<CurvePoint> curve;

  double final_loss() const { return curve.back().holdout_loss; }
};

struct GroupExperimentResult {
  int q = 0;
  GroupArm top;
  GroupArm bottom;

  double gap() const { return bottom.final_loss() - top.final_loss(); }
};

/// q = ceil(L/3). Throws ParameterError unless 2q < L.
int group_size(int num_blocks);

/// Trains two copies of `pretrained` for `budget` steps, one with only the
/// top-q ranked blocks trainable and one with only the bottom-q, everything
/// else frozen. Both arms see the same batches. Holdout loss is logged every
/// `eval_every` steps and at the end.
GroupExperimentResult group_experiment(const TrainConfig& config, const SyntheticDataset& data,
                                       const BlockwiseDenoiser& pretrained, const BlockPriorityTable& table,
                                       int budget, int eval_every, std::uint64_t seed);

/// One row per manifest; ratios are taken against the first manifest with
/// scheme "full", else against the first manifest.
struct ReportRow {
  std::string name;
  std::string scheme;
  AccountingSummary summary;
  double adherence_error = 0.0;
};

std::vector<ReportRow> compare_runs(const std::vector<std::pair<std::string, RunManifest>>& runs);

/// Recursively finds manifest.json files under `root`, sorted by path.
/// Throws InputError if none is found.
std::vector<std::pair<std::string, RunManifest>> find_manifests(const std::filesystem::path& root);

/// Report files. Every table carries a header row and a config-hash footer.
void write_priority_report(const BlockPriorityTable& table, const std::filesystem::path& path, const std::string& config_hash);
/// Restores sigmas and priorities; the ranking is recomputed from pi.
BlockPriorityTable read_priority_report(const std::filesystem::path& path);
void write_trace_csv(const SupernetTrace& trace, const std::filesystem::path& path, const std::string& config_hash);
void write_ce_report_csv(const CEReport& report, const std::filesystem::path& path, const std::string& config_hash);
void write_loss_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path, const std::string& config_hash);

RunManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const RunManifest& manifest, const std::filesystem::path& path);

}  // namespace entprog
