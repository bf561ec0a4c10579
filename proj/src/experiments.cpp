#include "entprog/experiments.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "entprog/errors.hpp"
#include "entprog/optimizer.hpp"
#include "entprog/rng.hpp"
#include "entprog/schedule.hpp"
#include "entprog/tabular.hpp"
#include "entprog/training.hpp"

namespace entprog {

SkipExperimentResult skip_experiment(const BlockwiseDenoiser& model, const BlockPriorityTable& table,
                                     const HoldoutSet& holdout, int min_size, int max_size, int draws,
                                     std::uint64_t seed) {
  const int l = model.num_blocks();
  if (table.num_blocks() != l) throw ParameterError("skip experiment: priority table does not match model");
  if (min_size < 0 || min_size > max_size) throw ParameterError("skip experiment: bad size range");
  if (max_size >= l) throw ParameterError("skip experiment: skip size must be < L");
  if (draws < 1) throw ParameterError("skip experiment: need at least one draw");

  const auto pi = table.priorities();
  SkipExperimentResult result;
  result.baseline_loss = holdout_eval(model, holdout);
  std::vector<double> xs, sums, ys;
  for (int size = min_size; size <= max_size; ++size) {
    for (int d = 0; d < draws; ++d) {
      Rng rng(derive_seed(seed, {kStreamExperiment, static_cast<std::uint64_t>(size), static_cast<std::uint64_t>(d)}));
      std::vector<int> pool(static_cast<std::size_t>(l));
      std::iota(pool.begin(), pool.end(), 0);
      for (int i = 0; i < size; ++i)
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(l - i))]);
      pool.resize(static_cast<std::size_t>(size));

      SkipRow row;
      row.skip_size = size;
      row.draw = d;
      row.skipped = BlockSet(pool);
      for (int b : row.skipped) row.mean_pi += pi[static_cast<std::size_t>(b)];
      if (size > 0) row.mean_pi /= size;
      row.holdout_loss = size == 0 ? result.baseline_loss : holdout_eval(model, holdout, SkipSet{row.skipped});
      row.loss_increase = row.holdout_loss - result.baseline_loss;
      if (size > 0) {
        xs.push_back(row.mean_pi);
        sums.push_back(row.mean_pi * size);
        ys.push_back(row.loss_increase);
      }
      result.rows.push_back(std::move(row));
    }
  }
  result.spearman = spearman(xs, ys);
  result.spearman_sum = spearman(sums, ys);
  return result;
}

int group_size(int num_blocks) {
  const int q = (num_blocks + 2) / 3;
  if (2 * q >= num_blocks) throw ParameterError("group experiment: q = ceil(L/3) must satisfy 2q < L");
  return q;
}

GroupExperimentResult group_experiment(const TrainConfig& config, const SyntheticDataset& data,
                                       const BlockwiseDenoiser& pretrained, const BlockPriorityTable& table,
                                       int budget, int eval_every, std::uint64_t seed) {
  const int l = pretrained.num_blocks();
  if (table.num_blocks() != l) throw ParameterError("group experiment: priority table does not match model");
  if (budget < 0) throw ParameterError("group experiment: budget must be >= 0");
  if (eval_every < 1) throw ParameterError("group experiment: eval_every must be >= 1");
  const int q = group_size(l);

  GroupExperimentResult result;
  result.q = q;
  result.top.label = "top";
  result.top.blocks = BlockSet(std::vector<int>(table.ranking.begin(), table.ranking.begin() + q));
  result.bottom.label = "bottom";
  result.bottom.blocks = BlockSet(std::vector<int>(table.ranking.end() - q, table.ranking.end()));

  const NoiseSchedule sched = config.noise_schedule();
  const HoldoutSet holdout = make_holdout_set(data, sched, seed);
  for (GroupArm* arm : {&result.top, &result.bottom}) {
    BlockwiseDenoiser model = pretrained;
    const FreezeMask mask{arm->blocks, false};
    model.apply_freeze_mask(mask);
    Optimizer opt(config.optimizer, model.params());
    DenoiserParams grads;
    arm->curve.push_back({0, 0.0, holdout_eval(model, holdout)});
    for (int s = 1; s <= budget; ++s) {
      Rng rng(derive_seed(seed, {kStreamExperiment, 0xB10C, static_cast<std::uint64_t>(s)}));
      std::vector<std::size_t> idx(static_cast<std::size_t>(config.train.batch_size));
      for (auto& i : idx) i = static_cast<std::size_t>(rng.below(data.train_count));
      const auto batch = make_training_batch(data, idx, sched, ConditionMode::kDropout, config.diffusion.cfg_dropout, rng);
      train_step(model, opt, batch, grads);
      if (s % eval_every == 0 || s == budget)
        arm->curve.push_back({s, static_cast<double>(s), holdout_eval(model, holdout)});
    }
  }
  return result;
}

std::vector<ReportRow> compare_runs(const std::vector<std::pair<std::string, RunManifest>>& runs) {
  if (runs.empty()) throw InputError("report: no manifests");
  std::size_t ref = 0;
  for (std::size_t i = 0; i < runs.size(); ++i)
    if (runs[i].second.scheme == "full") {
      ref = i;
      break;
    }
  std::vector<ReportRow> rows;
  for (const auto& [name, m] : runs)
    rows.push_back({name, m.scheme, accounting_summary(m, runs[ref].second), m.adherence_error});
  return rows;
}

void write_priority_report(const BlockPriorityTable& table, const std::filesystem::path& path, const std::string& config_hash) {
  CsvTable csv({"block_index", "sigma_full", "sigma_skip", "pi", "rank"});
  for (const auto& e : table.estimates)
    csv.row({std::to_string(e.block), format_double(e.sigma_full), format_double(e.sigma_skip), format_double(e.pi),
             std::to_string(table.rank_of(e.block))});
  csv.write(path, config_hash);
}

BlockPriorityTable read_priority_report(const std::filesystem::path& path) {
  BlockPriorityTable t;
  try {
    for (const auto& r : read_csv(path)) {
      if (r.size() != 5) throw InputError("malformed priority report " + path.string());
      CEIEstimate e;
      e.block = std::stoi(r[0]);
      e.sigma_full = std::stod(r[1]);
      e.sigma_skip = std::stod(r[2]);
      e.pi = std::stod(r[3]);
      if (e.block != t.num_blocks()) throw InputError("priority report rows out of order in " + path.string());
      t.estimates.push_back(e);
    }
  } catch (const std::logic_error&) {
    throw InputError("malformed priority report " + path.string());
  }
  if (t.estimates.empty()) throw InputError("empty priority report " + path.string());
  t.ranking = rank_by_priority(t.priorities());
  return t;
}

void write_trace_csv(const SupernetTrace& trace, const std::filesystem::path& path, const std::string& config_hash) {
  CsvTable csv({"s", "sampled_m", "wall_time", "holdout_loss"});
  csv.row({"0", "", "0", format_double(trace.initial_loss)});
  for (const auto& r : trace.records)
    csv.row({std::to_string(r.step), std::to_string(r.sampled_m), format_double(r.wall_time), format_double(r.holdout_loss)});
  csv.write(path, config_hash);
}

void write_ce_report_csv(const CEReport& report, const std::filesystem::path& path, const std::string& config_hash) {
  CsvTable csv({"m", "steps_taken", "delta_loss", "total_time", "ce", "selected"});
  for (const auto& c : report.candidates)
    csv.row({std::to_string(c.m), std::to_string(c.steps_taken), format_double(c.delta_loss), format_double(c.total_time),
             format_double(c.ce), c.selected ? "1" : "0"});
  csv.write(path, config_hash);
}

void write_loss_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path, const std::string& config_hash) {
  CsvTable csv({"step", "time", "holdout_loss"});
  for (const auto& p : curve) csv.row({std::to_string(p.step), format_double(p.time), format_double(p.holdout_loss)});
  csv.write(path, config_hash);
}

RunManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return RunManifest::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed manifest " + path.string() + ": " + e.what());
  }
}

void save_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << manifest.to_json().dump(2) << '\n';
}

std::vector<std::pair<std::string, RunManifest>> find_manifests(const std::filesystem::path& root) {
  if (!std::filesystem::exists(root)) throw InputError("no such directory " + root.string());
  std::vector<std::filesystem::path> paths;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() == "manifest.json") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw InputError("no run manifests under " + root.string());
  std::vector<std::pair<std::string, RunManifest>> runs;
  for (const auto& p : paths) runs.emplace_back(p.parent_path().filename().string(), load_manifest(p));
  return runs;
}

}  // namespace entprog
