#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "entprog/checkpoint.hpp"
#include "entprog/config.hpp"
#include "entprog/errors.hpp"
#include "entprog/experiments.hpp"
#include "entprog/tabular.hpp"
#include "entprog/trainer.hpp"

namespace fs = std::filesystem;
using namespace entprog;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kValidation = 2, kInput = 3, kAccounting = 4, kParameter = 5 };

struct Options {
  std::string config_path;
  std::string out = "runs";
  std::optional<std::uint64_t> seed;
  std::string scheme;
  std::string pretrained;
  std::string priorities;
  std::string resume;
};

TrainConfig resolve_config(const Options& o) {
  TrainConfig c;
  bool seed_in_file = false;
  if (!o.config_path.empty()) {
    if (!fs::exists(o.config_path)) throw InputError("config file not found: " + o.config_path);
    std::ifstream in(o.config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("config: ") + e.what());
    }
    c = TrainConfig::from_json(j);
    seed_in_file = j.contains("seed");
  }
  if (o.seed) {
    c.seed = *o.seed;
  } else if (!seed_in_file) {
    if (const char* env = std::getenv("ENTPROG_SEED")) {
      try {
        c.seed = std::stoull(env);
      } catch (const std::logic_error&) {
        throw ValidationError(std::string("ENTPROG_SEED is not an integer: ") + env);
      }
    }
  }
  if (!o.scheme.empty()) c.train.scheme = parse_scheme(o.scheme);
  c.validate();
  return c;
}

fs::path pretrained_path(const Options& o) {
  return o.pretrained.empty() ? fs::path(o.out) / "pretrained.ckpt" : fs::path(o.pretrained);
}

fs::path priorities_path(const Options& o) {
  return o.priorities.empty() ? fs::path(o.out) / "priority_report.csv" : fs::path(o.priorities);
}

BlockwiseDenoiser load_pretrained(const Options& o, const TrainConfig& config) {
  const fs::path p = pretrained_path(o);
  if (!fs::exists(p)) throw InputError("pretrained checkpoint not found: " + p.string() + " (run pretrain first)");
  BlockwiseDenoiser model = restore_model(Checkpoint::load(p));
  if (!(model.config() == config.denoiser_config()))
    throw ValidationError("pretrained checkpoint architecture does not match config");
  return model;
}

std::string run_dir_name(const TrainConfig& c) {
  return to_string(c.train.scheme) + "-" + c.hash().substr(0, 8) + "-seed" + std::to_string(c.seed);
}

void cmd_pretrain(const Options& o) {
  const TrainConfig config = resolve_config(o);
  fs::create_directories(o.out);
  const SyntheticDataset data = make_dataset(config);
  save_dataset(data, fs::path(o.out) / "dataset.bin");
  const BlockwiseDenoiser model = pretrain(config, data);
  Checkpoint ckpt;
  store_model(ckpt, model);
  ckpt.meta["config"] = config.to_json();
  ckpt.save(pretrained_path(o));
  std::cout << "pretrained " << config.train.pretrain_steps << " steps -> " << pretrained_path(o).string() << '\n';
}

void cmd_cei(const Options& o) {
  const TrainConfig config = resolve_config(o);
  const BlockwiseDenoiser model = load_pretrained(o, config);
  const SyntheticDataset data = make_dataset(config);
  const auto samples = make_priority_samples(data, config.noise_schedule(), config.cei.samples, config.cei.groups, config.seed);
  const BlockPriorityTable table = rank_blocks(model, samples, config.cei.estimator);
  fs::create_directories(o.out);
  write_priority_report(table, priorities_path(o), config.hash());
  std::cout << "ranking:";
  for (int b : table.ranking) std::cout << ' ' << b;
  std::cout << '\n';
}

void write_run(const Trainer& trainer, const fs::path& dir) {
  const RunManifest& m = trainer.manifest();
  const std::string& hash = m.config_hash;
  save_manifest(m, dir / "manifest.json");
  if (m.priorities) write_priority_report(*m.priorities, dir / "priority_report.csv", hash);
  for (const auto& s : m.stages) {
    const std::string k = std::to_string(s.stage);
    if (s.trace) write_trace_csv(*s.trace, dir / ("stage" + k + "_trace.csv"), hash);
    if (!s.report.candidates.empty()) write_ce_report_csv(s.report, dir / ("stage" + k + "_ce_report.csv"), hash);
  }
  write_loss_curve_csv(m.loss_curve, dir / "loss_curve.csv", hash);
  Series curve{m.scheme, {}, {}};
  for (const auto& p : m.loss_curve) {
    curve.x.push_back(p.time);
    curve.y.push_back(p.holdout_loss);
  }
  write_line_svg(dir / "loss_curve.svg", "holdout loss", "time", "loss", {curve});
}

void cmd_train(const Options& o, bool baseline) {
  TrainConfig config = resolve_config(o);
  if (baseline) config.train.scheme = Scheme::kFull;
  else if (config.train.scheme == Scheme::kFull) throw ValidationError("train: use the baseline subcommand for scheme full");
  const SyntheticDataset data = make_dataset(config);
  const fs::path dir = fs::path(o.out) / run_dir_name(config);
  fs::create_directories(dir);

  std::optional<Trainer> trainer;
  if (!o.resume.empty()) {
    if (!fs::exists(o.resume)) throw InputError("checkpoint not found: " + o.resume);
    trainer.emplace(Trainer::resume(Checkpoint::load(o.resume), data));
    if (trainer->config().hash() != config.hash()) throw ValidationError("resume: checkpoint config differs from the given config");
  } else {
    trainer.emplace(config, data, load_pretrained(o, config));
  }
  const std::int64_t stage_steps = config.stage_steps();
  while (!trainer->finished()) {
    const int stage = static_cast<int>(trainer->global_step() / stage_steps) + 1;
    trainer->run(stage * stage_steps);
    trainer->checkpoint().save(dir / ("stage" + std::to_string(stage) + ".ckpt"));
    if (stage * stage_steps >= config.train.total_steps) trainer->run();
  }
  trainer->checkpoint().save(dir / "final.ckpt");
  write_run(*trainer, dir);
  const RunManifest& m = trainer->manifest();
  std::cout << m.scheme << ": final holdout loss " << m.final_holdout_loss << ", adherence " << m.adherence_error
            << ", block updates " << accounting_summary(m).block_updates << " -> " << dir.string() << '\n';
}

void cmd_skip(const Options& o) {
  const TrainConfig config = resolve_config(o);
  const BlockwiseDenoiser model = load_pretrained(o, config);
  if (!fs::exists(priorities_path(o))) throw InputError("priority report not found: " + priorities_path(o).string());
  const BlockPriorityTable table = read_priority_report(priorities_path(o));
  const SyntheticDataset data = make_dataset(config);
  const HoldoutSet holdout = make_holdout_set(data, config.noise_schedule(), config.seed);
  const int l = model.num_blocks();
  const int max_size = config.experiment.skip_max > 0 ? config.experiment.skip_max : l - 2;
  const auto r = skip_experiment(model, table, holdout, config.experiment.skip_min, max_size, config.experiment.skip_draws,
                                 config.seed);
  fs::create_directories(o.out);
  CsvTable csv({"skip_size", "draw", "skipped", "mean_pi", "holdout_loss", "loss_increase"});
  Series pts{"skip sets", {}, {}};
  for (const auto& row : r.rows) {
    std::string blocks;
    for (int b : row.skipped) blocks += (blocks.empty() ? "" : " ") + std::to_string(b);
    csv.row({std::to_string(row.skip_size), std::to_string(row.draw), blocks, format_double(row.mean_pi),
             format_double(row.holdout_loss), format_double(row.loss_increase)});
    if (row.skip_size > 0) {
      pts.x.push_back(row.mean_pi);
      pts.y.push_back(row.loss_increase);
    }
  }
  csv.write(fs::path(o.out) / "skip_experiment.csv", config.hash());
  write_scatter_svg(fs::path(o.out) / "skip_experiment.svg", "skipped blocks", "mean priority", "loss increase", {pts});
  std::cout << "skip sets " << r.rows.size() << ", baseline loss " << r.baseline_loss << ", spearman " << r.spearman
            << " (sum of pi: " << r.spearman_sum << ")\n";
}

void cmd_group(const Options& o) {
  const TrainConfig config = resolve_config(o);
  const BlockwiseDenoiser model = load_pretrained(o, config);
  if (!fs::exists(priorities_path(o))) throw InputError("priority report not found: " + priorities_path(o).string());
  const BlockPriorityTable table = read_priority_report(priorities_path(o));
  const SyntheticDataset data = make_dataset(config);
  const auto r = group_experiment(config, data, model, table, config.experiment.group_budget,
                                  config.experiment.group_eval_every, config.seed);
  fs::create_directories(o.out);
  CsvTable csv({"arm", "step", "holdout_loss"});
  std::vector<Series> curves;
  for (const GroupArm* arm : {&r.top, &r.bottom}) {
    Series s{arm->label, {}, {}};
    for (const auto& p : arm->curve) {
      csv.row({arm->label, std::to_string(p.step), format_double(p.holdout_loss)});
      s.x.push_back(static_cast<double>(p.step));
      s.y.push_back(p.holdout_loss);
    }
    curves.push_back(std::move(s));
  }
  csv.write(fs::path(o.out) / "group_experiment.csv", config.hash());
  write_line_svg(fs::path(o.out) / "group_experiment.svg", "top-q vs bottom-q", "step", "holdout loss", curves);
  std::cout << "q " << r.q << ": top " << r.top.final_loss() << ", bottom " << r.bottom.final_loss() << ", gap " << r.gap()
            << '\n';
}

void cmd_report(const Options& o) {
  const auto runs = find_manifests(o.out);
  const auto rows = compare_runs(runs);
  CsvTable csv({"run", "scheme", "final_holdout_loss", "adherence_error", "total_time", "block_updates",
                "peak_trainable_params", "loss_ratio", "time_ratio", "block_update_ratio", "peak_param_ratio"});
  std::vector<Series> curves;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& s = r.summary;
    csv.row({r.name, r.scheme, format_double(s.final_holdout_loss), format_double(r.adherence_error),
             format_double(s.total_time), format_double(s.block_updates), std::to_string(s.peak_trainable_params),
             format_double(s.loss_ratio), format_double(s.time_ratio), format_double(s.block_update_ratio),
             format_double(s.peak_param_ratio)});
    Series c{r.name, {}, {}};
    for (const auto& p : runs[i].second.loss_curve) {
      c.x.push_back(p.time);
      c.y.push_back(p.holdout_loss);
    }
    curves.push_back(std::move(c));
  }
  csv.write(fs::path(o.out) / "report.csv", runs.front().second.config_hash);
  write_line_svg(fs::path(o.out) / "report_loss_curves.svg", "holdout loss vs time", "time", "loss", curves);
  std::cout << csv.render(runs.front().second.config_hash);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropy-guided progressive training of a blockwise toy denoiser"};
  app.require_subcommand(0, 1);
  Options o;
  std::uint64_t seed = 0;
  bool print_config = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON config file");
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "seed override (beats config and ENTPROG_SEED)");
    sub->add_option("--scheme", o.scheme, "full | entprog | entprog_no_cei | entprog_no_adaptive");
  };
  app.add_flag("--print-config", print_config, "print the resolved config and exit");
  app.add_option("--config", o.config_path, "JSON config file");

  auto* pre = app.add_subcommand("pretrain", "generate the dataset and pretrain unconditionally");
  auto* cei = app.add_subcommand("cei", "rank blocks by conditional entropy increase");
  auto* train = app.add_subcommand("train", "progressive training run");
  auto* base = app.add_subcommand("baseline", "full-training baseline run");
  auto* skip = app.add_subcommand("skip-exp", "random block-skipping experiment");
  auto* group = app.add_subcommand("group-exp", "top-q vs bottom-q training experiment");
  auto* report = app.add_subcommand("report", "cross-run comparison table");
  for (auto* sub : {pre, cei, train, base, skip, group, report}) add_common(sub);
  for (auto* sub : {cei, train, base, skip, group})
    sub->add_option("--pretrained", o.pretrained, "pretrained checkpoint (default <out>/pretrained.ckpt)");
  for (auto* sub : {skip, group})
    sub->add_option("--priorities", o.priorities, "priority report (default <out>/priority_report.csv)");
  train->add_option("--resume", o.resume, "resume from a checkpoint");

  CLI11_PARSE(app, argc, argv);
  for (auto* sub : app.get_subcommands())
    if (sub->count("--seed")) o.seed = seed;

  try {
    if (print_config || app.get_subcommands().empty()) {
      std::cout << resolve_config(o).to_json().dump(2) << '\n';
      return kOk;
    }
    const auto* sub = app.get_subcommands().front();
    if (sub == pre) cmd_pretrain(o);
    else if (sub == cei) cmd_cei(o);
    else if (sub == train) cmd_train(o, false);
    else if (sub == base) cmd_train(o, true);
    else if (sub == skip) cmd_skip(o);
    else if (sub == group) cmd_group(o);
    else cmd_report(o);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kInput;
  } catch (const AccountingError& e) {
    std::cerr << "accounting error: " << e.what() << '\n';
    return kAccounting;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kParameter;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOk;
}
