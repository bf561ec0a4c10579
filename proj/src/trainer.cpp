#include "entprog/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "entprog/rng.hpp"
#include "entprog/training.hpp"

namespace entprog {

using nlohmann::json;

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double from_finite_or_null(const json& j) {
  return j.is_null() ? -std::numeric_limits<double>::infinity() : j.get<double>();
}

json stage_to_json(const StageResult& s) {
  json j;
  j["stage"] = s.stage;
  j["candidates"] = s.candidates.values;
  j["trace"] = s.trace ? to_json(*s.trace) : json(nullptr);
  j["ce_report"] = to_json(s.report);
  j["selected_m"] = s.selected_m;
  j["supernet_steps"] = s.supernet_steps;
  j["remainder_steps"] = s.remainder_steps;
  j["trainable_params"] = s.trainable_params;
  j["peak_trainable_params"] = s.peak_trainable_params;
  j["stage_time"] = s.stage_time;
  j["cumulative_time"] = s.cumulative_time;
  j["cumulative_block_updates"] = s.cumulative_block_updates;
  return j;
}

StageResult stage_from_json(const json& j) {
  StageResult s;
  s.stage = j.at("stage").get<int>();
  s.candidates.values = j.at("candidates").get<std::vector<int>>();
  if (!j.at("trace").is_null()) s.trace = trace_from_json(j.at("trace"));
  s.report = ce_report_from_json(j.at("ce_report"));
  s.selected_m = j.at("selected_m").get<int>();
  s.supernet_steps = j.at("supernet_steps").get<int>();
  s.remainder_steps = j.at("remainder_steps").get<int>();
  s.trainable_params = j.at("trainable_params").get<std::size_t>();
  s.peak_trainable_params = j.at("peak_trainable_params").get<std::size_t>();
  s.stage_time = j.at("stage_time").get<double>();
  s.cumulative_time = j.at("cumulative_time").get<double>();
  s.cumulative_block_updates = j.at("cumulative_block_updates").get<double>();
  return s;
}

std::vector<std::size_t> sample_with_replacement(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(count);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
  return idx;
}

double ratio(double value, double reference) {
  if (reference == 0.0) return value == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return value / reference;
}

}  // namespace

json to_json(const BlockPriorityTable& t) {
  json est = json::array();
  for (const auto& e : t.estimates)
    est.push_back({{"block", e.block},
                   {"sigma_full", e.sigma_full},
                   {"sigma_skip", e.sigma_skip},
                   {"pi", e.pi},
                   {"clamped", e.clamped}});
  return {{"estimates", est}, {"ranking", t.ranking}};
}

BlockPriorityTable priority_table_from_json(const json& j) {
  BlockPriorityTable t;
  for (const auto& e : j.at("estimates")) {
    CEIEstimate c;
    c.block = e.at("block").get<int>();
    c.sigma_full = e.at("sigma_full").get<double>();
    c.sigma_skip = e.at("sigma_skip").get<double>();
    c.pi = e.at("pi").get<double>();
    c.clamped = e.at("clamped").get<bool>();
    t.estimates.push_back(c);
  }
  t.ranking = j.at("ranking").get<std::vector<int>>();
  return t;
}

json to_json(const SupernetTrace& t) {
  json recs = json::array();
  for (const auto& r : t.records) recs.push_back({r.step, r.sampled_m, r.wall_time, r.holdout_loss, r.evaluated});
  return {{"initial_loss", t.initial_loss}, {"records", recs}};
}

SupernetTrace trace_from_json(const json& j) {
  SupernetTrace t;
  t.initial_loss = j.at("initial_loss").get<double>();
  for (const auto& r : j.at("records"))
    t.records.push_back({r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<double>(), r.at(3).get<double>(),
                         r.at(4).get<bool>()});
  return t;
}

json to_json(const CEReport& r) {
  json c = json::array();
  for (const auto& e : r.candidates)
    c.push_back({{"m", e.m},
                 {"steps_taken", e.steps_taken},
                 {"delta_loss", e.delta_loss},
                 {"total_time", e.total_time},
                 {"ce", finite_or_null(e.ce)},
                 {"selected", e.selected}});
  return {{"candidates", c}, {"selected_m", r.selected_m}};
}

CEReport ce_report_from_json(const json& j) {
  CEReport r;
  for (const auto& e : j.at("candidates")) {
    CandidateEfficiency c;
    c.m = e.at("m").get<int>();
    c.steps_taken = e.at("steps_taken").get<int>();
    c.delta_loss = e.at("delta_loss").get<double>();
    c.total_time = e.at("total_time").get<double>();
    c.ce = from_finite_or_null(e.at("ce"));
    c.selected = e.at("selected").get<bool>();
    r.candidates.push_back(c);
  }
  r.selected_m = j.at("selected_m").get<int>();
  return r;
}

double StageResult::block_updates() const {
  double n = static_cast<double>(remainder_steps) * selected_m;
  if (trace)
    for (const auto& r : trace->records) n += r.sampled_m;
  return n;
}

json RunManifest::to_json() const {
  json j;
  j["config"] = config;
  j["config_hash"] = config_hash;
  j["scheme"] = scheme;
  j["num_blocks"] = num_blocks;
  j["total_steps"] = total_steps;
  j["priorities"] = priorities ? entprog::to_json(*priorities) : json(nullptr);
  json st = json::array();
  for (const auto& s : stages) st.push_back(stage_to_json(s));
  j["stages"] = st;
  json curve = json::array();
  for (const auto& p : loss_curve) curve.push_back({p.step, p.time, p.holdout_loss});
  j["loss_curve"] = curve;
  j["initial_holdout_loss"] = initial_holdout_loss;
  j["final_holdout_loss"] = final_holdout_loss;
  j["adherence_error"] = adherence_error;
  j["final_param_digest"] = final_param_digest;
  j["complete"] = complete;
  return j;
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  try {
    m.config = j.at("config");
    m.config_hash = j.at("config_hash").get<std::string>();
    m.scheme = j.at("scheme").get<std::string>();
    m.num_blocks = j.at("num_blocks").get<int>();
    m.total_steps = j.at("total_steps").get<std::int64_t>();
    if (!j.at("priorities").is_null()) m.priorities = priority_table_from_json(j.at("priorities"));
    for (const auto& s : j.at("stages")) m.stages.push_back(stage_from_json(s));
    for (const auto& p : j.at("loss_curve"))
      m.loss_curve.push_back({p.at(0).get<std::int64_t>(), p.at(1).get<double>(), p.at(2).get<double>()});
    m.initial_holdout_loss = j.at("initial_holdout_loss").get<double>();
    m.final_holdout_loss = j.at("final_holdout_loss").get<double>();
    m.adherence_error = j.at("adherence_error").get<double>();
    m.final_param_digest = j.at("final_param_digest").get<std::uint64_t>();
    m.complete = j.at("complete").get<bool>();
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

AccountingSummary accounting_summary(const RunManifest& manifest, const RunManifest& reference) {
  auto summarize = [](const RunManifest& m) {
    if (!m.complete || m.stages.empty()) throw AccountingError("accounting_summary: manifest is incomplete");
    AccountingSummary s;
    for (const auto& st : m.stages) {
      s.block_updates += st.block_updates();
      s.peak_trainable_params = std::max(s.peak_trainable_params, st.peak_trainable_params);
      s.total_time += st.stage_time;
    }
    s.final_holdout_loss = m.final_holdout_loss;
    return s;
  };
  AccountingSummary s = summarize(manifest);
  const AccountingSummary r = summarize(reference);
  s.block_update_ratio = ratio(s.block_updates, r.block_updates);
  s.peak_param_ratio = ratio(static_cast<double>(s.peak_trainable_params), static_cast<double>(r.peak_trainable_params));
  s.time_ratio = ratio(s.total_time, r.total_time);
  s.loss_ratio = ratio(s.final_holdout_loss, r.final_holdout_loss);
  return s;
}

AccountingSummary accounting_summary(const RunManifest& manifest) { return accounting_summary(manifest, manifest); }

SyntheticDataset make_dataset(const TrainConfig& config) {
  return generate_dataset(config.seed, config.data.train_items, config.data.holdout_items, config.data.grid);
}

BlockwiseDenoiser pretrain(const TrainConfig& config, const SyntheticDataset& data) {
  config.validate();
  BlockwiseDenoiser model(config.denoiser_config(), config.seed);
  Optimizer opt(config.optimizer, model.params());
  const NoiseSchedule sched = config.noise_schedule();
  DenoiserParams grads;
  for (int s = 0; s < config.train.pretrain_steps; ++s) {
    Rng rng(derive_seed(config.seed, {kStreamPretrain, static_cast<std::uint64_t>(s)}));
    const auto idx = sample_with_replacement(data.train_count, static_cast<std::size_t>(config.train.batch_size), rng);
    const auto batch = make_training_batch(data, idx, sched, ConditionMode::kNull, 1.0, rng);
    train_step(model, opt, batch, grads);
  }
  model.apply_freeze_mask(FreezeMask::full(model.num_blocks()));
  return model;
}

double sample_adherence(const BlockwiseDenoiser& model, const SyntheticDataset& data, const TrainConfig& config, int count) {
  if (count <= 0) return 0.0;
  const NoiseSchedule sched = config.noise_schedule();
  const auto holdout = data.holdout_indices();
  if (static_cast<std::size_t>(count) > holdout.size()) throw ParameterError("sample_adherence: not enough holdout items");
  double sum = 0.0;
  for (int i = 0; i < count; ++i) {
    const auto& c = data.conditions[holdout[static_cast<std::size_t>(i)]];
    const Vector x = ddpm_sample(model, c.to_vector(), sched, config.diffusion.sample_steps, config.diffusion.guidance_scale,
                                 derive_seed(config.seed, {kStreamSample, static_cast<std::uint64_t>(i)}));
    const Vector img = to_image_space(x).cwiseMax(0.0).cwiseMin(1.0);
    sum += adherence_error(img, c);
  }
  return sum / count;
}

Trainer::Trainer(TrainConfig config, const SyntheticDataset& data, BlockwiseDenoiser pretrained)
    : Trainer(std::move(config), data, std::move(pretrained), std::nullopt) {
  const int l = model_.num_blocks();
  switch (config_.train.scheme) {
    case Scheme::kFull:
      table_ = BlockPriorityTable::natural_order(l);
      break;
    case Scheme::kEntProgNoCei:
      table_ = BlockPriorityTable::natural_order(l);
      manifest_.priorities = table_;
      break;
    case Scheme::kEntProg:
    case Scheme::kEntProgNoAdaptive: {
      const auto samples = make_priority_samples(data_, sched_, config_.cei.samples, config_.cei.groups, config_.seed);
      table_ = rank_blocks(model_, samples, config_.cei.estimator);
      manifest_.priorities = table_;
      break;
    }
  }
  m_prev_ = config_.initial_unfrozen();
  manifest_.initial_holdout_loss = holdout_eval(model_, holdout_);
  manifest_.loss_curve.push_back({0, 0.0, manifest_.initial_holdout_loss});
}

Trainer::Trainer(TrainConfig config, const SyntheticDataset& data, BlockwiseDenoiser model,
                 std::optional<Optimizer> optimizer)
    : config_(std::move(config)),
      data_(data),
      sched_(config_.noise_schedule()),
      holdout_(),
      model_(std::move(model)),
      optimizer_(optimizer ? std::move(*optimizer) : Optimizer(config_.optimizer, model_.params())),
      clock_(make_clock(config_.clock)) {
  config_.validate();
  if (data_.grid != config_.data.grid || data_.train_count != config_.data.train_items ||
      data_.holdout_count != config_.data.holdout_items)
    throw ValidationError("trainer: dataset does not match config");
  if (!(model_.config() == config_.denoiser_config())) throw ValidationError("trainer: model does not match config");
  holdout_ = make_holdout_set(data_, sched_, config_.seed);
  manifest_.config = config_.to_json();
  manifest_.config_hash = config_.hash();
  manifest_.scheme = to_string(config_.train.scheme);
  manifest_.num_blocks = model_.num_blocks();
  manifest_.total_steps = config_.train.total_steps;
}

bool Trainer::adaptive() const {
  return config_.train.scheme == Scheme::kEntProg || config_.train.scheme == Scheme::kEntProgNoCei;
}

void Trainer::run(std::optional<std::int64_t> stop_at_step) {
  while (phase_ != Phase::kDone) {
    if (phase_ == Phase::kStageStart) {
      begin_stage();
      continue;
    }
    if (stop_at_step && global_step_ >= *stop_at_step) return;
    if (phase_ == Phase::kSupernet) supernet_step();
    else remainder_step();
  }
}

void Trainer::begin_stage() {
  const int l = model_.num_blocks();
  const int k = config_.train.stages;
  current_ = StageResult{};
  current_.stage = stage_;
  phase_step_ = 0;

  const bool uses_cei = config_.train.scheme == Scheme::kEntProg || config_.train.scheme == Scheme::kEntProgNoAdaptive;
  if (uses_cei && config_.cei.recompute_per_stage && stage_ > 1) {
    const auto samples = make_priority_samples(data_, sched_, config_.cei.samples, config_.cei.groups, config_.seed);
    table_ = rank_blocks(model_, samples, config_.cei.estimator);
  }

  if (adaptive()) {
    current_.candidates = make_candidate_set(stage_, k, m_prev_, l, config_.schedule.num_candidates, config_.candidate_stride());
    current_.trace = SupernetTrace{quantize_loss(holdout_eval(model_, holdout_)), {}};
    phase_ = Phase::kSupernet;
    return;
  }
  current_.selected_m = config_.train.scheme == Scheme::kFull ? l : linear_unfrozen_count(stage_, k, l);
  current_.candidates = {{current_.selected_m}};
  current_.remainder_steps = config_.stage_steps();
  phase_ = Phase::kRemainder;
}

void Trainer::account_step(std::size_t trainable, int blocks, double time) {
  current_.peak_trainable_params = std::max(current_.peak_trainable_params, trainable);
  current_.stage_time += time;
  cumulative_time_ += time;
  cumulative_updates_ += blocks;
  ++phase_step_;
  ++global_step_;
  if (global_step_ % config_.train.log_every == 0) log_curve_point();
}

void Trainer::log_curve_point() {
  manifest_.loss_curve.push_back({global_step_, cumulative_time_, holdout_eval(model_, holdout_)});
}

void Trainer::supernet_step() {
  NestedSupernet net(model_, optimizer_, current_.candidates, table_);
  SupernetOptions opt;
  opt.stage = stage_;
  opt.batch_size = config_.train.batch_size;
  opt.eval_every = config_.supernet.eval_every;
  opt.condition_mode = ConditionMode::kDropout;
  opt.drop_probability = config_.diffusion.cfg_dropout;
  opt.seed = config_.seed;
  auto& records = current_.trace->records;
  const double last = records.empty() ? current_.trace->initial_loss : records.back().holdout_loss;
  const StepRecord rec = net.step(phase_step_ + 1, data_, sched_, holdout_, *clock_, opt, last);
  records.push_back(rec);
  account_step(count_trainable_params(model_, model_.freeze_mask()), rec.sampled_m, rec.wall_time);
  if (phase_step_ == net.epoch_steps(data_, config_.train.batch_size)) finish_supernet();
}

void Trainer::finish_supernet() {
  current_.report = convergence_efficiency(current_.trace->records, current_.trace->initial_loss, current_.candidates.values);
  current_.selected_m = select_candidate(current_.report);
  current_.supernet_steps = phase_step_;
  current_.remainder_steps = config_.stage_steps() - phase_step_;
  phase_step_ = 0;
  phase_ = Phase::kRemainder;
  if (current_.remainder_steps == 0) finish_stage();
}

void Trainer::remainder_step() {
  const FreezeMask mask = select_subnetwork(table_, current_.selected_m);
  model_.apply_freeze_mask(mask);
  Rng rng(derive_seed(config_.seed, {kStreamTrain, static_cast<std::uint64_t>(global_step_)}));
  const auto idx = sample_with_replacement(data_.train_count, static_cast<std::size_t>(config_.train.batch_size), rng);
  const auto batch = make_training_batch(data_, idx, sched_, ConditionMode::kDropout, config_.diffusion.cfg_dropout, rng);
  const std::size_t trainable = count_trainable_params(model_, mask);
  clock_->start_step();
  train_step(model_, optimizer_, batch, grads_);
  const double time = clock_->finish_step(trainable);
  account_step(trainable, current_.selected_m, time);
  if (phase_step_ == current_.remainder_steps) finish_stage();
}

void Trainer::finish_stage() {
  current_.trainable_params = count_trainable_params(model_, select_subnetwork(table_, current_.selected_m));
  current_.cumulative_time = cumulative_time_;
  current_.cumulative_block_updates = cumulative_updates_;
  manifest_.stages.push_back(current_);
  m_prev_ = current_.selected_m;
  phase_step_ = 0;
  if (++stage_ > config_.train.stages) finish_run();
  else phase_ = Phase::kStageStart;
}

void Trainer::finish_run() {
  model_.apply_freeze_mask(FreezeMask::full(model_.num_blocks()));
  if (manifest_.loss_curve.back().step != global_step_) log_curve_point();
  manifest_.final_holdout_loss = manifest_.loss_curve.back().holdout_loss;
  manifest_.adherence_error = sample_adherence(model_, data_, config_, config_.diffusion.adherence_samples);
  manifest_.final_param_digest = model_.params().digest();
  manifest_.complete = true;
  phase_ = Phase::kDone;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  store_model(c, model_);
  store_optimizer(c, optimizer_);
  c.meta["config"] = config_.to_json();
  c.meta["priority_table"] = to_json(table_);
  c.meta["manifest"] = manifest_.to_json();
  c.meta["trainer"] = {{"phase", static_cast<int>(phase_)},
                       {"stage", stage_},
                       {"m_prev", m_prev_},
                       {"phase_step", phase_step_},
                       {"global_step", global_step_},
                       {"cumulative_time", cumulative_time_},
                       {"cumulative_block_updates", cumulative_updates_},
                       {"current_stage", stage_to_json(current_)},
                       {"rng", {{"seed", config_.seed}, {"step", global_step_}}}};
  return c;
}

Trainer Trainer::resume(const Checkpoint& ckpt, const SyntheticDataset& data) {
  try {
    const TrainConfig config = TrainConfig::from_json(ckpt.meta.at("config"));
    BlockwiseDenoiser model = restore_model(ckpt);
    Optimizer opt = restore_optimizer(ckpt, model.params());
    Trainer t(config, data, std::move(model), std::move(opt));
    t.table_ = priority_table_from_json(ckpt.meta.at("priority_table"));
    t.manifest_ = RunManifest::from_json(ckpt.meta.at("manifest"));
    const auto& s = ckpt.meta.at("trainer");
    t.phase_ = static_cast<Phase>(s.at("phase").get<int>());
    t.stage_ = s.at("stage").get<int>();
    t.m_prev_ = s.at("m_prev").get<int>();
    t.phase_step_ = s.at("phase_step").get<int>();
    t.global_step_ = s.at("global_step").get<std::int64_t>();
    t.cumulative_time_ = s.at("cumulative_time").get<double>();
    t.cumulative_updates_ = s.at("cumulative_block_updates").get<double>();
    t.current_ = stage_from_json(s.at("current_stage"));
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed checkpoint: ") + e.what());
  }
}

RunManifest run_entprog(const TrainConfig& config, const SyntheticDataset& data, const BlockwiseDenoiser& pretrained) {
  if (config.train.scheme == Scheme::kFull) throw ParameterError("run_entprog: scheme must be an Ent-Prog variant");
  Trainer t(config, data, pretrained);
  t.run();
  return t.manifest();
}

RunManifest run_full_baseline(const TrainConfig& config, const SyntheticDataset& data, const BlockwiseDenoiser& pretrained) {
  if (config.train.scheme != Scheme::kFull) throw ParameterError("run_full_baseline: scheme must be full");
  Trainer t(config, data, pretrained);
  t.run();
  return t.manifest();
}

}  // namespace entprog
