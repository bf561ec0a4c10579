#include "entprog/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "entprog/schedule.hpp"

namespace entprog {

using nlohmann::json;

Scheme parse_scheme(const std::string& name) {
  if (name == "full") return Scheme::kFull;
  if (name == "entprog") return Scheme::kEntProg;
  if (name == "entprog_no_cei") return Scheme::kEntProgNoCei;
  if (name == "entprog_no_adaptive") return Scheme::kEntProgNoAdaptive;
  throw ValidationError("unknown scheme '" + name + "'");
}

std::string to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::kFull: return "full";
    case Scheme::kEntProg: return "entprog";
    case Scheme::kEntProgNoCei: return "entprog_no_cei";
    case Scheme::kEntProgNoAdaptive: return "entprog_no_adaptive";
  }
  return "?";
}

DenoiserConfig TrainConfig::denoiser_config() const {
  DenoiserConfig c;
  c.input_dim = data.grid * data.grid;
  c.cond_dim = 2 * PoseCondition::kNumKeypoints;
  c.hidden_dim = model.hidden;
  c.mlp_dim = model.mlp;
  c.num_blocks = model.blocks;
  c.time_features = model.time_features;
  c.num_timesteps = diffusion.timesteps;
  return c;
}

NoiseSchedule TrainConfig::noise_schedule() const {
  return make_schedule(diffusion.timesteps, diffusion.kind, diffusion.beta_min, diffusion.beta_max);
}

int TrainConfig::initial_unfrozen() const {
  return schedule.initial_m > 0 ? schedule.initial_m : default_initial_unfrozen(model.blocks);
}

int TrainConfig::candidate_stride() const {
  return schedule.stride > 0 ? schedule.stride : default_candidate_stride(model.blocks);
}

int TrainConfig::supernet_epoch_steps() const {
  return static_cast<int>((data.train_items + static_cast<std::size_t>(train.batch_size) - 1) /
                          static_cast<std::size_t>(train.batch_size));
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("config: " + msg); };
  if (model.blocks < 4) fail("denoiser.blocks must be >= 4");
  if (model.hidden < 1 || model.mlp < 1) fail("denoiser widths must be positive");
  if (model.time_features < 2 || model.time_features % 2) fail("denoiser.time_features must be even and >= 2");
  if (diffusion.timesteps < 2) fail("diffusion.timesteps must be >= 2");
  if (!(diffusion.beta_min > 0.0 && diffusion.beta_min <= diffusion.beta_max && diffusion.beta_max < 1.0))
    fail("diffusion betas must satisfy 0 < beta_min <= beta_max < 1");
  if (!(diffusion.cfg_dropout >= 0.0 && diffusion.cfg_dropout <= 1.0)) fail("diffusion.cfg_dropout must be in [0, 1]");
  if (diffusion.sample_steps < 1 || diffusion.sample_steps > diffusion.timesteps)
    fail("diffusion.sample_steps must be in [1, timesteps]");
  if (diffusion.adherence_samples < 0) fail("diffusion.adherence_samples must be >= 0");
  if (data.grid < 8) fail("data.grid must be >= 8");
  if (data.train_items < 1) fail("data.train_items must be >= 1");
  if (data.holdout_items < 1) fail("data.holdout_items must be >= 1");
  if (static_cast<std::size_t>(diffusion.adherence_samples) > data.holdout_items)
    fail("diffusion.adherence_samples exceeds data.holdout_items");
  if (!(optimizer.learning_rate >= 0.0)) fail("optimizer.learning_rate must be >= 0");
  if (train.total_steps < 1 || train.stages < 1) fail("train.total_steps and train.stages must be positive");
  if (train.total_steps % train.stages != 0) fail("train.total_steps must be divisible by train.stages");
  if (train.batch_size < 1) fail("train.batch_size must be >= 1");
  if (train.log_every < 1) fail("train.log_every must be >= 1");
  if (train.pretrain_steps < 0) fail("train.pretrain_steps must be >= 0");
  if (schedule.initial_m < 0 || schedule.initial_m > model.blocks) fail("schedule.initial_m must be in [0, L]");
  if (schedule.stride < 0) fail("schedule.stride must be >= 0");
  if (schedule.num_candidates < 1) fail("schedule.num_candidates must be >= 1");
  if (cei.samples < 1) fail("cei.samples must be >= 1");
  if (cei.groups < 1 || cei.groups > cei.samples) fail("cei.groups must be in [1, cei.samples]");
  if (cei.groups > data.train_items) fail("cei.groups exceeds data.train_items");
  if (supernet.eval_every < 1) fail("supernet.eval_every must be >= 1");
  if (clock.kind == ClockKind::kCostModel && !(clock.a >= 0.0 && clock.b >= 0.0 && (clock.a > 0.0 || clock.b > 0.0)))
    fail("clock cost model needs a, b >= 0, not both zero");
  if (experiment.skip_min < 0 || experiment.skip_draws < 1) fail("experiment skip range invalid");
  if (experiment.group_budget < 0 || experiment.group_eval_every < 1) fail("experiment group settings invalid");
  if (experiment.seeds.empty()) fail("experiment.seeds must not be empty");
  const bool adaptive = train.scheme == Scheme::kEntProg || train.scheme == Scheme::kEntProgNoCei;
  if (adaptive && supernet_epoch_steps() > stage_steps())
    fail("a stage (" + std::to_string(stage_steps()) + " steps) is shorter than one supernet epoch (" +
         std::to_string(supernet_epoch_steps()) + " steps)");
}

json TrainConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["denoiser"] = {{"blocks", model.blocks}, {"hidden", model.hidden}, {"mlp", model.mlp},
                   {"time_features", model.time_features}};
  j["diffusion"] = {{"timesteps", diffusion.timesteps},
                    {"kind", to_string(diffusion.kind)},
                    {"beta_min", diffusion.beta_min},
                    {"beta_max", diffusion.beta_max},
                    {"cfg_dropout", diffusion.cfg_dropout},
                    {"sample_steps", diffusion.sample_steps},
                    {"guidance_scale", diffusion.guidance_scale},
                    {"adherence_samples", diffusion.adherence_samples}};
  j["synth_data"] = {{"train_items", data.train_items}, {"holdout_items", data.holdout_items}, {"grid", data.grid}};
  j["optimizer"] = {{"kind", to_string(optimizer.kind)},  {"learning_rate", optimizer.learning_rate},
                    {"momentum", optimizer.momentum},     {"beta1", optimizer.beta1},
                    {"beta2", optimizer.beta2},           {"epsilon", optimizer.epsilon}};
  j["trainer"] = {{"scheme", to_string(train.scheme)},     {"total_steps", train.total_steps},
                  {"stages", train.stages},                {"batch_size", train.batch_size},
                  {"log_every", train.log_every},          {"pretrain_steps", train.pretrain_steps}};
  j["schedule"] = {{"initial_m", schedule.initial_m}, {"stride", schedule.stride},
                   {"num_candidates", schedule.num_candidates}};
  j["cei"] = {{"samples", cei.samples}, {"groups", cei.groups}, {"estimator", to_string(cei.estimator)},
              {"recompute_per_stage", cei.recompute_per_stage}};
  j["supernet"] = {{"eval_every", supernet.eval_every}};
  j["clock"] = {{"kind", to_string(clock.kind)}, {"a", clock.a}, {"b", clock.b}};
  j["experiment"] = {{"skip_min", experiment.skip_min},         {"skip_max", experiment.skip_max},
                     {"skip_draws", experiment.skip_draws},     {"group_budget", experiment.group_budget},
                     {"group_eval_every", experiment.group_eval_every}, {"seeds", experiment.seeds}};
  return j;
}

namespace {

/// Reads keys of one section, rejecting keys it does not know.
class SectionReader {
 public:
  SectionReader(const json& root, const std::string& name) : name_(name) {
    if (!root.contains(name)) return;
    section_ = &root.at(name);
    if (!section_->is_object()) throw ValidationError("config: section '" + name + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    known_.insert(key);
    if (!section_ || !section_->contains(key)) return;
    try {
      out = section_->at(key).get<T>();
    } catch (const json::exception& e) {
      throw ValidationError("config: " + name_ + "." + key + ": " + e.what());
    }
  }

  template <typename Enum, typename Parse>
  void get_enum(const char* key, Enum& out, Parse parse) {
    std::string s;
    get(key, s);
    if (s.empty()) return;
    try {
      out = parse(s);
    } catch (const Error& e) {
      throw ValidationError("config: " + name_ + "." + key + ": " + e.what());
    }
  }

  void finish() const {
    if (!section_) return;
    for (auto it = section_->begin(); it != section_->end(); ++it)
      if (!known_.count(it.key())) throw ValidationError("config: unknown key " + name_ + "." + it.key());
  }

 private:
  std::string name_;
  const json* section_ = nullptr;
  std::set<std::string> known_;
};

}  // namespace

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  static const std::set<std::string> sections = {"seed",     "denoiser", "diffusion", "synth_data", "optimizer", "trainer",
                                                 "schedule", "cei",      "supernet",  "clock",      "experiment"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!sections.count(it.key())) throw ValidationError("config: unknown section '" + it.key() + "'");

  TrainConfig c;
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer()) throw ValidationError("config: seed must be an integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  {
    SectionReader r(j, "denoiser");
    r.get("blocks", c.model.blocks);
    r.get("hidden", c.model.hidden);
    r.get("mlp", c.model.mlp);
    r.get("time_features", c.model.time_features);
    r.finish();
  }
  {
    SectionReader r(j, "diffusion");
    r.get("timesteps", c.diffusion.timesteps);
    r.get_enum("kind", c.diffusion.kind, parse_schedule_kind);
    r.get("beta_min", c.diffusion.beta_min);
    r.get("beta_max", c.diffusion.beta_max);
    r.get("cfg_dropout", c.diffusion.cfg_dropout);
    r.get("sample_steps", c.diffusion.sample_steps);
    r.get("guidance_scale", c.diffusion.guidance_scale);
    r.get("adherence_samples", c.diffusion.adherence_samples);
    r.finish();
  }
  {
    SectionReader r(j, "synth_data");
    r.get("train_items", c.data.train_items);
    r.get("holdout_items", c.data.holdout_items);
    r.get("grid", c.data.grid);
    r.finish();
  }
  {
    SectionReader r(j, "optimizer");
    r.get_enum("kind", c.optimizer.kind, parse_optimizer_kind);
    r.get("learning_rate", c.optimizer.learning_rate);
    r.get("momentum", c.optimizer.momentum);
    r.get("beta1", c.optimizer.beta1);
    r.get("beta2", c.optimizer.beta2);
    r.get("epsilon", c.optimizer.epsilon);
    r.finish();
  }
  {
    SectionReader r(j, "trainer");
    r.get_enum("scheme", c.train.scheme, parse_scheme);
    r.get("total_steps", c.train.total_steps);
    r.get("stages", c.train.stages);
    r.get("batch_size", c.train.batch_size);
    r.get("log_every", c.train.log_every);
    r.get("pretrain_steps", c.train.pretrain_steps);
    r.finish();
  }
  {
    SectionReader r(j, "schedule");
    r.get("initial_m", c.schedule.initial_m);
    r.get("stride", c.schedule.stride);
    r.get("num_candidates", c.schedule.num_candidates);
    r.finish();
  }
  {
    SectionReader r(j, "cei");
    r.get("samples", c.cei.samples);
    r.get("groups", c.cei.groups);
    r.get_enum("estimator", c.cei.estimator, parse_dispersion_estimator);
    r.get("recompute_per_stage", c.cei.recompute_per_stage);
    r.finish();
  }
  {
    SectionReader r(j, "supernet");
    r.get("eval_every", c.supernet.eval_every);
    r.finish();
  }
  {
    SectionReader r(j, "clock");
    r.get_enum("kind", c.clock.kind, parse_clock_kind);
    r.get("a", c.clock.a);
    r.get("b", c.clock.b);
    r.finish();
  }
  {
    SectionReader r(j, "experiment");
    r.get("skip_min", c.experiment.skip_min);
    r.get("skip_max", c.experiment.skip_max);
    r.get("skip_draws", c.experiment.skip_draws);
    r.get("group_budget", c.experiment.group_budget);
    r.get("group_eval_every", c.experiment.group_eval_every);
    r.get("seeds", c.experiment.seeds);
    r.finish();
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("config: " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::string TrainConfig::hash() const {
  const std::string dump = to_json().dump();
  const std::uint64_t h = fnv1a(dump.data(), dump.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace entprog
