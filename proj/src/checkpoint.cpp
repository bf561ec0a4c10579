#include "entprog/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace entprog {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'E', 'N', 'T', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw InputError("checkpoint truncated");
  return v;
}

}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof(kMagic));
  put(out, kVersion);
  const std::string text = meta.dump();
  put(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put(out, static_cast<std::uint64_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(out, static_cast<std::uint64_t>(t.rows()));
    put(out, static_cast<std::uint64_t>(t.cols()));
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.size())));
  }
  if (!out) throw InputError("failed writing " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) throw InputError("not a checkpoint: " + path.string());
  if (take<std::uint32_t>(in) != kVersion) throw InputError("unsupported checkpoint version");
  Checkpoint c;
  std::string text(take<std::uint64_t>(in), '\0');
  in.read(text.data(), static_cast<std::streamsize>(text.size()));
  if (!in) throw InputError("checkpoint truncated");
  c.meta = json::parse(text);
  const auto count = take<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(take<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto rows = take<std::uint64_t>(in);
    const auto cols = take<std::uint64_t>(in);
    Matrix t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(sizeof(double) * rows * cols));
    if (!in) throw InputError("checkpoint truncated");
    c.tensors.emplace(std::move(name), std::move(t));
  }
  return c;
}

json to_json(const DenoiserConfig& c) {
  return {{"input_dim", c.input_dim},   {"cond_dim", c.cond_dim},   {"hidden_dim", c.hidden_dim},
          {"mlp_dim", c.mlp_dim},       {"num_blocks", c.num_blocks}, {"time_features", c.time_features},
          {"num_timesteps", c.num_timesteps}};
}

DenoiserConfig denoiser_config_from_json(const json& j) {
  DenoiserConfig c;
  c.input_dim = j.at("input_dim").get<int>();
  c.cond_dim = j.at("cond_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.mlp_dim = j.at("mlp_dim").get<int>();
  c.num_blocks = j.at("num_blocks").get<int>();
  c.time_features = j.at("time_features").get<int>();
  c.num_timesteps = j.at("num_timesteps").get<int>();
  return c;
}

void store_model(Checkpoint& ckpt, const BlockwiseDenoiser& model) {
  ckpt.meta["architecture"] = to_json(model.config());
  model.params().for_each([&](const std::string& name, int, const Matrix& t) { ckpt.tensors[name] = t; });
}

BlockwiseDenoiser restore_model(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("architecture")) throw InputError("checkpoint has no model");
  const DenoiserConfig config = denoiser_config_from_json(ckpt.meta["architecture"]);
  BlockwiseDenoiser model(config, 0);
  model.params().for_each([&](const std::string& name, int, Matrix& t) {
    const auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw InputError("checkpoint is missing tensor " + name);
    if (it->second.rows() != t.rows() || it->second.cols() != t.cols()) throw InputError("checkpoint tensor " + name + " has wrong shape");
    t = it->second;
  });
  return model;
}

void store_optimizer(Checkpoint& ckpt, const Optimizer& optimizer) {
  const auto& c = optimizer.config();
  ckpt.meta["optimizer"] = {{"kind", to_string(c.kind)},       {"learning_rate", c.learning_rate},
                            {"momentum", c.momentum},          {"beta1", c.beta1},
                            {"beta2", c.beta2},                {"epsilon", c.epsilon},
                            {"step_counts", optimizer.step_counts()}};
  optimizer.first_moment().for_each([&](const std::string& name, int, const Matrix& t) { ckpt.tensors["opt.m1." + name] = t; });
  if (c.kind == OptimizerKind::kAdam)
    optimizer.second_moment().for_each([&](const std::string& name, int, const Matrix& t) { ckpt.tensors["opt.m2." + name] = t; });
}

Optimizer restore_optimizer(const Checkpoint& ckpt, const DenoiserParams& like) {
  if (!ckpt.meta.contains("optimizer")) throw InputError("checkpoint has no optimizer state");
  const auto& j = ckpt.meta["optimizer"];
  OptimizerConfig c;
  c.kind = parse_optimizer_kind(j.at("kind").get<std::string>());
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  Optimizer opt(c, like);
  opt.step_counts() = j.at("step_counts").get<std::vector<std::int64_t>>();
  auto load_slots = [&](DenoiserParams& slots, const std::string& prefix) {
    slots.for_each([&](const std::string& name, int, Matrix& t) {
      const auto it = ckpt.tensors.find(prefix + name);
      if (it == ckpt.tensors.end()) throw InputError("checkpoint is missing tensor " + prefix + name);
      t = it->second;
    });
  };
  load_slots(opt.first_moment(), "opt.m1.");
  if (c.kind == OptimizerKind::kAdam) load_slots(opt.second_moment(), "opt.m2.");
  return opt;
}

}  // namespace entprog
