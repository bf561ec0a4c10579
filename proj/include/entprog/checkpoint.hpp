#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "entprog/denoiser.hpp"
#include "entprog/optimizer.hpp"

namespace entprog {

/// Portable container: a JSON metadata document plus named float64 arrays.
/// Layout: "ENTPCKPT", u32 version, u64 metadata length, metadata bytes,
/// u64 tensor count, then per tensor (u32 name length, name, u64 rows,
/// u64 cols, column-major doubles). Tensors are stored in key order, so equal
/// contents give equal files.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Matrix> tensors;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

nlohmann::json to_json(const DenoiserConfig& c);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);

/// Model parameters under "block.<i>.<tensor>" / periphery names, with the
/// architecture in meta["architecture"].
void store_model(Checkpoint& ckpt, const BlockwiseDenoiser& model);
BlockwiseDenoiser restore_model(const Checkpoint& ckpt);

/// Optimizer slots under "opt.m1.<name>" / "opt.m2.<name>", settings and step
/// counters in meta["optimizer"].
void store_optimizer(Checkpoint& ckpt, const Optimizer& optimizer);
Optimizer restore_optimizer(const Checkpoint& ckpt, const DenoiserParams& like);

}  // namespace entprog
