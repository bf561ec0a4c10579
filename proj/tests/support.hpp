#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "entprog/config.hpp"
#include "entprog/denoiser.hpp"
#include "entprog/rng.hpp"
#include "entprog/synth_data.hpp"

namespace entprog::testing {

inline DenoiserConfig tiny_denoiser(int blocks = 4, int input = 6, int hidden = 5, int mlp = 7) {
  DenoiserConfig c;
  c.input_dim = input;
  c.cond_dim = 2 * PoseCondition::kNumKeypoints;
  c.hidden_dim = hidden;
  c.mlp_dim = mlp;
  c.num_blocks = blocks;
  c.time_features = 4;
  c.num_timesteps = 100;
  return c;
}

inline void zero_residual(BlockParams& b) {
  b.w_out.setZero();
  b.b_out.setZero();
}

/// Small end-to-end config: 8x8 images, a few hundred items, short stages.
inline TrainConfig small_config(std::uint64_t seed = 0) {
  TrainConfig c;
  c.seed = seed;
  c.data.grid = 8;
  c.data.train_items = 96;
  c.data.holdout_items = 16;
  c.model.blocks = 6;
  c.model.hidden = 16;
  c.model.mlp = 24;
  c.model.time_features = 8;
  c.diffusion.timesteps = 100;
  c.diffusion.sample_steps = 10;
  c.diffusion.adherence_samples = 2;
  c.train.total_steps = 48;
  c.train.stages = 3;
  c.train.batch_size = 16;
  c.train.log_every = 4;
  c.train.pretrain_steps = 20;
  c.cei.samples = 40;
  c.cei.groups = 8;
  return c;
}

inline DenoiserInput random_input(const DenoiserConfig& c, int batch, Rng& rng, bool with_nulls = true) {
  DenoiserInput in;
  in.x_tau.resize(c.input_dim, batch);
  in.conditions.resize(c.cond_dim, batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    for (Eigen::Index i = 0; i < in.x_tau.rows(); ++i) in.x_tau(i, j) = rng.normal();
    for (Eigen::Index i = 0; i < in.conditions.rows(); ++i) in.conditions(i, j) = rng.uniform(-1.0, 1.0);
    in.taus.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(c.num_timesteps))));
    in.use_null.push_back(static_cast<char>(with_nulls && j % 3 == 0));
  }
  return in;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("entprog-" + tag + "-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "-" +
             std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace entprog::testing
