#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "entprog/tensor.hpp"

namespace entprog {

/// Architecture hyperparameters of the blockwise denoiser.
struct DenoiserConfig {
  int input_dim = 256;     // flattened G x G image
  int cond_dim = 10;       // J keypoints x 2
  int hidden_dim = 64;     // residual stream width
  int mlp_dim = 128;       // width of each block's residual branch
  int num_blocks = 12;     // L
  int time_features = 16;  // sinusoidal timestep features
  int num_timesteps = 1000;

  void validate() const;
  bool operator==(const DenoiserConfig&) const = default;
};

/// Sorted, duplicate-free set of block indices.
class BlockSet {
 public:
  BlockSet() = default;
  BlockSet(std::initializer_list<int> blocks);
  explicit BlockSet(std::vector<int> blocks);

  static BlockSet all(int num_blocks);
  static BlockSet first(int count);

  bool contains(int block) const;
  bool empty() const { return blocks_.empty(); }
  std::size_t size() const { return blocks_.size(); }
  const std::vector<int>& values() const { return blocks_; }
  auto begin() const { return blocks_.begin(); }
  auto end() const { return blocks_.end(); }

  /// Throws ParameterError if any index is outside [0, num_blocks).
  void check_range(int num_blocks, const char* what) const;

  bool operator==(const BlockSet&) const = default;

 private:
  std::vector<int> blocks_;
};

/// Blocks whose residual branch is bypassed in a forward pass.
struct SkipSet {
  BlockSet blocks;
};

/// Blocks (plus optionally the periphery) that receive gradient updates.
struct FreezeMask {
  BlockSet trainable;
  bool periphery_trainable = true;

  static FreezeMask full(int num_blocks) { return {BlockSet::all(num_blocks), true}; }
  static FreezeMask frozen() { return {BlockSet{}, false}; }
  bool operator==(const FreezeMask&) const = default;
};

/// One residual block: h + w_out * silu(w_in * h + w_cond * e + b_in) + b_out,
/// where e is the summed timestep and condition embedding.
struct BlockParams {
  Matrix w_in;    // mlp x hidden
  Matrix w_cond;  // mlp x hidden
  Matrix b_in;    // mlp x 1
  Matrix w_out;   // hidden x mlp
  Matrix b_out;   // hidden x 1
};

/// Embedders and projections; always outside the schedulable blocks.
struct PeripheryParams {
  Matrix input_weight;   // hidden x input
  Matrix input_bias;     // hidden x 1
  Matrix time_weight;    // hidden x time_features
  Matrix time_bias;      // hidden x 1
  Matrix cond_hidden_weight;  // hidden x cond
  Matrix cond_hidden_bias;    // hidden x 1
  Matrix cond_out_weight;     // hidden x hidden
  Matrix cond_out_bias;       // hidden x 1
  Matrix cond_null;           // hidden x 1, learned null-condition embedding
  Matrix output_weight;  // input x hidden
  Matrix output_bias;    // input x 1
  Matrix skip_gate_weight;  // 1 x time_features
  Matrix skip_gate_bias;    // 1 x 1
};

/// Full parameter (or gradient, or optimizer-slot) store.
struct DenoiserParams {
  PeripheryParams periphery;
  std::vector<BlockParams> blocks;

  /// Same shapes as `like`, all zeros.
  static DenoiserParams zeros_like(const DenoiserParams& like);

  /// Visits every tensor with its stable name ("block.<i>.<tensor>" for block
  /// tensors). `block` is the owning block index or -1 for the periphery.
  void for_each(const std::function<void(const std::string& name, int block, Matrix& t)>& fn);
  void for_each(const std::function<void(const std::string& name, int block, const Matrix& t)>& fn) const;

  std::size_t block_param_count(int block) const;
  std::size_t periphery_param_count() const;
  std::size_t total_param_count() const;
  std::uint64_t digest() const;

  bool operator==(const DenoiserParams& other) const;
};

/// Inputs for one batched forward pass; column j is sample j.
struct DenoiserInput {
  Matrix x_tau;              // input x B
  std::vector<int> taus;     // B
  Matrix conditions;         // cond x B (ignored where use_null is set)
  std::vector<char> use_null;  // B; nonzero selects the null embedding

  int batch_size() const { return static_cast<int>(x_tau.cols()); }
};

/// Conditional noise predictor built from L independently skippable and
/// freezable residual blocks. The output adds g(tau) * x_tau, a per-timestep
/// scalar gate on the noisy input, to the projected hidden state. Forward passes are const and may run
/// concurrently; training mutates the parameters in place.
class BlockwiseDenoiser {
 public:
  BlockwiseDenoiser(const DenoiserConfig& config, std::uint64_t seed);
  BlockwiseDenoiser(const DenoiserConfig& config, DenoiserParams params);

  const DenoiserConfig& config() const { return config_; }
  int num_blocks() const { return config_.num_blocks; }

  DenoiserParams& params() { return params_; }
  const DenoiserParams& params() const { return params_; }

  /// Freeze mask consulted by gradient computation and optimizer steps.
  /// Never affects the forward pass.
  void apply_freeze_mask(const FreezeMask& mask);
  const FreezeMask& freeze_mask() const { return mask_; }

  /// Batched prediction; blocks in `skip` act as identity.
  Matrix forward(const DenoiserInput& input, const SkipSet& skip = {}) const;

  /// Full forward plus MSE loss against `eps`; writes parameter gradients for
  /// the trainable part of the current freeze mask into `grads` (frozen slots
  /// are left at zero). Returns the loss.
  double loss_and_gradients(const DenoiserInput& input, const Matrix& eps, DenoiserParams& grads) const;

  /// Timestep features fed to the time embedder.
  Matrix time_features(const std::vector<int>& taus) const;

 private:
  struct Cache;
  Matrix forward_impl(const DenoiserInput& input, const SkipSet& skip, Cache* cache) const;
  void check_input(const DenoiserInput& input) const;

  DenoiserConfig config_;
  DenoiserParams params_;
  FreezeMask mask_;
};

/// Single-sample convenience wrapper. Pass `condition = nullptr` for the null
/// token. Throws ParameterError on out-of-range skip indices.
Vector predict_noise(const BlockwiseDenoiser& model, const Vector& x_tau, int tau, const Vector* condition,
                     const SkipSet& skip = {});

/// Batched variant.
Matrix predict_noise(const BlockwiseDenoiser& model, const DenoiserInput& input, const SkipSet& skip = {});

void apply_freeze_mask(BlockwiseDenoiser& model, const FreezeMask& mask);

/// Scalar parameters that receive gradients under `mask`.
std::size_t count_trainable_params(const BlockwiseDenoiser& model, const FreezeMask& mask);

}  // namespace entprog
