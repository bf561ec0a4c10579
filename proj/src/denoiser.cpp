#include "entprog/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "entprog/rng.hpp"

namespace entprog {

namespace {

Matrix silu(const Matrix& z) {
  return z.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
}

Matrix silu_grad(const Matrix& z) {
  return z.unaryExpr([](double v) {
    const double s = 1.0 / (1.0 + std::exp(-v));
    return s + v * s * (1.0 - s);
  });
}

Matrix gaussian(int rows, int cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = stddev * rng.normal();
  return m;
}

template <typename Params, typename Fn>
void visit_params(Params& p, Fn&& fn) {
  auto& q = p.periphery;
  fn("input.weight", -1, q.input_weight);
  fn("input.bias", -1, q.input_bias);
  fn("time.weight", -1, q.time_weight);
  fn("time.bias", -1, q.time_bias);
  fn("cond.hidden.weight", -1, q.cond_hidden_weight);
  fn("cond.hidden.bias", -1, q.cond_hidden_bias);
  fn("cond.out.weight", -1, q.cond_out_weight);
  fn("cond.out.bias", -1, q.cond_out_bias);
  fn("cond.null", -1, q.cond_null);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string prefix = "block." + std::to_string(i) + ".";
    const int id = static_cast<int>(i);
    fn(prefix + "w_in", id, b.w_in);
    fn(prefix + "w_cond", id, b.w_cond);
    fn(prefix + "b_in", id, b.b_in);
    fn(prefix + "w_out", id, b.w_out);
    fn(prefix + "b_out", id, b.b_out);
  }
  fn("output.weight", -1, q.output_weight);
  fn("output.bias", -1, q.output_bias);
  fn("skip.gate.weight", -1, q.skip_gate_weight);
  fn("skip.gate.bias", -1, q.skip_gate_bias);
}

std::size_t block_size(const BlockParams& b) {
  return static_cast<std::size_t>(b.w_in.size() + b.w_cond.size() + b.b_in.size() + b.w_out.size() + b.b_out.size());
}

}  // namespace

void DenoiserConfig::validate() const {
  if (input_dim < 1 || cond_dim < 1 || hidden_dim < 1 || mlp_dim < 1 || time_features < 2 || time_features % 2 != 0)
    throw ParameterError("denoiser: dimensions must be positive and time_features even");
  if (num_blocks < 4) throw ParameterError("denoiser: at least 4 blocks are required");
  if (num_timesteps < 2) throw ParameterError("denoiser: num_timesteps must be >= 2");
}

BlockSet::BlockSet(std::initializer_list<int> blocks) : BlockSet(std::vector<int>(blocks)) {}

BlockSet::BlockSet(std::vector<int> blocks) : blocks_(std::move(blocks)) {
  std::sort(blocks_.begin(), blocks_.end());
  blocks_.erase(std::unique(blocks_.begin(), blocks_.end()), blocks_.end());
}

BlockSet BlockSet::all(int num_blocks) { return first(num_blocks); }

BlockSet BlockSet::first(int count) {
  std::vector<int> v(static_cast<std::size_t>(std::max(count, 0)));
  std::iota(v.begin(), v.end(), 0);
  return BlockSet(std::move(v));
}

bool BlockSet::contains(int block) const { return std::binary_search(blocks_.begin(), blocks_.end(), block); }

void BlockSet::check_range(int num_blocks, const char* what) const {
  for (int b : blocks_) {
    if (b < 0 || b >= num_blocks)
      throw ParameterError(std::string(what) + ": unknown block " + std::to_string(b) + " (model has " +
                           std::to_string(num_blocks) + ")");
  }
}

DenoiserParams DenoiserParams::zeros_like(const DenoiserParams& like) {
  DenoiserParams out = like;
  out.for_each([](const std::string&, int, Matrix& t) { t.setZero(); });
  return out;
}

void DenoiserParams::for_each(const std::function<void(const std::string&, int, Matrix&)>& fn) {
  visit_params(*this, fn);
}

void DenoiserParams::for_each(const std::function<void(const std::string&, int, const Matrix&)>& fn) const {
  visit_params(*this, fn);
}

std::size_t DenoiserParams::block_param_count(int block) const {
  return block_size(blocks.at(static_cast<std::size_t>(block)));
}

std::size_t DenoiserParams::periphery_param_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, int block, const Matrix& t) {
    if (block < 0) n += static_cast<std::size_t>(t.size());
  });
  return n;
}

std::size_t DenoiserParams::total_param_count() const {
  std::size_t n = periphery_param_count();
  for (const auto& b : blocks) n += block_size(b);
  return n;
}

std::uint64_t DenoiserParams::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for_each([&](const std::string& name, int, const Matrix& t) {
    h = fnv1a(name.data(), name.size(), h);
    h = entprog::digest(t, h);
  });
  return h;
}

bool DenoiserParams::operator==(const DenoiserParams& other) const {
  if (blocks.size() != other.blocks.size()) return false;
  std::vector<const Matrix*> mine;
  for_each([&](const std::string&, int, const Matrix& t) { mine.push_back(&t); });
  std::size_t i = 0;
  bool equal = true;
  other.for_each([&](const std::string&, int, const Matrix& t) {
    const Matrix& a = *mine[i++];
    if (a.rows() != t.rows() || a.cols() != t.cols() ||
        std::memcmp(a.data(), t.data(), sizeof(double) * static_cast<std::size_t>(a.size())) != 0)
      equal = false;
  });
  return equal;
}

BlockwiseDenoiser::BlockwiseDenoiser(const DenoiserConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(seed, {kStreamInit}));
  const int d = config_.input_dim, c = config_.cond_dim, h = config_.hidden_dim, f = config_.mlp_dim;
  const int e = config_.time_features, l = config_.num_blocks;
  auto& p = params_.periphery;
  p.input_weight = gaussian(h, d, 1.0 / std::sqrt(d), rng);
  p.input_bias = Matrix::Zero(h, 1);
  p.time_weight = gaussian(h, e, 1.0 / std::sqrt(e), rng);
  p.time_bias = Matrix::Zero(h, 1);
  p.cond_hidden_weight = gaussian(h, c, 1.0 / std::sqrt(c), rng);
  p.cond_hidden_bias = Matrix::Zero(h, 1);
  p.cond_out_weight = gaussian(h, h, 1.0 / std::sqrt(h), rng);
  p.cond_out_bias = Matrix::Zero(h, 1);
  p.cond_null = Matrix::Zero(h, 1);
  // Residual branches start small so the stream stays O(1) through L blocks.
  const double out_scale = 1.0 / std::sqrt(static_cast<double>(f) * 2.0 * l);
  params_.blocks.resize(static_cast<std::size_t>(l));
  for (auto& b : params_.blocks) {
    b.w_in = gaussian(f, h, 1.0 / std::sqrt(h), rng);
    b.w_cond = gaussian(f, h, 1.0 / std::sqrt(h), rng);
    b.b_in = Matrix::Zero(f, 1);
    b.w_out = gaussian(h, f, out_scale, rng);
    b.b_out = Matrix::Zero(h, 1);
  }
  p.output_weight = gaussian(d, h, 1.0 / std::sqrt(h), rng);
  p.output_bias = Matrix::Zero(d, 1);
  p.skip_gate_weight = Matrix::Zero(1, e);
  p.skip_gate_bias = Matrix::Zero(1, 1);
  mask_ = FreezeMask::full(l);
}

BlockwiseDenoiser::BlockwiseDenoiser(const DenoiserConfig& config, DenoiserParams params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  if (static_cast<int>(params_.blocks.size()) != config_.num_blocks)
    throw ShapeError("denoiser: parameter store has wrong block count");
  const auto& p = params_.periphery;
  if (p.input_weight.rows() != config_.hidden_dim || p.input_weight.cols() != config_.input_dim ||
      p.output_weight.rows() != config_.input_dim || p.cond_hidden_weight.cols() != config_.cond_dim ||
      p.time_weight.cols() != config_.time_features || p.skip_gate_weight.rows() != 1 ||
      p.skip_gate_weight.cols() != config_.time_features || p.skip_gate_bias.size() != 1)
    throw ShapeError("denoiser: parameter shapes do not match config");
  for (const auto& b : params_.blocks) {
    if (b.w_in.rows() != config_.mlp_dim || b.w_in.cols() != config_.hidden_dim ||
        b.w_out.rows() != config_.hidden_dim || b.w_out.cols() != config_.mlp_dim)
      throw ShapeError("denoiser: block shapes do not match config");
  }
  mask_ = FreezeMask::full(config_.num_blocks);
}

void BlockwiseDenoiser::apply_freeze_mask(const FreezeMask& mask) {
  mask.trainable.check_range(config_.num_blocks, "freeze mask");
  mask_ = mask;
}

Matrix BlockwiseDenoiser::time_features(const std::vector<int>& taus) const {
  const int half = config_.time_features / 2;
  Matrix phi(config_.time_features, static_cast<Eigen::Index>(taus.size()));
  for (std::size_t j = 0; j < taus.size(); ++j) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      const double arg = taus[j] * freq;
      phi(i, static_cast<Eigen::Index>(j)) = std::sin(arg);
      phi(half + i, static_cast<Eigen::Index>(j)) = std::cos(arg);
    }
  }
  return phi;
}

struct BlockwiseDenoiser::Cache {
  Matrix phi;
  Matrix cond_pre;
  Matrix cond_act;
  Matrix embed;  // timestep + condition embedding
  std::vector<Matrix> block_in;
  std::vector<Matrix> pre;
  std::vector<Matrix> act;
  Matrix final_hidden;
};

void BlockwiseDenoiser::check_input(const DenoiserInput& input) const {
  const auto b = input.x_tau.cols();
  if (input.x_tau.rows() != config_.input_dim) throw ShapeError("denoiser: x_tau has wrong dimension");
  if (static_cast<Eigen::Index>(input.taus.size()) != b) throw ShapeError("denoiser: taus size mismatch");
  if (static_cast<Eigen::Index>(input.use_null.size()) != b) throw ShapeError("denoiser: use_null size mismatch");
  if (input.conditions.rows() != config_.cond_dim || input.conditions.cols() != b)
    throw ShapeError("denoiser: conditions shape mismatch");
  for (int t : input.taus)
    if (t < 0 || t >= config_.num_timesteps) throw ParameterError("denoiser: timestep out of range");
}

Matrix BlockwiseDenoiser::forward_impl(const DenoiserInput& input, const SkipSet& skip, Cache* cache) const {
  check_input(input);
  skip.blocks.check_range(config_.num_blocks, "skip set");
  const auto& p = params_.periphery;
  const Eigen::Index batch = input.x_tau.cols();

  Matrix phi = time_features(input.taus);
  Matrix temb = (p.time_weight * phi).colwise() + p.time_bias.col(0);
  Matrix cond_pre = (p.cond_hidden_weight * input.conditions).colwise() + p.cond_hidden_bias.col(0);
  Matrix cond_act = silu(cond_pre);
  Matrix cemb = (p.cond_out_weight * cond_act).colwise() + p.cond_out_bias.col(0);
  for (Eigen::Index j = 0; j < batch; ++j)
    if (input.use_null[static_cast<std::size_t>(j)]) cemb.col(j) = p.cond_null.col(0);
  Matrix embed = temb + cemb;

  Matrix h = (p.input_weight * input.x_tau).colwise() + p.input_bias.col(0);
  h += temb;

  if (cache) {
    cache->block_in.assign(params_.blocks.size(), Matrix());
    cache->pre.assign(params_.blocks.size(), Matrix());
    cache->act.assign(params_.blocks.size(), Matrix());
  }
  for (std::size_t i = 0; i < params_.blocks.size(); ++i) {
    if (skip.blocks.contains(static_cast<int>(i))) continue;
    const auto& b = params_.blocks[i];
    Matrix z = b.w_in * h + b.w_cond * embed;
    z.colwise() += b.b_in.col(0);
    Matrix a = silu(z);
    Matrix r = b.w_out * a;
    r.colwise() += b.b_out.col(0);
    if (cache) {
      cache->block_in[i] = h;
      cache->pre[i] = std::move(z);
      cache->act[i] = std::move(a);
    }
    h += r;
  }
  Matrix out = (p.output_weight * h).colwise() + p.output_bias.col(0);
  const Eigen::RowVectorXd gate = (p.skip_gate_weight * phi).array() + p.skip_gate_bias(0, 0);
  out += input.x_tau * gate.asDiagonal();
  if (cache) {
    cache->phi = std::move(phi);
    cache->cond_pre = std::move(cond_pre);
    cache->cond_act = std::move(cond_act);
    cache->embed = std::move(embed);
    cache->final_hidden = std::move(h);
  }
  return out;
}

Matrix BlockwiseDenoiser::forward(const DenoiserInput& input, const SkipSet& skip) const {
  return forward_impl(input, skip, nullptr);
}

double BlockwiseDenoiser::loss_and_gradients(const DenoiserInput& input, const Matrix& eps, DenoiserParams& grads) const {
  Cache cache;
  const Matrix out = forward_impl(input, {}, &cache);
  require_same_shape(out, eps, "loss_and_gradients");
  if (grads.blocks.size() != params_.blocks.size()) grads = DenoiserParams::zeros_like(params_);
  else grads.for_each([](const std::string&, int, Matrix& t) { t.setZero(); });

  const Matrix diff = out - eps;
  const double n = static_cast<double>(diff.size());
  const double loss = diff.squaredNorm() / n;

  const bool periphery = mask_.periphery_trainable;
  if (!periphery && mask_.trainable.empty()) return loss;

  const auto& p = params_.periphery;
  auto& gp = grads.periphery;
  const Matrix d_out = diff * (2.0 / n);
  if (periphery) {
    gp.output_weight = d_out * cache.final_hidden.transpose();
    gp.output_bias = d_out.rowwise().sum();
    const Eigen::RowVectorXd d_gate = d_out.cwiseProduct(input.x_tau).colwise().sum();
    gp.skip_gate_weight = d_gate * cache.phi.transpose();
    gp.skip_gate_bias(0, 0) = d_gate.sum();
  }
  Matrix d_h = p.output_weight.transpose() * d_out;
  Matrix d_embed = Matrix::Zero(config_.hidden_dim, input.x_tau.cols());

  // Without a trainable periphery nothing below the lowest trainable block
  // needs a gradient.
  const int lowest = periphery ? 0 : mask_.trainable.values().front();
  for (int i = config_.num_blocks - 1; i >= lowest; --i) {
    const auto idx = static_cast<std::size_t>(i);
    if (cache.pre[idx].size() == 0) continue;  // skipped
    const auto& b = params_.blocks[idx];
    const bool trainable = mask_.trainable.contains(i);
    auto& gb = grads.blocks[idx];
    if (trainable) {
      gb.w_out = d_h * cache.act[idx].transpose();
      gb.b_out = d_h.rowwise().sum();
    }
    const Matrix d_pre = (b.w_out.transpose() * d_h).cwiseProduct(silu_grad(cache.pre[idx]));
    if (trainable) {
      gb.w_in = d_pre * cache.block_in[idx].transpose();
      gb.w_cond = d_pre * cache.embed.transpose();
      gb.b_in = d_pre.rowwise().sum();
    }
    if (i > lowest || periphery) {
      d_h += b.w_in.transpose() * d_pre;
      d_embed += b.w_cond.transpose() * d_pre;
    }
  }
  if (!periphery) return loss;

  gp.input_weight = d_h * input.x_tau.transpose();
  gp.input_bias = d_h.rowwise().sum();
  const Matrix d_temb = d_h + d_embed;
  gp.time_weight = d_temb * cache.phi.transpose();
  gp.time_bias = d_temb.rowwise().sum();

  Matrix d_cemb = d_embed;
  for (Eigen::Index j = 0; j < d_cemb.cols(); ++j) {
    if (input.use_null[static_cast<std::size_t>(j)]) {
      gp.cond_null += d_cemb.col(j);
      d_cemb.col(j).setZero();
    }
  }
  gp.cond_out_weight = d_cemb * cache.cond_act.transpose();
  gp.cond_out_bias = d_cemb.rowwise().sum();
  const Matrix d_cond_pre = (p.cond_out_weight.transpose() * d_cemb).cwiseProduct(silu_grad(cache.cond_pre));
  gp.cond_hidden_weight = d_cond_pre * input.conditions.transpose();
  gp.cond_hidden_bias = d_cond_pre.rowwise().sum();
  return loss;
}

Vector predict_noise(const BlockwiseDenoiser& model, const Vector& x_tau, int tau, const Vector* condition,
                     const SkipSet& skip) {
  DenoiserInput in;
  in.x_tau = x_tau;
  in.taus = {tau};
  in.conditions = condition ? Matrix(*condition) : Matrix::Zero(model.config().cond_dim, 1);
  in.use_null = {static_cast<char>(condition ? 0 : 1)};
  return model.forward(in, skip).col(0);
}

Matrix predict_noise(const BlockwiseDenoiser& model, const DenoiserInput& input, const SkipSet& skip) {
  return model.forward(input, skip);
}

void apply_freeze_mask(BlockwiseDenoiser& model, const FreezeMask& mask) { model.apply_freeze_mask(mask); }

std::size_t count_trainable_params(const BlockwiseDenoiser& model, const FreezeMask& mask) {
  mask.trainable.check_range(model.num_blocks(), "freeze mask");
  std::size_t n = mask.periphery_trainable ? model.params().periphery_param_count() : 0;
  for (int b : mask.trainable) n += model.params().block_param_count(b);
  return n;
}

}  // namespace entprog
