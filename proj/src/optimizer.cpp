#include "entprog/optimizer.hpp"

#include <cmath>

namespace entprog {

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ParameterError("unknown optimizer '" + name + "'");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

Optimizer::Optimizer(const OptimizerConfig& config, const DenoiserParams& like)
    : config_(config),
      first_(DenoiserParams::zeros_like(like)),
      second_(config.kind == OptimizerKind::kAdam ? DenoiserParams::zeros_like(like) : DenoiserParams{}),
      steps_(like.blocks.size() + 1, 0) {
  if (!(config.learning_rate >= 0.0)) throw ParameterError("optimizer: learning rate must be >= 0");
}

void Optimizer::step(DenoiserParams& params, const DenoiserParams& grads, const FreezeMask& mask) {
  auto trainable = [&](int block) { return block < 0 ? mask.periphery_trainable : mask.trainable.contains(block); };
  if (mask.periphery_trainable) ++steps_[0];
  for (int b : mask.trainable) ++steps_[static_cast<std::size_t>(b) + 1];

  std::vector<const Matrix*> g;
  grads.for_each([&](const std::string&, int, const Matrix& t) { g.push_back(&t); });
  std::vector<Matrix*> m1, m2;
  first_.for_each([&](const std::string&, int, Matrix& t) { m1.push_back(&t); });
  if (config_.kind == OptimizerKind::kAdam)
    second_.for_each([&](const std::string&, int, Matrix& t) { m2.push_back(&t); });

  const double lr = config_.learning_rate;
  std::size_t i = 0;
  params.for_each([&](const std::string&, int block, Matrix& p) {
    const std::size_t k = i++;
    if (!trainable(block)) return;
    const Matrix& grad = *g[k];
    if (config_.kind == OptimizerKind::kSgd) {
      Matrix& v = *m1[k];
      v = config_.momentum * v + grad;
      p -= lr * v;
    } else {
      Matrix& m = *m1[k];
      Matrix& s = *m2[k];
      const auto t = static_cast<double>(steps_[static_cast<std::size_t>(block + 1)]);
      m = config_.beta1 * m + (1.0 - config_.beta1) * grad;
      s = config_.beta2 * s + (1.0 - config_.beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(config_.beta1, t);
      const double c2 = 1.0 - std::pow(config_.beta2, t);
      const double eps = config_.epsilon;
      p.array() -= lr * (m.array() / c1) / ((s.array() / c2).sqrt() + eps);
    }
  });
}

}  // namespace entprog
