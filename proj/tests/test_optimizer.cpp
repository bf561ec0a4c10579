#include <cmath>

#include <gtest/gtest.h>

#include "entprog/errors.hpp"
#include "entprog/optimizer.hpp"
#include "support.hpp"

using namespace entprog;
using entprog::testing::random_input;
using entprog::testing::random_matrix;
using entprog::testing::tiny_denoiser;

namespace {

DenoiserParams constant_grads(const DenoiserParams& like, double v) {
  DenoiserParams g = DenoiserParams::zeros_like(like);
  g.for_each([&](const std::string&, int, Matrix& t) { t.setConstant(v); });
  return g;
}

}  // namespace

TEST(Optimizer, SgdMomentumRecurrence) {
  BlockwiseDenoiser model(tiny_denoiser(), 1);
  OptimizerConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.5;
  Optimizer opt(cfg, model.params());
  const double w0 = model.params().blocks[1].w_in(0, 0);
  const auto g = constant_grads(model.params(), 2.0);
  opt.step(model.params(), g, FreezeMask::full(4));
  opt.step(model.params(), g, FreezeMask::full(4));
  // v1 = 2, v2 = 0.5 * 2 + 2 = 3; w = w0 - 0.1 * (2 + 3)
  EXPECT_NEAR(model.params().blocks[1].w_in(0, 0), w0 - 0.5, 1e-15);
}

TEST(Optimizer, AdamFirstStepIsLearningRateTimesSign) {
  BlockwiseDenoiser model(tiny_denoiser(), 1);
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::kAdam;
  cfg.learning_rate = 0.01;
  Optimizer opt(cfg, model.params());
  const double w0 = model.params().periphery.output_bias(0, 0);
  opt.step(model.params(), constant_grads(model.params(), -3.0), FreezeMask::full(4));
  EXPECT_NEAR(model.params().periphery.output_bias(0, 0), w0 + 0.01, 1e-9);
}

TEST(Optimizer, FrozenSlotsAndCountersUntouched) {
  for (auto kind : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    BlockwiseDenoiser model(tiny_denoiser(5), 1);
    OptimizerConfig cfg;
    cfg.kind = kind;
    Optimizer opt(cfg, model.params());
    const FreezeMask mask{BlockSet{1, 3}, false};
    const auto before = model.params();
    for (int s = 0; s < 7; ++s) opt.step(model.params(), constant_grads(model.params(), 0.5), mask);
    EXPECT_EQ(opt.step_counts(), (std::vector<std::int64_t>{0, 0, 7, 0, 7, 0}));
    EXPECT_EQ(model.params().blocks[0].w_in, before.blocks[0].w_in);
    EXPECT_EQ(model.params().periphery.input_weight, before.periphery.input_weight);
    EXPECT_NE(model.params().blocks[3].w_in, before.blocks[3].w_in);
    EXPECT_TRUE(opt.first_moment().blocks[2].w_in.isZero(0.0));
  }
}

TEST(Optimizer, ParseKinds) {
  EXPECT_EQ(parse_optimizer_kind("adam"), OptimizerKind::kAdam);
  EXPECT_EQ(parse_optimizer_kind(to_string(OptimizerKind::kSgd)), OptimizerKind::kSgd);
  EXPECT_THROW(parse_optimizer_kind("rmsprop"), ParameterError);
}

TEST(Optimizer, TrainingReducesLossOnFixedBatch) {
  const auto cfg = tiny_denoiser(4, 6, 8, 8);
  BlockwiseDenoiser model(cfg, 3);
  Rng rng(2);
  const auto in = random_input(cfg, 16, rng);
  const Matrix eps = random_matrix(cfg.input_dim, 16, rng);
  Optimizer opt(OptimizerConfig{}, model.params());
  DenoiserParams grads;
  const double first = model.loss_and_gradients(in, eps, grads);
  double last = first;
  for (int s = 0; s < 200; ++s) {
    last = model.loss_and_gradients(in, eps, grads);
    opt.step(model.params(), grads, model.freeze_mask());
  }
  EXPECT_LT(last, 0.5 * first);
}
