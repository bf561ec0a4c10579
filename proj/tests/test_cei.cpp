#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "entprog/cei.hpp"
#include "entprog/errors.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace entprog;
using entprog::testing::random_matrix;
using entprog::testing::tiny_denoiser;
using oracles::make_halving;
using oracles::quiet_model;
using oracles::random_samples;
using oracles::reference_pi;
using oracles::reference_sigma;
using oracles::zero_residual;

TEST(PooledStd, TwoPointPopulationConvention) {
  Matrix v(1, 2);
  v << 1.0, 3.0;
  EXPECT_DOUBLE_EQ(pooled_std(v), 1.0);
}

TEST(PooledSigma, TwoScalarPredictions) {
  DenoiserConfig cfg = tiny_denoiser(4, 1, 1, 2);
  BlockwiseDenoiser model = quiet_model(cfg, 1);
  auto& p = model.params().periphery;
  p.input_weight.setConstant(1.0);
  p.input_bias.setZero();
  p.time_bias.setZero();
  p.output_weight.setConstant(1.0);
  PriorityGroup g;
  g.condition = Vector::Zero(cfg.cond_dim);
  g.x_tau.resize(1, 2);
  g.x_tau << 1.0, 3.0;
  g.eps = Matrix::Zero(1, 2);
  g.taus = {0, 5};
  EXPECT_NEAR(pooled_sigma(model, g, {}), 1.0, 1e-12);
}

TEST(PooledSigma, MatchesScalarLoopReference) {
  const auto cfg = tiny_denoiser(4, 6, 5, 7);
  BlockwiseDenoiser model(cfg, 21);
  Rng rng(8);
  const auto s = random_samples(cfg, 1, 5, rng);
  EXPECT_NEAR(pooled_sigma(model, s.groups[0], {}), reference_sigma(model, s.groups[0], {}), 1e-10);
  EXPECT_NEAR(pooled_sigma(model, s.groups[0], SkipSet{{2}}), reference_sigma(model, s.groups[0], SkipSet{{2}}), 1e-10);
}

TEST(PooledSigma, ConstantOutputIsDegenerate) {
  const auto cfg = tiny_denoiser();
  BlockwiseDenoiser model(cfg, 2);
  model.params().periphery.output_weight.setZero();
  model.params().periphery.output_bias.setConstant(0.7);
  Rng rng(1);
  const auto s = random_samples(cfg, 2, 4, rng);
  EXPECT_THROW(pooled_sigma(model, s.groups[0], {}), DegenerateModelError);
  EXPECT_THROW(rank_blocks(model, s), DegenerateModelError);
  EXPECT_THROW(compute_block_priority(model, 0, s), DegenerateModelError);
}

TEST(Priority, ZeroResidualBlockHasZeroPi) {
  const auto cfg = tiny_denoiser(5);
  BlockwiseDenoiser model(cfg, 4);
  zero_residual(model.params().blocks[3]);
  Rng rng(2);
  const auto s = random_samples(cfg, 4, 6, rng);
  const auto e = compute_block_priority(model, 3, s);
  EXPECT_NEAR(e.pi, 0.0, 1e-6);
  EXPECT_FALSE(e.clamped);
  EXPECT_EQ(e.full_inputs_digest, e.skip_inputs_digest);
}

TEST(Priority, HalvingBlockHasLogTwo) {
  const auto cfg = tiny_denoiser(4, 6, 5, 7);
  BlockwiseDenoiser model = quiet_model(cfg, 3);
  make_halving(model.params().blocks[1], cfg.hidden_dim);
  Rng rng(3);
  const auto s = random_samples(cfg, 5, 8, rng);
  const auto e = compute_block_priority(model, 1, s);
  EXPECT_NEAR(e.pi, std::log(2.0), 1e-6);
  EXPECT_NEAR(std::log(e.sigma_skip / e.sigma_full), e.pi, 1e-12);
  EXPECT_NEAR(compute_block_priority(model, 0, s).pi, 0.0, 1e-6);
}

TEST(Priority, MatchesTwoPassBruteForce) {
  const auto cfg = tiny_denoiser(4, 6, 5, 7);
  BlockwiseDenoiser model(cfg, 31);
  for (auto& b : model.params().blocks) b.w_out *= 8.0;
  Rng rng(4);
  const auto s = random_samples(cfg, 10, 20, rng);
  ASSERT_EQ(s.size(), 200u);
  const auto table = rank_blocks(model, s);
  for (int b = 0; b < 4; ++b) EXPECT_NEAR(table.estimates[static_cast<std::size_t>(b)].pi, reference_pi(model, b, s), 1e-8);
}

TEST(Priority, SkipSideFloorClampsAndFlags) {
  // Output reads one stream coordinate that only block 2 writes.
  const auto cfg = tiny_denoiser(4, 3, 3, 4);
  BlockwiseDenoiser model = quiet_model(cfg, 5);
  auto& p = model.params().periphery;
  p.input_weight.row(0).setZero();
  p.input_bias.setZero();
  p.time_bias.setZero();
  p.time_weight = Matrix::Ones(cfg.hidden_dim, cfg.time_features);
  p.time_weight.row(0).setZero();
  p.output_weight.setZero();
  p.output_weight.col(0).setOnes();
  auto& b = model.params().blocks[2];
  b.w_out.setZero();
  b.w_out.row(0).setOnes();
  Rng rng(6);
  const auto s = random_samples(cfg, 3, 6, rng);
  const auto e = compute_block_priority(model, 2, s);
  EXPECT_TRUE(e.clamped);
  EXPECT_LT(e.pi, 0.0);
  EXPECT_TRUE(std::isfinite(e.pi));
  EXPECT_NEAR(e.sigma_skip, kDispersionFloor, 1e-20);
}

TEST(RankBlocks, AllZeroResidualGivesIdentityOrder) {
  const auto cfg = tiny_denoiser(6);
  BlockwiseDenoiser model = quiet_model(cfg, 7);
  Rng rng(7);
  const auto table = rank_blocks(model, random_samples(cfg, 3, 5, rng));
  for (const auto& e : table.estimates) EXPECT_EQ(e.pi, 0.0);
  EXPECT_EQ(table.ranking, (std::vector<int>{0, 1, 2, 3, 4, 5}));
}

TEST(RankBlocks, ConditionCarryingBlockRanksFirst) {
  const auto cfg = tiny_denoiser(6, 6, 5, 7);
  BlockwiseDenoiser model(cfg, 8);
  for (auto& b : model.params().blocks) b.w_cond.setZero();
  model.params().periphery.time_weight *= 0.1;
  auto& carrier = model.params().blocks[4];
  make_halving(carrier, cfg.hidden_dim);
  Rng rng(8);
  carrier.w_cond.topRows(cfg.hidden_dim) = random_matrix(cfg.hidden_dim, cfg.hidden_dim, rng) * 0.05;
  const auto table = rank_blocks(model, random_samples(cfg, 6, 8, rng, 0.5));
  EXPECT_EQ(table.ranking.front(), 4);
}

TEST(RankBlocks, RankingIsDescendingWithIndexTieBreak) {
  EXPECT_EQ(rank_by_priority({0.1, 0.5, 0.1, 0.5, -1.0}), (std::vector<int>{1, 3, 0, 2, 4}));
  const auto t = BlockPriorityTable::from_priorities({0.3, 0.9, 0.3});
  EXPECT_EQ(t.rank_of(1), 1);
  EXPECT_EQ(t.rank_of(0), 2);
  EXPECT_EQ(t.rank_of(2), 3);
}

TEST(RankBlocks, DeterministicBitwise) {
  const auto data = generate_dataset(3, 40, 4, 8);
  DenoiserConfig c8 = tiny_denoiser(5);
  c8.input_dim = 64;
  BlockwiseDenoiser m8(c8, 9);
  const auto sched = make_schedule(c8.num_timesteps, ScheduleKind::kLinear, 1e-4, 0.02);
  const auto s1 = make_priority_samples(data, sched, 30, 6, 5);
  const auto s2 = make_priority_samples(data, sched, 30, 6, 5);
  const auto a = rank_blocks(m8, s1), b = rank_blocks(m8, s2);
  EXPECT_EQ(a.ranking, b.ranking);
  for (std::size_t i = 0; i < a.estimates.size(); ++i) {
    EXPECT_EQ(a.estimates[i].pi, b.estimates[i].pi);
    EXPECT_EQ(a.estimates[i].sigma_skip, b.estimates[i].sigma_skip);
  }
}

TEST(PrioritySamples, GroupsAreDistinctTrainingItems) {
  const auto data = generate_dataset(3, 40, 10, 8);
  const auto sched = make_schedule(100, ScheduleKind::kLinear, 1e-4, 0.02);
  const auto s = make_priority_samples(data, sched, 23, 5, 1);
  ASSERT_EQ(s.groups.size(), 5u);
  EXPECT_EQ(s.size(), 23u);
  for (const auto& g : s.groups) {
    EXPECT_TRUE(g.size() == 4 || g.size() == 5);
    const auto it = std::find_if(data.conditions.begin(), data.conditions.end(),
                                 [&](const PoseCondition& c) { return c.to_vector() == g.condition; });
    ASSERT_NE(it, data.conditions.end());
    EXPECT_FALSE(data.is_holdout(static_cast<std::size_t>(it - data.conditions.begin())));
  }
  EXPECT_THROW(make_priority_samples(data, sched, 3, 5, 1), ParameterError);
  EXPECT_THROW(make_priority_samples(data, sched, 100, 41, 1), ParameterError);
}

TEST(PrioritySamples, EstimatorParsing) {
  EXPECT_EQ(parse_dispersion_estimator("errors"), DispersionEstimator::kErrors);
  EXPECT_THROW(parse_dispersion_estimator("entropy"), ParameterError);
}

TEST(RankBlocks, OrderingMatchesTwoPassOracle) {
  for (int l : {4, 5, 6}) {
    const auto cfg = tiny_denoiser(l, 6, 5, 7);
    BlockwiseDenoiser model(cfg, 40 + static_cast<std::uint64_t>(l));
    for (auto& b : model.params().blocks) b.w_out *= 6.0;
    Rng rng(static_cast<std::uint64_t>(l));
    const auto s = random_samples(cfg, 8, 12, rng);
    EXPECT_EQ(rank_blocks(model, s).ranking, oracles::reference_ranking(model, s)) << l;
  }
}
