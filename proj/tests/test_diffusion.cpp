#include <cmath>

#include <gtest/gtest.h>

#include "entprog/diffusion.hpp"
#include "entprog/errors.hpp"
#include "support.hpp"

using namespace entprog;
using entprog::testing::random_matrix;
using entprog::testing::tiny_denoiser;

TEST(Schedule, TwoStepProduct) {
  const auto s = make_schedule(2, ScheduleKind::kLinear, 0.5, 0.5);
  ASSERT_EQ(s.alpha_bars.size(), 2u);
  EXPECT_DOUBLE_EQ(s.alpha_bars[0], 0.5);
  EXPECT_DOUBLE_EQ(s.alpha_bars[1], 0.25);
}

TEST(Schedule, LinearThousandStepsMatchesLoopProduct) {
  const auto s = make_schedule(1000, ScheduleKind::kLinear, 1e-4, 0.02);
  double prod = 1.0;
  for (int t = 0; t < 1000; ++t) {
    const double beta = 1e-4 + (0.02 - 1e-4) * t / 999.0;
    EXPECT_NEAR(s.betas[static_cast<std::size_t>(t)], beta, 1e-15);
    prod *= 1.0 - beta;
    EXPECT_NEAR(s.alpha_bars[static_cast<std::size_t>(t)], prod, 1e-12);
  }
  EXPECT_LT(s.alpha_bars[999], 0.01);
}

TEST(Schedule, AlphaBarsStrictlyDecreasingInUnitInterval) {
  for (auto kind : {ScheduleKind::kLinear, ScheduleKind::kCosine}) {
    const auto s = make_schedule(200, kind, 1e-4, 0.5);
    for (std::size_t t = 0; t < s.alpha_bars.size(); ++t) {
      EXPECT_GT(s.betas[t], 0.0);
      EXPECT_LT(s.betas[t], 1.0);
      EXPECT_GT(s.alpha_bars[t], 0.0);
      EXPECT_LT(s.alpha_bars[t], 1.0);
      if (t > 0) EXPECT_LT(s.alpha_bars[t], s.alpha_bars[t - 1]);
    }
  }
}

TEST(Schedule, RejectsBadArguments) {
  EXPECT_THROW(make_schedule(1, ScheduleKind::kLinear, 1e-4, 0.02), ParameterError);
  EXPECT_THROW(make_schedule(1, ScheduleKind::kCosine, 1e-4, 0.02), ParameterError);
  EXPECT_THROW(make_schedule(10, ScheduleKind::kLinear, 0.0, 0.02), ParameterError);
  EXPECT_THROW(make_schedule(10, ScheduleKind::kLinear, 0.1, 0.01), ParameterError);
  EXPECT_THROW(make_schedule(10, ScheduleKind::kLinear, 1e-4, 1.0), ParameterError);
  EXPECT_THROW(parse_schedule_kind("quadratic"), ParameterError);
  EXPECT_EQ(parse_schedule_kind(to_string(ScheduleKind::kCosine)), ScheduleKind::kCosine);
}

TEST(ForwardDiffuse, LimitCases) {
  Matrix x0(2, 1), eps(2, 1);
  x0 << 1.0, 0.0;
  eps << 0.0, 1.0;
  EXPECT_EQ(forward_diffuse_with(x0, 1.0, eps), x0);
  EXPECT_EQ(forward_diffuse_with(x0, 0.0, eps), eps);
  const Matrix y = forward_diffuse_with(x0, 0.25, eps);
  EXPECT_DOUBLE_EQ(y(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(y(1, 0), std::sqrt(0.75));
}

TEST(ForwardDiffuse, UsesScheduleAlphaBar) {
  const auto s = make_schedule(50, ScheduleKind::kLinear, 1e-3, 0.05);
  Rng rng(3);
  const Matrix x0 = random_matrix(7, 2, rng), eps = random_matrix(7, 2, rng);
  const Matrix y = forward_diffuse(x0, 17, eps, s);
  const double ab = s.alpha_bars[17];
  for (Eigen::Index i = 0; i < y.size(); ++i)
    EXPECT_DOUBLE_EQ(y(i), std::sqrt(ab) * x0(i) + std::sqrt(1.0 - ab) * eps(i));
  EXPECT_THROW(forward_diffuse(x0, 50, eps, s), ParameterError);
  EXPECT_THROW(forward_diffuse(x0, 3, Matrix::Zero(6, 2), s), ShapeError);
}

TEST(DenoiseLoss, SmallCases) {
  Matrix a(2, 1), z = Matrix::Zero(2, 1);
  a << 1.0, 1.0;
  EXPECT_EQ(denoise_loss(a, a), 0.0);
  EXPECT_DOUBLE_EQ(denoise_loss(a, z), 1.0);
  EXPECT_THROW(denoise_loss(a, Matrix::Zero(3, 1)), ShapeError);
}

TEST(DenoiseLoss, MatchesElementLoop) {
  Rng rng(11);
  const Matrix a = random_matrix(1000, 1, rng), b = random_matrix(1000, 1, rng);
  double ref = 0.0;
  for (int i = 0; i < 1000; ++i) ref += (a(i) - b(i)) * (a(i) - b(i));
  ref /= 1000.0;
  EXPECT_NEAR(denoise_loss(a, b), ref, 1e-12);
  EXPECT_GE(denoise_loss(a, b), 0.0);
}

TEST(Guidance, EndpointsAreExact) {
  Rng rng(5);
  const Matrix c = random_matrix(9, 3, rng), u = random_matrix(9, 3, rng);
  EXPECT_EQ(guided_prediction(c, u, 1.0), c);
  EXPECT_EQ(guided_prediction(c, u, 0.0), u);
  const Matrix g = guided_prediction(c, u, 4.0);
  for (Eigen::Index i = 0; i < g.size(); ++i) EXPECT_NEAR(g(i), u(i) + 4.0 * (c(i) - u(i)), 1e-12);
}

TEST(Sampler, DeterministicForSeed) {
  const auto cfg = tiny_denoiser();
  BlockwiseDenoiser model(cfg, 2);
  const auto s = make_schedule(cfg.num_timesteps, ScheduleKind::kLinear, 1e-4, 0.02);
  const Vector c = Vector::Constant(cfg.cond_dim, 0.3);
  const Vector a = ddpm_sample(model, c, s, 10, 3.0, 77);
  const Vector b = ddpm_sample(model, c, s, 10, 3.0, 77);
  ASSERT_EQ(a.size(), cfg.input_dim);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, ddpm_sample(model, c, s, 10, 3.0, 78));
  EXPECT_TRUE(a.allFinite());
  EXPECT_THROW(ddpm_sample(model, c, s, 0, 1.0, 1), ParameterError);
  EXPECT_THROW(ddpm_sample(model, c, s, cfg.num_timesteps + 1, 1.0, 1), ParameterError);
}
