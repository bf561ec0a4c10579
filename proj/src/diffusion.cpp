#include "entprog/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "entprog/denoiser.hpp"
#include "entprog/rng.hpp"

namespace entprog {

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "cosine") return ScheduleKind::kCosine;
  throw ParameterError("unknown schedule kind '" + name + "'");
}

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::kLinear ? "linear" : "cosine"; }

NoiseSchedule make_schedule(int num_timesteps, ScheduleKind kind, double beta_min, double beta_max) {
  if (num_timesteps < 2) throw ParameterError("make_schedule: T must be >= 2");
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0))
    throw ParameterError("make_schedule: need 0 < beta_min <= beta_max < 1");

  NoiseSchedule s;
  const auto n = static_cast<std::size_t>(num_timesteps);
  s.betas.resize(n);
  if (kind == ScheduleKind::kLinear) {
    for (std::size_t t = 0; t < n; ++t)
      s.betas[t] = beta_min + (beta_max - beta_min) * static_cast<double>(t) / static_cast<double>(n - 1);
  } else {
    constexpr double offset = 0.008;
    auto f = [&](double t) {
      const double v = std::cos((t / static_cast<double>(n) + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
      return v * v;
    };
    for (std::size_t t = 0; t < n; ++t) {
      const double beta = 1.0 - f(static_cast<double>(t + 1)) / f(static_cast<double>(t));
      s.betas[t] = std::clamp(beta, beta_min, beta_max);
    }
  }
  s.alpha_bars.resize(n);
  double prod = 1.0;
  for (std::size_t t = 0; t < n; ++t) {
    prod *= 1.0 - s.betas[t];
    s.alpha_bars[t] = prod;
  }
  return s;
}

Matrix forward_diffuse_with(const Matrix& x0, double alpha_bar, const Matrix& eps) {
  require_same_shape(x0, eps, "forward_diffuse");
  return std::sqrt(alpha_bar) * x0 + std::sqrt(1.0 - alpha_bar) * eps;
}

Matrix forward_diffuse(const Matrix& x0, int tau, const Matrix& eps, const NoiseSchedule& sched) {
  if (tau < 0 || tau >= sched.num_timesteps()) throw ParameterError("forward_diffuse: timestep out of range");
  return forward_diffuse_with(x0, sched.alpha_bars[static_cast<std::size_t>(tau)], eps);
}

double denoise_loss(const Matrix& eps_hat, const Matrix& eps) {
  require_same_shape(eps_hat, eps, "denoise_loss");
  if (eps.size() == 0) return 0.0;
  return (eps_hat - eps).squaredNorm() / static_cast<double>(eps.size());
}

Matrix guided_prediction(const Matrix& eps_cond, const Matrix& eps_uncond, double guidance_scale) {
  require_same_shape(eps_cond, eps_uncond, "guided_prediction");
  return (1.0 - guidance_scale) * eps_uncond + guidance_scale * eps_cond;
}

Vector ddpm_sample(const BlockwiseDenoiser& model, const Vector& condition, const NoiseSchedule& sched, int steps,
                   double guidance_scale, std::uint64_t seed) {
  const int T = sched.num_timesteps();
  if (steps < 1 || steps > T) throw ParameterError("ddpm_sample: steps must be in [1, T]");
  if (condition.size() != model.config().cond_dim) throw ShapeError("ddpm_sample: condition has wrong dimension");

  // Evenly spaced timesteps, last one is T-1.
  std::vector<int> ts(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i)
    ts[static_cast<std::size_t>(i)] =
        static_cast<int>(std::llround(static_cast<double>(i + 1) * T / steps)) - 1;

  Rng rng(derive_seed(seed, {kStreamSample}));
  const int dim = model.config().input_dim;
  Vector x(dim);
  for (int i = 0; i < dim; ++i) x(i) = rng.normal();

  DenoiserInput in;
  in.conditions.resize(model.config().cond_dim, 2);
  in.conditions.col(0) = condition;
  in.conditions.col(1) = condition;
  in.use_null = {0, 1};
  for (int i = steps - 1; i >= 0; --i) {
    const int t = ts[static_cast<std::size_t>(i)];
    const double ab = sched.alpha_bars[static_cast<std::size_t>(t)];
    const double ab_prev = i > 0 ? sched.alpha_bars[static_cast<std::size_t>(ts[static_cast<std::size_t>(i - 1)])] : 1.0;
    const double beta = 1.0 - ab / ab_prev;

    in.x_tau.resize(dim, 2);
    in.x_tau.col(0) = x;
    in.x_tau.col(1) = x;
    in.taus = {t, t};
    const Matrix pred = model.forward(in);
    const Vector eps = guided_prediction(pred.col(0), pred.col(1), guidance_scale);

    Vector mean = (x - (beta / std::sqrt(1.0 - ab)) * eps) / std::sqrt(1.0 - beta);
    if (i > 0) {
      const double var = beta * (1.0 - ab_prev) / (1.0 - ab);
      const double sd = std::sqrt(var);
      for (int k = 0; k < dim; ++k) mean(k) += sd * rng.normal();
    }
    x = std::move(mean);
  }
  return x;
}

}  // namespace entprog
