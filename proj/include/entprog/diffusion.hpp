#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "entprog/tensor.hpp"

namespace entprog {

class BlockwiseDenoiser;

enum class ScheduleKind { kLinear, kCosine };

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

/// DDPM variance schedule. alpha_bars[t] = prod_{i<=t} (1 - betas[i]).
struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alpha_bars;

  int num_timesteps() const { return static_cast<int>(betas.size()); }
};

/// Linear: betas interpolate beta_min..beta_max. Cosine: betas follow the
/// squared-cosine alpha_bar curve, clipped into [beta_min, beta_max].
/// Throws ParameterError unless T >= 2 and 0 < beta_min <= beta_max < 1.
NoiseSchedule make_schedule(int num_timesteps, ScheduleKind kind, double beta_min, double beta_max);

/// sqrt(abar) * x0 + sqrt(1 - abar) * eps for a single timestep.
Matrix forward_diffuse(const Matrix& x0, int tau, const Matrix& eps, const NoiseSchedule& sched);

/// Same closed form with an explicit alpha_bar; exposed for the limit cases.
Matrix forward_diffuse_with(const Matrix& x0, double alpha_bar, const Matrix& eps);

/// Mean squared error over all elements.
double denoise_loss(const Matrix& eps_hat, const Matrix& eps);

/// Classifier-free guidance combination eps_u + g (eps_c - eps_u), written as
/// (1 - g) eps_u + g eps_c so that g = 0 and g = 1 reproduce the inputs exactly.
Matrix guided_prediction(const Matrix& eps_cond, const Matrix& eps_uncond, double guidance_scale);

/// Ancestral DDPM sampler over `steps` evenly spaced timesteps with the fixed
/// posterior variance. The unconditional branch uses the model's null token.
/// Deterministic for a given seed. Throws ParameterError if steps > T or < 1.
Vector ddpm_sample(const BlockwiseDenoiser& model, const Vector& condition, const NoiseSchedule& sched, int steps,
                   double guidance_scale, std::uint64_t seed);

}  // namespace entprog
