#pragma once

#include <memory>
#include <vector>

#include "awf/maps.hpp"
#include "awf/rng.hpp"
#include "awf/tensor.hpp"

namespace awf {

/// Forward-process variance schedule. alpha_bar[t-1] is the cumulative
/// product of (1 - beta_i) for i <= t; it is strictly decreasing in (0,1).
struct NoiseSchedule {
  std::vector<double> beta;
  std::vector<double> alpha_bar;

  Dim steps() const { return static_cast<Dim>(beta.size()); }

  /// alpha_bar at timestep t in [0, T]; t = 0 is defined as 1 so the final
  /// sampler step lands on the clean estimate.
  double alpha_bar_at(Dim t) const;

  static NoiseSchedule from_betas(std::vector<double> betas);
};

/// Linearly interpolated betas between beta_start and beta_end over T steps.
NoiseSchedule make_schedule(Dim T, double beta_start, double beta_end);

/// Strictly increasing timestep subsequence tau_1 < ... < tau_S in [1, T].
struct Subsequence {
  std::vector<Dim> taus;
  void validate(Dim T) const;
  static Subsequence even_spacing(Dim T, Dim S);
};

/// Conditional noise predictor. The underlying map consumes the channel
/// concatenation [x_t ; conditioning ; t-embedding] and returns a tensor of
/// x_t's shape. The timestep enters as a sinusoidal vector broadcast as
/// constant extra channels.
struct Denoiser {
  std::shared_ptr<ParametricMap> map;
  Dim t_embed_dim = 16;

  Tensor assemble_input(const Tensor& x_t, const Tensor& cond, Dim t) const;
  Tensor predict(const Tensor& x_t, const Tensor& cond, Dim t) const;
};

/// Reference desk-scale denoiser: 3 conv layers on the 2C+16 channel input.
Denoiser make_reference_denoiser(Dim image_channels = 3);

/// Sinusoidal embedding of an integer timestep.
std::vector<double> sinusoidal_embedding(Dim t, Dim dim);

/// x_t = sqrt(alpha_bar_t) * x_c + sqrt(1 - alpha_bar_t) * eps.
Tensor forward_diffuse(const Tensor& x_c, Dim t, const Tensor& eps, const NoiseSchedule& sched);

/// Algebraic inverse of forward_diffuse given a noise estimate.
Tensor predict_clean(const Tensor& x_t, const Tensor& eps_hat, Dim t,
                     const NoiseSchedule& sched);

/// One deterministic reverse step from tau_i to tau_prev (tau_prev may be 0).
Tensor ddim_step(const Tensor& x_tau_i, const Tensor& x_tilde, Dim tau_i, Dim tau_prev,
                 const Denoiser& denoiser, const NoiseSchedule& sched);

/// Full deterministic reverse pass from tau_S down to 0. x_start is the state
/// at timestep tau_S.
Tensor ddim_sample(const Tensor& x_start, const Tensor& x_tilde, const Subsequence& subsequence,
                   const Denoiser& denoiser, const NoiseSchedule& sched);

/// Mean over the batch of |eps - predicted eps|^2 with t ~ Uniform{1..T} and
/// eps ~ N(0, I) drawn from rng. Deterministic given the rng seed.
double diffusion_loss(const Denoiser& denoiser, const std::vector<Tensor>& x_c_batch,
                      const std::vector<Tensor>& x_tilde_batch, const NoiseSchedule& sched,
                      Rng rng);

/// Same draw sequence as diffusion_loss; also returns the analytic gradient
/// with respect to the denoiser map parameters.
std::pair<double, std::vector<double>> diffusion_loss_with_grad(
    const Denoiser& denoiser, const std::vector<Tensor>& x_c_batch,
    const std::vector<Tensor>& x_tilde_batch, const NoiseSchedule& sched, Rng rng);

}  // namespace awf
