#include "awf/diffusion.hpp"

#include <cmath>

namespace awf {

double NoiseSchedule::alpha_bar_at(Dim t) const {
  if (t == 0) return 1.0;
  if (t < 1 || t > steps())
    throw std::invalid_argument("timestep " + std::to_string(t) + " outside [0," +
                                std::to_string(steps()) + "]");
  return alpha_bar[static_cast<std::size_t>(t - 1)];
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw std::invalid_argument("schedule needs at least one step");
  NoiseSchedule s;
  s.beta = std::move(betas);
  s.alpha_bar.resize(s.beta.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < s.beta.size(); ++i) {
    if (!(s.beta[i] > 0.0 && s.beta[i] < 1.0))
      throw std::invalid_argument("beta values must lie in (0,1)");
    prod *= 1.0 - s.beta[i];
    s.alpha_bar[i] = prod;
  }
  return s;
}

NoiseSchedule make_schedule(Dim T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(T));
  for (Dim i = 0; i < T; ++i) {
    const double f = (T == 1) ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
    betas[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * f;
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

void Subsequence::validate(Dim T) const {
  if (taus.empty()) throw std::invalid_argument("subsequence must be non-empty");
  Dim prev = 0;
  for (Dim t : taus) {
    if (t <= prev || t > T)
      throw std::invalid_argument("subsequence must be strictly increasing within [1,T]");
    prev = t;
  }
}

Subsequence Subsequence::even_spacing(Dim T, Dim S) {
  if (S < 1 || S > T) throw std::invalid_argument("even_spacing: need 1 <= S <= T");
  Subsequence sub;
  sub.taus.resize(static_cast<std::size_t>(S));
  for (Dim i = 1; i <= S; ++i)
    sub.taus[static_cast<std::size_t>(i - 1)] = (i * T) / S;
  sub.validate(T);
  return sub;
}

std::vector<double> sinusoidal_embedding(Dim t, Dim dim) {
  std::vector<double> e(static_cast<std::size_t>(dim));
  const Dim half = dim / 2;
  for (Dim k = 0; k < half; ++k) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
    e[static_cast<std::size_t>(2 * k)] = std::sin(static_cast<double>(t) * freq);
    e[static_cast<std::size_t>(2 * k + 1)] = std::cos(static_cast<double>(t) * freq);
  }
  return e;
}

Tensor Denoiser::assemble_input(const Tensor& x_t, const Tensor& cond, Dim t) const {
  if (x_t.rank() != 3 || !x_t.same_shape(cond))
    throw std::invalid_argument("denoiser: x_t and conditioning must share [C,H,W]");
  const Dim H = x_t.dim(1), W = x_t.dim(2);
  Tensor stacked = concat_channels(x_t, cond);
  Tensor emb({t_embed_dim, H, W});
  const std::vector<double> e = sinusoidal_embedding(t, t_embed_dim);
  for (Dim c = 0; c < t_embed_dim; ++c) {
    const double v = e[static_cast<std::size_t>(c)];
    for (Dim i = 0; i < H; ++i)
      for (Dim j = 0; j < W; ++j) emb.at3(c, i, j) = v;
  }
  return concat_channels(stacked, emb);
}

Tensor Denoiser::predict(const Tensor& x_t, const Tensor& cond, Dim t) const {
  if (!map) throw std::invalid_argument("denoiser: missing map");
  Tensor out = map->apply(assemble_input(x_t, cond, t));
  if (!out.same_shape(x_t))
    throw std::invalid_argument("denoiser: output shape must match x_t");
  return out;
}

Denoiser make_reference_denoiser(Dim image_channels) {
  Denoiser d;
  d.map = std::make_shared<ConvStackMap>(
      std::vector<Dim>{2 * image_channels + d.t_embed_dim, 16, 16, image_channels});
  return d;
}

Tensor forward_diffuse(const Tensor& x_c, Dim t, const Tensor& eps, const NoiseSchedule& sched) {
  if (!x_c.same_shape(eps)) throw std::invalid_argument("forward_diffuse: shape mismatch");
  const double ab = sched.alpha_bar_at(t);
  const double sa = std::sqrt(ab);
  const double sb = std::sqrt(1.0 - ab);
  Tensor out = x_c;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = sa * x_c[i] + sb * eps[i];
  return out;
}

Tensor predict_clean(const Tensor& x_t, const Tensor& eps_hat, Dim t,
                     const NoiseSchedule& sched) {
  if (!x_t.same_shape(eps_hat)) throw std::invalid_argument("predict_clean: shape mismatch");
  const double ab = sched.alpha_bar_at(t);
  if (!(ab > 0.0)) throw std::invalid_argument("predict_clean: alpha_bar must be positive");
  const double sa = std::sqrt(ab);
  const double sb = std::sqrt(1.0 - ab);
  Tensor out = x_t;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (x_t[i] - sb * eps_hat[i]) / sa;
  return out;
}

Tensor ddim_step(const Tensor& x_tau_i, const Tensor& x_tilde, Dim tau_i, Dim tau_prev,
                 const Denoiser& denoiser, const NoiseSchedule& sched) {
  if (!(tau_prev < tau_i)) throw std::invalid_argument("ddim_step: tau_prev must be < tau_i");
  const Tensor eps_hat = denoiser.predict(x_tau_i, x_tilde, tau_i);
  const Tensor x_hat_c = predict_clean(x_tau_i, eps_hat, tau_i, sched);
  const double ab_prev = sched.alpha_bar_at(tau_prev);
  const double sa = std::sqrt(ab_prev);
  const double sb = std::sqrt(1.0 - ab_prev);
  Tensor out = x_hat_c;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = sa * x_hat_c[i] + sb * eps_hat[i];
  return out;
}

Tensor ddim_sample(const Tensor& x_start, const Tensor& x_tilde, const Subsequence& subsequence,
                   const Denoiser& denoiser, const NoiseSchedule& sched) {
  subsequence.validate(sched.steps());
  Tensor x = x_start;
  for (std::size_t i = subsequence.taus.size(); i-- > 0;) {
    const Dim tau_i = subsequence.taus[i];
    const Dim tau_prev = (i == 0) ? 0 : subsequence.taus[i - 1];
    x = ddim_step(x, x_tilde, tau_i, tau_prev, denoiser, sched);
  }
  return x;
}

namespace {

struct LossDraw {
  Dim t;
  Tensor eps;
};

LossDraw draw_for_item(const Tensor& x_c, const NoiseSchedule& sched, Rng& rng) {
  LossDraw d;
  d.t = rng.uniform_int(1, sched.steps());
  d.eps = Tensor(x_c.shape());
  for (std::size_t i = 0; i < d.eps.numel(); ++i) d.eps[i] = rng.normal();
  return d;
}

}  // namespace

double diffusion_loss(const Denoiser& denoiser, const std::vector<Tensor>& x_c_batch,
                      const std::vector<Tensor>& x_tilde_batch, const NoiseSchedule& sched,
                      Rng rng) {
  if (x_c_batch.size() != x_tilde_batch.size() || x_c_batch.empty())
    throw std::invalid_argument("diffusion_loss: batches must align and be non-empty");
  double total = 0.0;
  for (std::size_t b = 0; b < x_c_batch.size(); ++b) {
    const LossDraw d = draw_for_item(x_c_batch[b], sched, rng);
    const Tensor x_t = forward_diffuse(x_c_batch[b], d.t, d.eps, sched);
    const Tensor eps_hat = denoiser.predict(x_t, x_tilde_batch[b], d.t);
    double sq = 0.0;
    for (std::size_t i = 0; i < d.eps.numel(); ++i) {
      const double diff = d.eps[i] - eps_hat[i];
      sq += diff * diff;
    }
    total += sq;
  }
  return total / static_cast<double>(x_c_batch.size());
}

std::pair<double, std::vector<double>> diffusion_loss_with_grad(
    const Denoiser& denoiser, const std::vector<Tensor>& x_c_batch,
    const std::vector<Tensor>& x_tilde_batch, const NoiseSchedule& sched, Rng rng) {
  if (x_c_batch.size() != x_tilde_batch.size() || x_c_batch.empty())
    throw std::invalid_argument("diffusion_loss: batches must align and be non-empty");
  if (!denoiser.map->has_analytic_grad())
    throw std::invalid_argument("diffusion_loss_with_grad needs an analytic-gradient map");

  const double inv_b = 1.0 / static_cast<double>(x_c_batch.size());
  double total = 0.0;
  std::vector<double> grad(denoiser.map->param_count(), 0.0);
  for (std::size_t b = 0; b < x_c_batch.size(); ++b) {
    const LossDraw d = draw_for_item(x_c_batch[b], sched, rng);
    const Tensor x_t = forward_diffuse(x_c_batch[b], d.t, d.eps, sched);
    const Tensor map_in = denoiser.assemble_input(x_t, x_tilde_batch[b], d.t);
    const Tensor eps_hat = denoiser.map->apply(map_in);
    Tensor gout(eps_hat.shape());
    double sq = 0.0;
    for (std::size_t i = 0; i < d.eps.numel(); ++i) {
      const double diff = d.eps[i] - eps_hat[i];
      sq += diff * diff;
      gout[i] = -2.0 * diff * inv_b;
    }
    total += sq;
    const Tensor* in_ptr = &map_in;
    const std::vector<double> g =
        denoiser.map->param_grad(std::span<const Tensor>(in_ptr, 1), gout);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
  }
  return {total * inv_b, std::move(grad)};
}

}  // namespace awf
