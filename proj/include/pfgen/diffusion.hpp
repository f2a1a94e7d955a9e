#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pfgen/conditioning.hpp"
#include "pfgen/errors.hpp"
#include "pfgen/noise.hpp"
#include "pfgen/pointnet.hpp"
#include "pfgen/rng.hpp"
#include "pfgen/tensor.hpp"

namespace pfgen::ddpm {

inline constexpr double kBetaClip = 0.999;

// Raw cosine-schedule beta before clipping, 1-based step index.
inline double raw_beta(int t, int T, double r) {
  double denom = std::cos((r / (1.0 + r)) * 3.14159265358979323846 / 2.0);
  double num = std::cos(((static_cast<double>(t) / T + r) / (1.0 + r)) *
                        3.14159265358979323846 / 2.0);
  return 1.0 - (num * num) / (denom * denom);
}

// Cosine noise schedule, steps t = 1..T stored at index t-1. alpha_bar is
// kept in extended precision: the T=1000 product reaches ~1e-591, below
// double range but strictly positive, which the invariants require.
struct NoiseSchedule {
  int T = 0;
  double r = 0.0;
  std::vector<double> beta, alpha;
  std::vector<long double> alpha_bar;

  double beta_at(int t) const { return beta[check(t)]; }
  double alpha_at(int t) const { return alpha[check(t)]; }
  long double alpha_bar_at(int t) const { return alpha_bar[check(t)]; }
  double sqrt_alpha_bar(int t) const {
    return static_cast<double>(sqrtl(alpha_bar[check(t)]));
  }
  double one_minus_alpha_bar(int t) const {
    return static_cast<double>(1.0L - alpha_bar[check(t)]);
  }

 private:
  std::size_t check(int t) const {
    require(t >= 1 && t <= T, ErrorCategory::domain,
            "schedule: step " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
    return static_cast<std::size_t>(t - 1);
  }
};

inline NoiseSchedule build_schedule(int T, double r = 0.008) {
  require(T >= 1, ErrorCategory::config, "build_schedule: T must be >= 1");
  require(r > 0.0, ErrorCategory::config, "build_schedule: r must be > 0");
  NoiseSchedule s;
  s.T = T;
  s.r = r;
  s.beta.resize(static_cast<std::size_t>(T));
  s.alpha.resize(static_cast<std::size_t>(T));
  s.alpha_bar.resize(static_cast<std::size_t>(T));
  long double prod = 1.0L;
  for (int t = 1; t <= T; ++t) {
    double b = raw_beta(t, T, r);
    if (b > kBetaClip) b = kBetaClip;
    double a = 1.0 - b;
    prod *= static_cast<long double>(a);
    s.beta[static_cast<std::size_t>(t - 1)] = b;
    s.alpha[static_cast<std::size_t>(t - 1)] = a;
    s.alpha_bar[static_cast<std::size_t>(t - 1)] = prod;
  }
  return s;
}

// y_t = sqrt(abar_t) * y_clean + sqrt(1 - abar_t) * eps, fresh column-wise
// standard normal eps. Returns (y_t, eps).
inline std::pair<Tensor, Tensor> forward_noise(const Tensor& y_clean, int t,
                                               const NoiseSchedule& sched, Rng& rng) {
  require(y_clean.rank() == 2, ErrorCategory::dimension, "forward_noise: y_clean must be N x n");
  double sa = sched.sqrt_alpha_bar(t);
  double sn = std::sqrt(sched.one_minus_alpha_bar(t));
  Tensor eps = standard_normal_like(y_clean.extent(0), y_clean.extent(1), rng);
  Tensor y(y_clean.shape());
  for (Index i = 0; i < y.size(); ++i)
    y[i] = static_cast<float>(sa * static_cast<double>(y_clean[i]) +
                              sn * static_cast<double>(eps[i]));
  return {std::move(y), std::move(eps)};
}

inline double loss(const Tensor& pred_eps, const Tensor& eps) {
  return mse_value(pred_eps, eps);
}

// One ancestral step t -> t-1. The noise term sqrt(beta_t) * z is omitted on
// the final step (t = 1); no draw is consumed there.
inline Tensor denoise_step(const Tensor& y_t, const Tensor& eps_hat, int t,
                           const NoiseSchedule& sched, Rng& rng) {
  require(y_t.same_shape(eps_hat), ErrorCategory::dimension, "denoise_step: shape mismatch");
  double beta = sched.beta_at(t);
  double k = beta / std::sqrt(sched.one_minus_alpha_bar(t));
  double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha_at(t));
  Tensor out(y_t.shape());
  for (Index i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(
        (static_cast<double>(y_t[i]) - k * static_cast<double>(eps_hat[i])) * inv_sqrt_alpha);
  if (t > 1) {
    double sb = std::sqrt(beta);
    Tensor z = standard_normal_like(out.extent(0), out.extent(1), rng);
    for (Index i = 0; i < out.size(); ++i)
      out[i] = static_cast<float>(static_cast<double>(out[i]) +
                                  sb * static_cast<double>(z[i]));
  }
  return out;
}

// Noise-prediction callback: (current state [N x n], integer step t) -> eps.
using Predictor = std::function<Tensor(const Tensor&, int)>;

// Ancestral reverse process from y_T ~ N(0, I) down to y_0.
inline Tensor sample_with(const Predictor& predict, Index n_points, Index n_cfd,
                          const NoiseSchedule& sched, Rng& rng) {
  Tensor y = standard_normal_like(n_points, n_cfd, rng);
  for (int t = sched.T; t >= 1; --t) {
    Tensor eps_hat = predict(y, t);
    require(eps_hat.same_shape(y), ErrorCategory::dimension,
            "sample: predictor output shape mismatch");
    y = denoise_step(y, eps_hat, t, sched, rng);
    require(y.all_finite(), ErrorCategory::diverged,
            "diffusion sampling diverged at step " + std::to_string(t));
  }
  return y;
}

// Network-driven sampling for one cloud of normalized coordinates [N x d];
// the embedding receives the raw integer step. Returns normalized fields.
inline Tensor sample(const ModelParams& params, const Tensor& coords,
                     const TimeEmbedding& emb, const NoiseSchedule& sched, Rng& rng) {
  require(params.kind == ModelKind::diffusion, ErrorCategory::config,
          "sample: model is not a diffusion model");
  require(coords.rank() == 2, ErrorCategory::dimension, "sample: coords must be N x d");
  Predictor net = [&](const Tensor& y, int t) {
    return forward_infer(params, assemble_input(coords, y, static_cast<double>(t), emb));
  };
  return sample_with(net, coords.extent(0), params.n_cfd, sched, rng);
}

}  // namespace pfgen::ddpm
