#pragma once

#include <functional>
#include <string>

#include "pfgen/conditioning.hpp"
#include "pfgen/errors.hpp"
#include "pfgen/noise.hpp"
#include "pfgen/pointnet.hpp"
#include "pfgen/rng.hpp"
#include "pfgen/tensor.hpp"

namespace pfgen::fm {

// One training pair for flow matching: clean fields, Gaussian endpoint, the
// interpolated state and the constant velocity target.
struct FlowSample {
  double tau = 0.0;
  Tensor y_clean, y_noisy, y_tau, f_target;
};

// y_tau = (1 - tau) * y_clean + tau * y_noisy, entrywise in double.
inline Tensor interpolate(const Tensor& y_clean, const Tensor& y_noisy, double tau) {
  require(y_clean.same_shape(y_noisy), ErrorCategory::dimension,
          "interpolate: shape mismatch");
  Tensor out(y_clean.shape());
  for (Index i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>((1.0 - tau) * static_cast<double>(y_clean[i]) +
                                tau * static_cast<double>(y_noisy[i]));
  return out;
}

inline Tensor velocity_target(const Tensor& y_clean, const Tensor& y_noisy) {
  require(y_clean.same_shape(y_noisy), ErrorCategory::dimension,
          "velocity_target: shape mismatch");
  Tensor out(y_clean.shape());
  for (Index i = 0; i < out.size(); ++i) out[i] = y_noisy[i] - y_clean[i];
  return out;
}

inline FlowSample make_sample_at(const Tensor& y_clean, double tau, Rng& rng) {
  require(y_clean.rank() == 2, ErrorCategory::dimension,
          "make_training_sample: y_clean must be N x n");
  FlowSample s;
  s.tau = tau;
  s.y_clean = y_clean;
  s.y_noisy = standard_normal_like(y_clean.extent(0), y_clean.extent(1), rng);
  s.y_tau = interpolate(s.y_clean, s.y_noisy, tau);
  s.f_target = velocity_target(s.y_clean, s.y_noisy);
  return s;
}

// tau ~ Uniform[0,1] per cloud, fresh noise per call.
inline FlowSample make_training_sample(const Tensor& y_clean, Rng& rng) {
  double tau = rng.uniform01();
  return make_sample_at(y_clean, tau, rng);
}

inline double loss(const Tensor& pred, const FlowSample& s) {
  return mse_value(pred, s.f_target);
}

// Velocity field callback: (current state [N x n], tau) -> prediction.
using Predictor = std::function<Tensor(const Tensor&, double)>;

// Explicit Euler integration from tau=1 to tau=0 starting at the given
// state: at step n the field is evaluated at tau = 1 - n*dtau and the state
// is advanced by y <- y - dtau * prediction.
inline Tensor sample_from(Tensor state, const Predictor& predict, int n_steps) {
  require(n_steps >= 1, ErrorCategory::config, "sample: n_steps must be >= 1");
  double dtau = 1.0 / static_cast<double>(n_steps);
  for (int n = 0; n < n_steps; ++n) {
    double tau = 1.0 - static_cast<double>(n) * dtau;
    Tensor pred = predict(state, tau);
    require(pred.same_shape(state), ErrorCategory::dimension,
            "sample: predictor output shape mismatch");
    for (Index i = 0; i < state.size(); ++i)
      state[i] = static_cast<float>(static_cast<double>(state[i]) -
                                    dtau * static_cast<double>(pred[i]));
    require(state.all_finite(), ErrorCategory::diverged,
            "flow-matching sampling diverged at step " + std::to_string(n));
  }
  return state;
}

// Draws the tau=1 state as standard normal noise, then integrates.
inline Tensor sample_with(const Predictor& predict, Index n_points, Index n_cfd,
                          int n_steps, Rng& rng) {
  Tensor state = standard_normal_like(n_points, n_cfd, rng);
  return sample_from(std::move(state), predict, n_steps);
}

// Network-driven sampling for one cloud of normalized coordinates [N x d];
// batch norm runs in inference mode. Returns normalized fields [N x n_cfd].
inline Tensor sample(const ModelParams& params, const Tensor& coords,
                     const TimeEmbedding& emb, int n_steps, Rng& rng) {
  require(params.kind == ModelKind::flow_matching, ErrorCategory::config,
          "sample: model is not a flow-matching model");
  require(coords.rank() == 2, ErrorCategory::dimension, "sample: coords must be N x d");
  Predictor net = [&](const Tensor& y, double tau) {
    return forward_infer(params, assemble_input(coords, y, tau, emb));
  };
  return sample_with(net, coords.extent(0), params.n_cfd, n_steps, rng);
}

}  // namespace pfgen::fm
