#pragma once

#include <cmath>
#include <vector>

#include "pfgen/errors.hpp"
#include "pfgen/tensor.hpp"

namespace pfgen {

// Sinusoidal embedding of the noise-level variable. Channel k of dim/2 pairs
// uses frequency omega_k = exp(-(k-1)/(dim/2 - 1) * ln 1e4), so omega_1 = 1
// and omega_{dim/2} = 1e-4; pairs are interleaved [sin, cos, sin, cos, ...].
// Flow matching passes tau in [0,1], diffusion passes the raw integer step.
class TimeEmbedding {
 public:
  explicit TimeEmbedding(int dim = 32) : dim_(dim) {
    require(dim >= 2 && dim % 2 == 0, ErrorCategory::config,
            "TimeEmbedding: dim must be even and >= 2");
    int half = dim / 2;
    freqs_.resize(static_cast<std::size_t>(half));
    for (int k = 1; k <= half; ++k) {
      double u = half == 1 ? 0.0
                           : static_cast<double>(k - 1) / static_cast<double>(half - 1);
      freqs_[static_cast<std::size_t>(k - 1)] = std::exp(-u * std::log(1.0e4));
    }
  }

  int dim() const { return dim_; }

  const std::vector<double>& frequencies() const { return freqs_; }

  // Writes dim floats at out.
  void write(double t, float* out) const {
    for (std::size_t k = 0; k < freqs_.size(); ++k) {
      double a = freqs_[k] * t;
      out[2 * k] = static_cast<float>(std::sin(a));
      out[2 * k + 1] = static_cast<float>(std::cos(a));
    }
  }

  Tensor embed(double t) const {
    Tensor e({static_cast<Index>(dim_)});
    write(t, e.data());
    return e;
  }

 private:
  int dim_;
  std::vector<double> freqs_;
};

// Network input for the generative models, one cloud: rows are
// [coords | time embedding | field state], channel count d + dim + n_cfd.
// The same embedding vector is tiled across all points.
inline Tensor assemble_input(const Tensor& coords, const Tensor& field_state, double t,
                             const TimeEmbedding& emb) {
  require(coords.rank() == 2, ErrorCategory::dimension, "assemble_input: coords must be N x d");
  require(field_state.rank() == 2, ErrorCategory::dimension,
          "assemble_input: field state must be N x n");
  Index n = coords.extent(0);
  require(field_state.extent(0) == n, ErrorCategory::dimension,
          "assemble_input: point count mismatch");
  Index d = coords.extent(1);
  Index nf = field_state.extent(1);
  Index de = emb.dim();

  Tensor evec = emb.embed(t);
  Tensor out({n, d + de + nf});
  for (Index i = 0; i < n; ++i) {
    float* row = out.data() + i * (d + de + nf);
    for (Index j = 0; j < d; ++j) row[j] = coords(i, j);
    for (Index j = 0; j < de; ++j) row[d + j] = evec[j];
    for (Index j = 0; j < nf; ++j) row[d + de + j] = field_state(i, j);
  }
  return out;
}

}  // namespace pfgen
