#pragma once

#include <span>

#include "pfgen/errors.hpp"
#include "pfgen/rng.hpp"
#include "pfgen/tensor.hpp"

namespace pfgen {

// Fills an [N x C] tensor with standard normals one column at a time, so the
// C field channels come from disjoint stretches of the stream (independent
// noise fields per quantity).
inline void fill_normal_by_column(Tensor& t, Rng& rng) {
  require(t.rank() == 2, ErrorCategory::dimension, "fill_normal_by_column: rank must be 2");
  Index n = t.extent(0), c = t.extent(1);
  std::vector<float> col(static_cast<std::size_t>(n));
  for (Index j = 0; j < c; ++j) {
    rng.fill_standard_normal(col);
    for (Index i = 0; i < n; ++i) t(i, j) = col[static_cast<std::size_t>(i)];
  }
}

inline Tensor standard_normal_like(Index n, Index c, Rng& rng) {
  Tensor t({n, c});
  fill_normal_by_column(t, rng);
  return t;
}

// Mean squared difference over all entries; double accumulator.
inline double mse_value(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), ErrorCategory::dimension,
          "mse: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  require(a.size() > 0, ErrorCategory::dimension, "mse: empty tensors");
  double acc = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

}  // namespace pfgen
