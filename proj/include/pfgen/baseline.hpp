#pragma once

#include "pfgen/errors.hpp"
#include "pfgen/noise.hpp"
#include "pfgen/pointnet.hpp"
#include "pfgen/tensor.hpp"

namespace pfgen::baseline {

inline double loss(const Tensor& pred, const Tensor& truth) {
  return mse_value(pred, truth);
}

// Deterministic geometry -> normalized fields regression; the sigmoid head
// keeps outputs in (0,1), pairing with the [0,1] field normalization.
inline Tensor predict(const ModelParams& params, const Tensor& coords) {
  require(params.kind == ModelKind::baseline, ErrorCategory::config,
          "predict: model is not a baseline model");
  return forward_infer(params, coords);
}

}  // namespace pfgen::baseline
