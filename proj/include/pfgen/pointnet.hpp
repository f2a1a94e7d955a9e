#pragma once

#include <string>
#include <vector>

#include "pfgen/autodiff.hpp"
#include "pfgen/errors.hpp"
#include "pfgen/rng.hpp"
#include "pfgen/tensor.hpp"

namespace pfgen {

enum class ModelKind { flow_matching, diffusion, baseline };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::flow_matching: return "fm";
    case ModelKind::diffusion: return "ddpm";
    case ModelKind::baseline: return "baseline";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "fm") return ModelKind::flow_matching;
  if (s == "ddpm") return ModelKind::diffusion;
  if (s == "baseline") return ModelKind::baseline;
  fail(ErrorCategory::config, "unknown model kind '" + s + "' (expected fm|ddpm|baseline)");
}

// One shared (pointwise) layer: linear, then optionally ReLU followed by
// batch norm. The final layer of the network has neither; the baseline model
// applies a sigmoid there instead.
struct LayerBlock {
  Tensor weight;  // c_in x c_out
  Tensor bias;    // c_out
  bool has_bn = false;
  Tensor bn_scale, bn_shift;     // trainable, c_out
  Tensor bn_mean, bn_var;        // running stats, c_out
  Index c_in() const { return weight.extent(0); }
  Index c_out() const { return weight.extent(1); }
};

// Segmentation-style PointNet: five encoder layers (128,128,128,256,2048),
// channel-wise max pool to a global feature, which is tiled and concatenated
// with the per-point output of the second layer (128 + 2048 = 2176), then
// four decoder layers (1024,512,256,256) and a linear head. width_divisor
// scales every internal width (testing aid); input/output channels are fixed.
struct ModelParams {
  ModelKind kind = ModelKind::baseline;
  int d = 2;
  int d_emb = 0;  // 0 for the baseline (no time embedding)
  int n_cfd = 3;
  int width_divisor = 1;
  std::vector<LayerBlock> blocks;

  Index input_channels() const { return blocks.front().c_in(); }
  Index output_channels() const { return blocks.back().c_out(); }

  std::vector<Tensor*> trainable() {
    std::vector<Tensor*> out;
    for (auto& b : blocks) {
      out.push_back(&b.weight);
      out.push_back(&b.bias);
      if (b.has_bn) {
        out.push_back(&b.bn_scale);
        out.push_back(&b.bn_shift);
      }
    }
    return out;
  }

  std::vector<const Tensor*> trainable() const {
    std::vector<const Tensor*> out;
    for (const auto& b : blocks) {
      out.push_back(&b.weight);
      out.push_back(&b.bias);
      if (b.has_bn) {
        out.push_back(&b.bn_scale);
        out.push_back(&b.bn_shift);
      }
    }
    return out;
  }

  std::vector<const Tensor*> running_stats() const {
    std::vector<const Tensor*> out;
    for (const auto& b : blocks)
      if (b.has_bn) {
        out.push_back(&b.bn_mean);
        out.push_back(&b.bn_var);
      }
    return out;
  }
};

inline constexpr int kBranchBlock = 1;   // per-point feature saved after this block
inline constexpr int kEncoderLast = 4;   // global max pool after this block
inline constexpr int kBlockCount = 10;

struct LayerDims {
  Index c_in, c_out;
  bool bn;
};

// Widths for one model; the concatenation width follows from the scaled
// branch and global widths.
inline std::vector<LayerDims> layer_plan(ModelKind kind, int d, int d_emb, int n_cfd,
                                         int divisor) {
  require(divisor >= 1, ErrorCategory::config, "width divisor must be >= 1");
  const Index enc[5] = {128, 128, 128, 256, 2048};
  const Index dec[4] = {1024, 512, 256, 256};
  auto scaled = [&](Index w) {
    require(w % divisor == 0, ErrorCategory::config,
            "width " + std::to_string(w) + " not divisible by divisor " +
                std::to_string(divisor));
    return w / divisor;
  };
  Index cin = kind == ModelKind::baseline ? d : d + d_emb + n_cfd;
  std::vector<LayerDims> plan;
  Index prev = cin;
  for (Index w : enc) {
    plan.push_back({prev, scaled(w), true});
    prev = scaled(w);
  }
  Index concat_c = scaled(128) + scaled(2048);
  prev = concat_c;
  for (Index w : dec) {
    plan.push_back({prev, scaled(w), true});
    prev = scaled(w);
  }
  plan.push_back({prev, n_cfd, false});
  return plan;
}

inline ModelParams build_model(ModelKind kind, int d, int d_emb, int n_cfd,
                               std::uint64_t seed, int divisor = 1) {
  require(d >= 1 && n_cfd >= 1, ErrorCategory::config, "build_model: bad dims");
  if (kind == ModelKind::baseline) d_emb = 0;
  else
    require(d_emb >= 2 && d_emb % 2 == 0, ErrorCategory::config,
            "build_model: d_emb must be even and >= 2");
  ModelParams m;
  m.kind = kind;
  m.d = d;
  m.d_emb = d_emb;
  m.n_cfd = n_cfd;
  m.width_divisor = divisor;

  Rng rng(seed);
  for (const LayerDims& L : layer_plan(kind, d, d_emb, n_cfd, divisor)) {
    LayerBlock b;
    b.weight = Tensor({L.c_in, L.c_out});
    double bound = std::sqrt(1.0 / static_cast<double>(L.c_in));
    for (Index i = 0; i < b.weight.size(); ++i)
      b.weight[i] = static_cast<float>(rng.uniform(-bound, bound));
    b.bias = Tensor({L.c_out});
    b.has_bn = L.bn;
    if (L.bn) {
      b.bn_scale = Tensor::full({L.c_out}, 1.0f);
      b.bn_shift = Tensor({L.c_out});
      b.bn_mean = Tensor({L.c_out});
      b.bn_var = Tensor::full({L.c_out}, 1.0f);
    }
    m.blocks.push_back(std::move(b));
  }
  return m;
}

inline long count_parameters(const ModelParams& m) {
  long n = 0;
  for (const Tensor* t : m.trainable()) n += static_cast<long>(t->size());
  return n;
}

struct TapeForward {
  int input = -1;
  int output = -1;                // [B x N x n_cfd]
  std::vector<int> param_nodes;   // aligned with ModelParams::trainable()
};

namespace detail {

inline Tensor to_batched(const Tensor& x) {
  if (x.rank() == 3) return x;
  require(x.rank() == 2, ErrorCategory::dimension, "forward: input must be N x C or B x N x C");
  Tensor out({1, x.extent(0), x.extent(1)});
  for (Index i = 0; i < x.size(); ++i) out[i] = x[i];
  return out;
}

// Builds the full graph; the bn functor applies batch norm for block i with
// the given tape node ids and returns the output node.
template <typename BnFn>
TapeForward forward_impl(Tape& tape, const ModelParams& m, const Tensor& x, BnFn&& bn) {
  require(static_cast<int>(m.blocks.size()) == kBlockCount, ErrorCategory::internal,
          "forward: model must have 10 blocks");
  Tensor xb = to_batched(x);
  require(xb.extent(2) == m.input_channels(), ErrorCategory::dimension,
          "forward: input channels " + std::to_string(xb.extent(2)) + " do not match model " +
              std::to_string(m.input_channels()));
  Index n = xb.extent(1);
  require(n >= 1, ErrorCategory::dimension, "forward: empty cloud");

  TapeForward f;
  f.input = tape.leaf(std::move(xb));

  auto apply_block = [&](int h, int bi) {
    const LayerBlock& blk = m.blocks[static_cast<std::size_t>(bi)];
    int w = tape.leaf(blk.weight);
    int bb = tape.leaf(blk.bias);
    f.param_nodes.push_back(w);
    f.param_nodes.push_back(bb);
    int out = tape.linear(h, w, bb);
    if (blk.has_bn) {
      out = tape.relu(out);
      int sc = tape.leaf(blk.bn_scale);
      int sh = tape.leaf(blk.bn_shift);
      f.param_nodes.push_back(sc);
      f.param_nodes.push_back(sh);
      out = bn(tape, out, sc, sh, bi);
    }
    return out;
  };

  int h = f.input;
  int branch = -1;
  for (int bi = 0; bi <= kEncoderLast; ++bi) {
    h = apply_block(h, bi);
    if (bi == kBranchBlock) branch = h;
  }
  int global = tape.max_pool_points(h);
  int tiled = tape.tile_points(global, n);
  h = tape.concat_channels(branch, tiled);
  for (int bi = kEncoderLast + 1; bi < kBlockCount; ++bi) h = apply_block(h, bi);
  if (m.kind == ModelKind::baseline) h = tape.sigmoid(h);
  f.output = h;
  return f;
}

}  // namespace detail

// Training-mode forward: batch norm uses batch statistics and updates the
// model's running statistics in place.
inline TapeForward forward_train(Tape& tape, ModelParams& m, const Tensor& x) {
  return detail::forward_impl(tape, m, x,
                              [&m](Tape& t, int h, int sc, int sh, int bi) {
                                LayerBlock& blk = m.blocks[static_cast<std::size_t>(bi)];
                                return t.batch_norm_train(h, sc, sh, blk.bn_mean, blk.bn_var);
                              });
}

// Inference-mode forward recorded on a tape (differentiable; running stats
// are treated as constants).
inline TapeForward forward_infer_on_tape(Tape& tape, const ModelParams& m, const Tensor& x) {
  return detail::forward_impl(tape, m, x,
                              [&m](Tape& t, int h, int sc, int sh, int bi) {
                                const LayerBlock& blk = m.blocks[static_cast<std::size_t>(bi)];
                                return t.batch_norm_infer(h, sc, sh, blk.bn_mean, blk.bn_var);
                              });
}

// Inference forward, value only. Accepts [N x C] (returns [N x n_cfd]) or
// [B x N x C] (returns [B x N x n_cfd]). Thread-safe on a shared model.
inline Tensor forward_infer(const ModelParams& m, const Tensor& x) {
  Tape tape;
  TapeForward f = forward_infer_on_tape(tape, m, x);
  const Tensor& out = tape.value(f.output);
  if (x.rank() == 3) return out;
  Tensor squeezed({out.extent(1), out.extent(2)});
  for (Index i = 0; i < squeezed.size(); ++i) squeezed[i] = out[i];
  return squeezed;
}

}  // namespace pfgen
