#include "test_support.hpp"

#include <pfgen/autodiff.hpp>
#include <pfgen/pointnet.hpp>
#include <pfgen/rng.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>
#include <vector>

using namespace pfgen;

namespace {

Tensor random_cloud_input(Index n, Index c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x({n, c});
  for (Index i = 0; i < x.size(); ++i)
    x[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  return x;
}

}  // namespace

TEST_CASE("model kind names round trip") {
  CHECK(parse_model_kind("fm") == ModelKind::flow_matching);
  CHECK(parse_model_kind("ddpm") == ModelKind::diffusion);
  CHECK(parse_model_kind("baseline") == ModelKind::baseline);
  CHECK_THROWS_CATEGORY(ErrorCategory::config, parse_model_kind("vae"));
  CHECK(std::string(to_string(ModelKind::flow_matching)) == "fm");
  CHECK(std::string(to_string(ModelKind::diffusion)) == "ddpm");
  CHECK(std::string(to_string(ModelKind::baseline)) == "baseline");
}

TEST_CASE("layer plan wires encoder, concat, decoder, head") {
  auto plan = layer_plan(ModelKind::flow_matching, 2, 32, 3, 1);
  REQUIRE(plan.size() == 10);
  // Encoder input: coords + embedding + field state.
  CHECK(plan[0].c_in == 37);
  const Index enc[5] = {128, 128, 128, 256, 2048};
  for (int i = 0; i < 5; ++i) {
    CHECK(plan[std::size_t(i)].c_out == enc[i]);
    CHECK(plan[std::size_t(i)].bn);
  }
  // Decoder consumes [branch | pooled global] = 128 + 2048.
  CHECK(plan[5].c_in == 2176);
  const Index dec[4] = {1024, 512, 256, 256};
  for (int i = 0; i < 4; ++i) {
    CHECK(plan[std::size_t(5 + i)].c_out == dec[i]);
    CHECK(plan[std::size_t(5 + i)].bn);
  }
  CHECK(plan[9].c_in == 256);
  CHECK(plan[9].c_out == 3);
  CHECK_FALSE(plan[9].bn);

  // Baseline takes coordinates only.
  auto base = layer_plan(ModelKind::baseline, 2, 0, 3, 1);
  CHECK(base[0].c_in == 2);

  // Width divisor scales internal widths, not the interface.
  auto tiny = layer_plan(ModelKind::flow_matching, 2, 32, 3, 16);
  CHECK(tiny[0].c_in == 37);
  CHECK(tiny[0].c_out == 8);
  CHECK(tiny[4].c_out == 128);
  CHECK(tiny[5].c_in == 8 + 128);
  CHECK(tiny[9].c_out == 3);

  CHECK_THROWS_CATEGORY(ErrorCategory::config, layer_plan(ModelKind::baseline, 2, 0, 3, 5));
  CHECK_THROWS_CATEGORY(ErrorCategory::config, layer_plan(ModelKind::baseline, 2, 0, 3, 0));
}

TEST_CASE("parameter counts match the frozen architecture") {
  ModelParams base = build_model(ModelKind::baseline, 2, 0, 3, 1);
  CHECK(count_parameters(base) == 3554179L);
  ModelParams fm = build_model(ModelKind::flow_matching, 2, 32, 3, 1);
  CHECK(count_parameters(fm) == 3558659L);
  // fm and ddpm share the generative head; only the conditioning differs.
  ModelParams dd = build_model(ModelKind::diffusion, 2, 32, 3, 2);
  CHECK(count_parameters(dd) == count_parameters(fm));

  // Manual count: weights + biases + bn scale/shift on nine blocks.
  long manual = 0;
  for (const auto& b : base.blocks) {
    manual += b.weight.size() + b.bias.size();
    if (b.has_bn) manual += b.bn_scale.size() + b.bn_shift.size();
  }
  CHECK(manual == 3554179L);
  CHECK(base.trainable().size() == 38);  // 10 weights, 10 biases, 9 bn pairs
}

TEST_CASE("initialization is seeded and scaled per fan-in") {
  ModelParams a = build_model(ModelKind::baseline, 2, 0, 3, 7);
  ModelParams b = build_model(ModelKind::baseline, 2, 0, 3, 7);
  ModelParams c = build_model(ModelKind::baseline, 2, 0, 3, 8);

  bool identical = true, differs = false;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    const Tensor& wa = a.blocks[i].weight;
    for (Index k = 0; k < wa.size(); ++k) {
      identical = identical && (wa[k] == b.blocks[i].weight[k]);
      differs = differs || (wa[k] != c.blocks[i].weight[k]);
    }
    double bound = std::sqrt(1.0 / double(a.blocks[i].c_in()));
    for (Index k = 0; k < wa.size(); ++k) {
      CHECK(wa[k] >= -bound);
      CHECK(wa[k] <= bound);
    }
    for (Index k = 0; k < a.blocks[i].bias.size(); ++k)
      CHECK(a.blocks[i].bias[k] == 0.0f);
    if (a.blocks[i].has_bn) {
      for (Index k = 0; k < a.blocks[i].bn_scale.size(); ++k) {
        CHECK(a.blocks[i].bn_scale[k] == 1.0f);
        CHECK(a.blocks[i].bn_shift[k] == 0.0f);
        CHECK(a.blocks[i].bn_mean[k] == 0.0f);
        CHECK(a.blocks[i].bn_var[k] == 1.0f);
      }
    }
  }
  CHECK(identical);
  CHECK(differs);
}

TEST_CASE("forward shapes and input validation") {
  ModelParams m = build_model(ModelKind::flow_matching, 2, 32, 3, 3, 16);
  Tensor x = random_cloud_input(12, 37, 5);
  Tensor y = forward_infer(m, x);
  REQUIRE(y.rank() == 2);
  CHECK(y.extent(0) == 12);
  CHECK(y.extent(1) == 3);
  CHECK(y.all_finite());

  // Batched input keeps the batch axis.
  Tensor xb({2, 12, 37});
  for (Index i = 0; i < x.size(); ++i) {
    xb[i] = x[i];
    xb[x.size() + i] = x[i];
  }
  Tensor yb = forward_infer(m, xb);
  REQUIRE(yb.rank() == 3);
  CHECK(yb.extent(0) == 2);
  // Identical clouds in a batch produce identical rows in inference mode.
  for (Index i = 0; i < y.size(); ++i) CHECK(yb[i] == yb[y.size() + i]);

  CHECK_THROWS_CATEGORY(ErrorCategory::dimension,
                        forward_infer(m, random_cloud_input(12, 36, 5)));
  CHECK_THROWS_CATEGORY(ErrorCategory::dimension, forward_infer(m, Tensor({0, 37})));
}

TEST_CASE("baseline head is a sigmoid") {
  ModelParams m = build_model(ModelKind::baseline, 2, 0, 3, 11, 16);
  Tensor y = forward_infer(m, random_cloud_input(20, 2, 6));
  for (Index i = 0; i < y.size(); ++i) {
    CHECK(y[i] > 0.0f);
    CHECK(y[i] < 1.0f);
  }
}

TEST_CASE("generative head is unsquashed") {
  // An untrained network with random inputs should exceed (0,1) somewhere.
  ModelParams m = build_model(ModelKind::flow_matching, 2, 32, 3, 11, 16);
  Tensor y = forward_infer(m, random_cloud_input(64, 37, 6));
  bool outside = false;
  for (Index i = 0; i < y.size(); ++i)
    outside = outside || y[i] < 0.0f || y[i] > 1.0f;
  CHECK(outside);
}

TEST_CASE("inference is equivariant under point permutations") {
  ModelParams m = build_model(ModelKind::diffusion, 2, 32, 3, 13, 16);
  const Index n = 40, c = 37;
  Tensor x = random_cloud_input(n, c, 17);
  Tensor y = forward_infer(m, x);

  Rng rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i)
      std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.below(i))]);

    Tensor xp({n, c});
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < c; ++j)
        xp(i, j) = x(perm[static_cast<std::size_t>(i)], j);
    Tensor yp = forward_infer(m, xp);
    // Bitwise equality of permuted outputs.
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < 3; ++j)
        CHECK(yp(i, j) == y(perm[static_cast<std::size_t>(i)], j));
  }
}

TEST_CASE("training forward updates running statistics") {
  ModelParams m = build_model(ModelKind::baseline, 2, 0, 3, 19, 16);
  Tensor before = m.blocks[0].bn_mean;
  Tape tape;
  TapeForward f = forward_train(tape, m, random_cloud_input(16, 2, 3));
  CHECK(tape.value(f.output).all_finite());
  CHECK(f.param_nodes.size() == m.trainable().size());
  bool moved = false;
  for (Index i = 0; i < before.size(); ++i)
    moved = moved || (m.blocks[0].bn_mean[i] != before[i]);
  CHECK(moved);
}

TEST_CASE("inference does not mutate the model and is thread safe") {
  ModelParams m = build_model(ModelKind::baseline, 2, 0, 3, 23, 16);
  Tensor x = random_cloud_input(24, 2, 8);
  Tensor expect = forward_infer(m, x);
  Tensor stats_before = m.blocks[0].bn_mean;

  std::vector<Tensor> results(4, Tensor({1}));
  std::vector<std::thread> pool;
  for (int w = 0; w < 4; ++w)
    pool.emplace_back([&, w] { results[std::size_t(w)] = forward_infer(m, x); });
  for (auto& t : pool) t.join();

  for (const Tensor& r : results)
    for (Index i = 0; i < expect.size(); ++i) CHECK(r[i] == expect[i]);
  for (Index i = 0; i < stats_before.size(); ++i)
    CHECK(m.blocks[0].bn_mean[i] == stats_before[i]);
}
