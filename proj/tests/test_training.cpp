#include "test_support.hpp"

#include <pfgen/training.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

using namespace pfgen;

namespace {

// Single-block stand-in: enough structure for adam_step, which only needs
// trainable() and matching tape leaves.
ModelParams one_block(float w, float b) {
  ModelParams m;
  m.kind = ModelKind::baseline;
  m.d = 1;
  m.n_cfd = 1;
  LayerBlock blk;
  blk.weight = Tensor::full({1, 1}, w);
  blk.bias = Tensor::full({1}, b);
  blk.has_bn = false;
  m.blocks.push_back(std::move(blk));
  return m;
}

PreparedCloud synth_cloud(long id, Index n, std::uint64_t seed) {
  Rng rng(seed);
  PreparedCloud pc;
  pc.id = id;
  pc.coords = Tensor({n, 2});
  for (Index i = 0; i < pc.coords.size(); ++i)
    pc.coords[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  pc.fields = Tensor({n, 3});
  for (Index i = 0; i < pc.fields.size(); ++i)
    pc.fields[i] = static_cast<float>(rng.uniform01());
  return pc;
}

}  // namespace

TEST_CASE("optimizer state mirrors the trainable tensors") {
  ModelParams m = build_model(ModelKind::baseline, 2, 0, 3, 1, 16);
  OptState st = make_opt_state(m);
  auto params = m.trainable();
  REQUIRE(st.m.size() == params.size());
  REQUIRE(st.v.size() == params.size());
  CHECK(st.step == 0);
  for (std::size_t k = 0; k < params.size(); ++k) {
    CHECK(st.m[k].same_shape(*params[k]));
    for (Index i = 0; i < st.m[k].size(); ++i) {
      CHECK(st.m[k][i] == 0.0f);
      CHECK(st.v[k][i] == 0.0f);
    }
  }
}

TEST_CASE("the first adam step moves by the learning rate") {
  // o = w*x + b with x=0.5, w=2, b=0, target 0: dL/dw = 1, dL/db = 2 exactly.
  ModelParams m = one_block(2.0f, 0.0f);
  OptState st = make_opt_state(m);

  Tape tape;
  int wid = tape.leaf(m.blocks[0].weight);
  int bid = tape.leaf(m.blocks[0].bias);
  int x = tape.leaf(Tensor::full({1, 1}, 0.5f));
  int y = tape.linear(x, wid, bid);
  int loss = tape.mse(y, Tensor::zeros({1, 1}));
  CHECK(tape.value(loss)[0] == 1.0f);
  tape.backward(loss);
  CHECK(tape.grad(wid)[0] == 1.0f);
  CHECK(tape.grad(bid)[0] == 2.0f);

  adam_step(m, st, tape, {wid, bid});
  CHECK(st.step == 1);
  // Bias correction makes m_hat/sqrt(v_hat) = sign(g) on step one, so both
  // parameters move by lr regardless of gradient magnitude.
  CHECK(std::fabs(double(m.blocks[0].weight[0]) - (2.0 - 1e-3)) < 5e-7);
  CHECK(std::fabs(double(m.blocks[0].bias[0]) - (0.0 - 1e-3)) < 1e-8);
}

TEST_CASE("a zero gradient leaves parameters bit identical") {
  ModelParams m = one_block(1.5f, 0.25f);
  OptState st = make_opt_state(m);
  float w0 = m.blocks[0].weight[0], b0 = m.blocks[0].bias[0];

  Tape tape;
  int wid = tape.leaf(m.blocks[0].weight);
  int bid = tape.leaf(m.blocks[0].bias);
  int x = tape.leaf(Tensor::full({1, 1}, 1.0f));
  int y = tape.linear(x, wid, bid);
  int loss = tape.mse(y, Tensor::full({1, 1}, 1.75f));  // exact match
  CHECK(tape.value(loss)[0] == 0.0f);
  tape.backward(loss);

  adam_step(m, st, tape, {wid, bid});
  CHECK(st.step == 1);
  CHECK(m.blocks[0].weight[0] == w0);
  CHECK(m.blocks[0].bias[0] == b0);
}

TEST_CASE("non-finite gradients abort with a diverged error") {
  ModelParams m = one_block(1e30f, 0.0f);
  OptState st = make_opt_state(m);

  Tape tape;
  int wid = tape.leaf(m.blocks[0].weight);
  int bid = tape.leaf(m.blocks[0].bias);
  int x = tape.leaf(Tensor::full({1, 1}, 1e30f));
  int y = tape.linear(x, wid, bid);  // overflows to inf in f32
  int loss = tape.mse(y, Tensor::zeros({1, 1}));
  tape.backward(loss);

  try {
    adam_step(m, st, tape, {wid, bid});
    FAIL("expected diverged error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::diverged);
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("baseline batches stack coordinates against fields") {
  PreparedCloud c0 = synth_cloud(0, 8, 1), c1 = synth_cloud(1, 8, 2);
  Rng rng(3);
  Batch b = make_batch(ModelKind::baseline, nullptr, {&c0, &c1}, nullptr, rng);
  REQUIRE(b.input.extent(0) == 2);
  REQUIRE(b.input.extent(1) == 8);
  REQUIRE(b.input.extent(2) == 2);
  REQUIRE(b.target.extent(2) == 3);
  for (Index p = 0; p < 8; ++p) {
    CHECK(b.input(0, p, 0) == c0.coords(p, 0));
    CHECK(b.input(1, p, 1) == c1.coords(p, 1));
    CHECK(b.target(0, p, 2) == c0.fields(p, 2));
    CHECK(b.target(1, p, 0) == c1.fields(p, 0));
  }
  // The baseline consumes no randomness.
  Rng fresh(3);
  CHECK(rng.next_u64() == fresh.next_u64());
}

TEST_CASE("flow-matching batches draw tau then noise per cloud in order") {
  PreparedCloud c0 = synth_cloud(0, 6, 11), c1 = synth_cloud(1, 6, 12);
  TimeEmbedding emb(8);
  Rng rng(500), clone(500);
  Batch b = make_batch(ModelKind::flow_matching, &emb, {&c0, &c1}, nullptr, rng);
  REQUIRE(b.input.extent(2) == 2 + 8 + 3);

  for (int k = 0; k < 2; ++k) {
    const PreparedCloud& pc = k == 0 ? c0 : c1;
    double tau = clone.uniform01();
    Tensor noise({6, 3});
    fill_normal_by_column(noise, clone);
    Tensor ev = emb.embed(tau);
    for (Index p = 0; p < 6; ++p) {
      CHECK(b.input(k, p, 0) == pc.coords(p, 0));
      CHECK(b.input(k, p, 1) == pc.coords(p, 1));
      for (Index j = 0; j < 8; ++j) CHECK(b.input(k, p, 2 + j) == ev[j]);
      for (Index j = 0; j < 3; ++j) {
        float ytau = static_cast<float>((1.0 - tau) * double(pc.fields(p, j)) +
                                        tau * double(noise(p, j)));
        CHECK(b.input(k, p, 10 + j) == ytau);
        CHECK(b.target(k, p, j) == noise(p, j) - pc.fields(p, j));
      }
    }
  }
}

TEST_CASE("diffusion batches draw the step then noise per cloud in order") {
  PreparedCloud c0 = synth_cloud(0, 5, 21), c1 = synth_cloud(1, 5, 22);
  TimeEmbedding emb(8);
  ddpm::NoiseSchedule sched = ddpm::build_schedule(50);
  Rng rng(600), clone(600);
  Batch b = make_batch(ModelKind::diffusion, &emb, {&c0, &c1}, &sched, rng);

  for (int k = 0; k < 2; ++k) {
    const PreparedCloud& pc = k == 0 ? c0 : c1;
    int t = 1 + static_cast<int>(clone.below(50));
    Tensor eps({5, 3});
    fill_normal_by_column(eps, clone);
    double sa = sched.sqrt_alpha_bar(t);
    double sn = std::sqrt(sched.one_minus_alpha_bar(t));
    Tensor ev = emb.embed(static_cast<double>(t));
    for (Index p = 0; p < 5; ++p) {
      for (Index j = 0; j < 8; ++j) CHECK(b.input(k, p, 2 + j) == ev[j]);
      for (Index j = 0; j < 3; ++j) {
        float yt = static_cast<float>(sa * double(pc.fields(p, j)) +
                                      sn * double(eps(p, j)));
        CHECK(b.input(k, p, 10 + j) == yt);
        CHECK(b.target(k, p, j) == eps(p, j));
      }
    }
  }
}

TEST_CASE("batch assembly validates its inputs") {
  PreparedCloud c0 = synth_cloud(0, 6, 1), c1 = synth_cloud(1, 7, 2);
  TimeEmbedding emb(8);
  Rng rng(1);
  CHECK_THROWS_CATEGORY(ErrorCategory::config,
                        make_batch(ModelKind::baseline, nullptr, {}, nullptr, rng));
  CHECK_THROWS_CATEGORY(ErrorCategory::dimension,
                        make_batch(ModelKind::baseline, nullptr, {&c0, &c1}, nullptr, rng));
  CHECK_THROWS_CATEGORY(ErrorCategory::internal,
                        make_batch(ModelKind::flow_matching, nullptr, {&c0}, nullptr, rng));
}

TEST_CASE("train_step reports a diverged loss") {
  ModelParams m = build_model(ModelKind::baseline, 2, 0, 3, 2, 16);
  OptState st = make_opt_state(m);
  Batch b;
  b.input = Tensor::full({1, 4, 2}, std::numeric_limits<float>::quiet_NaN());
  b.target = Tensor::zeros({1, 4, 3});
  CHECK_THROWS_CATEGORY(ErrorCategory::diverged, train_step(m, st, b));
}

TEST_CASE("train_epochs shuffles, batches, and logs every step") {
  std::vector<PreparedCloud> clouds;
  for (long i = 0; i < 3; ++i) clouds.push_back(synth_cloud(i, 12, 100 + std::uint64_t(i)));

  ModelParams m = build_model(ModelKind::flow_matching, 2, 32, 3, 7, 16);
  OptState st = make_opt_state(m);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.ddpm_T = 10;
  Rng rng(42);
  StepLog log = train_epochs(m, st, clouds, cfg, rng);

  // ceil(3/2) = 2 steps per epoch, partial final batch kept.
  REQUIRE(log.records.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(log.records[i].step == static_cast<long>(i));
    CHECK(log.records[i].epoch == (i < 2 ? 0 : 1));
    CHECK(std::isfinite(log.records[i].loss));
    CHECK(log.records[i].wall_ms >= 0.0);
  }
  CHECK(st.step == 4);

  // Identical seeds reproduce the loss sequence bitwise.
  ModelParams m2 = build_model(ModelKind::flow_matching, 2, 32, 3, 7, 16);
  OptState st2 = make_opt_state(m2);
  Rng rng2(42);
  StepLog log2 = train_epochs(m2, st2, clouds, cfg, rng2);
  for (std::size_t i = 0; i < 4; ++i) CHECK(log2.records[i].loss == log.records[i].loss);

  CHECK_THROWS_CATEGORY(ErrorCategory::config, train_epochs(m, st, {}, cfg, rng));
}

TEST_CASE("repeating one batch drives the baseline loss down") {
  std::vector<PreparedCloud> clouds{synth_cloud(0, 16, 9)};
  ModelParams m = build_model(ModelKind::baseline, 2, 0, 3, 3, 16);
  OptState st = make_opt_state(m);
  TrainConfig cfg;
  Rng rng(8);
  StepLog log = train_repeat_batch(m, st, {&clouds[0]}, 60, cfg, rng);
  REQUIRE(log.records.size() == 60);
  CHECK(log.records.back().loss < log.records.front().loss);
}

TEST_CASE("prepared clouds are normalized against the training stats") {
  DatasetConfig cfg;
  cfg.n_geometries = 5;
  cfg.n_points = 32;
  cfg.n_surface = 8;
  cfg.seed = 13;
  Dataset ds = build_dataset(cfg);
  auto clouds = prepare_clouds(ds, ds.train_ids);
  REQUIRE(clouds.size() == ds.train_ids.size());
  for (const PreparedCloud& pc : clouds) {
    for (Index i = 0; i < pc.coords.size(); ++i) {
      CHECK(pc.coords[i] >= -1.0f - 1e-6f);
      CHECK(pc.coords[i] <= 1.0f + 1e-6f);
    }
    for (Index i = 0; i < pc.fields.size(); ++i) {
      CHECK(pc.fields[i] >= -1e-6f);
      CHECK(pc.fields[i] <= 1.0f + 1e-6f);
    }
  }
  CHECK_THROWS_CATEGORY(ErrorCategory::config, prepare_clouds(ds, {99}));
}

TEST_CASE("step logs serialize to csv") {
  StepLog log;
  log.records.push_back({0, 0, 0.5, 12.0});
  log.records.push_back({1, 0, 0.25, 11.5});
  test::ScratchDir dir("steplog");
  auto path = dir.path() / "train_log.csv";
  write_step_log(log, path.string());

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,epoch,loss,wall_ms");
  std::getline(in, line);
  CHECK(line == "0,0,0.5,12");
  std::getline(in, line);
  CHECK(line == "1,0,0.25,11.5");
  CHECK_FALSE(std::getline(in, line));
}
