#include "test_support.hpp"

#include <pfgen/checkpoint.hpp>

#include <cstdint>
#include <fstream>
#include <string>

using namespace pfgen;

namespace {

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ModelParams sample_model() {
  ModelParams m = build_model(ModelKind::flow_matching, 2, 32, 3, 1234, 4);
  // Nudge the running statistics so the payload exercises every tensor kind.
  for (LayerBlock& b : m.blocks) {
    if (!b.has_bn) continue;
    for (Index i = 0; i < b.bn_mean.size(); ++i) {
      b.bn_mean[i] = 0.25f + 0.01f * static_cast<float>(i);
      b.bn_var[i] = 1.5f;
    }
  }
  return m;
}

NormStats sample_stats() {
  return NormStats{{-2.0, 2.0}, {-1.5, 1.5}, {-0.3, 2.7}, {-1.1, 1.2}, {-4.25, 8.5}};
}

FlowConfig sample_flow() {
  FlowConfig f;
  f.rho = 1.25;
  f.mu = 0.05;
  f.u_inf = 2.0;
  f.p0 = 101325.0;
  return f;
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (Index i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("crc32 matches the reference check value") {
  const char* s = "123456789";
  CHECK(crc32(s, 9) == 0xCBF43926u);
  CHECK(crc32(s, 0) == 0u);
}

TEST_CASE("checkpoint round trip preserves every tensor bitwise") {
  ModelParams m = sample_model();
  NormStats st = sample_stats();
  FlowConfig fl = sample_flow();

  test::ScratchDir dir("ckpt");
  auto path = dir.path() / "model.bin";
  save_checkpoint(m, st, fl, path);
  LoadedModel back = load_checkpoint(path);

  CHECK(back.params.kind == m.kind);
  CHECK(back.params.d == m.d);
  CHECK(back.params.d_emb == m.d_emb);
  CHECK(back.params.n_cfd == m.n_cfd);
  CHECK(count_parameters(back.params) == count_parameters(m));

  CHECK(back.stats.x.lo == st.x.lo);
  CHECK(back.stats.x.hi == st.x.hi);
  CHECK(back.stats.u.lo == st.u.lo);
  CHECK(back.stats.p.hi == st.p.hi);
  CHECK(back.flow.rho == fl.rho);
  CHECK(back.flow.mu == fl.mu);
  CHECK(back.flow.u_inf == fl.u_inf);
  CHECK(back.flow.p0 == fl.p0);

  REQUIRE(back.params.blocks.size() == m.blocks.size());
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const LayerBlock& a = m.blocks[i];
    const LayerBlock& b = back.params.blocks[i];
    CHECK(b.has_bn == a.has_bn);
    CHECK(tensors_equal(a.weight, b.weight));
    CHECK(tensors_equal(a.bias, b.bias));
    if (a.has_bn) {
      CHECK(tensors_equal(a.bn_scale, b.bn_scale));
      CHECK(tensors_equal(a.bn_shift, b.bn_shift));
      CHECK(tensors_equal(a.bn_mean, b.bn_mean));
      CHECK(tensors_equal(a.bn_var, b.bn_var));
    }
  }

  // The loaded model is usable for inference.
  Rng rng(5);
  Tensor x({6, 37});
  for (Index i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform01() - 0.5);
  Tensor y = forward_infer(back.params, x);
  CHECK(y.all_finite());
}

TEST_CASE("save then load then save is byte-identical") {
  ModelParams m = sample_model();
  test::ScratchDir dir("ckpt_rt");
  auto p1 = dir.path() / "a.bin";
  auto p2 = dir.path() / "b.bin";
  save_checkpoint(m, sample_stats(), sample_flow(), p1);
  LoadedModel back = load_checkpoint(p1);
  save_checkpoint(back.params, back.stats, back.flow, p2);
  CHECK(read_bytes(p1) == read_bytes(p2));
}

TEST_CASE("corrupted checkpoints are rejected") {
  ModelParams m = sample_model();
  test::ScratchDir dir("ckpt_bad");
  auto path = dir.path() / "model.bin";
  save_checkpoint(m, sample_stats(), sample_flow(), path);
  std::string good = read_bytes(path);

  SECTION("missing file") {
    CHECK_THROWS_CATEGORY(ErrorCategory::io, load_checkpoint(dir.path() / "nope.bin"));
  }
  SECTION("flipped payload byte fails the CRC") {
    std::string bad = good;
    bad[bad.size() / 2] = static_cast<char>(bad[bad.size() / 2] ^ 0x40);
    write_bytes(path, bad);
    auto cat = test::thrown_category([&] { load_checkpoint(path); });
    REQUIRE(cat.has_value());
    CHECK(*cat == ErrorCategory::io);
  }
  SECTION("wrong magic") {
    std::string bad = good;
    bad[0] = 'Q';
    write_bytes(path, bad);
    CHECK_THROWS_CATEGORY(ErrorCategory::io, load_checkpoint(path));
  }
  SECTION("unsupported version") {
    std::string bad = good;
    bad[5] = static_cast<char>(bad[5] + 1);  // little-endian version word
    write_bytes(path, bad);
    CHECK_THROWS_CATEGORY(ErrorCategory::io, load_checkpoint(path));
  }
  SECTION("truncation") {
    write_bytes(path, good.substr(0, good.size() - 9));
    CHECK_THROWS_CATEGORY(ErrorCategory::io, load_checkpoint(path));
  }
  SECTION("trailing garbage") {
    write_bytes(path, good + "xtra");
    CHECK_THROWS_CATEGORY(ErrorCategory::io, load_checkpoint(path));
  }
}
