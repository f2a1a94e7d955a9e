#include "test_support.hpp"

#include <pfgen/run_config.hpp>

#include <fstream>

using namespace pfgen;
using nlohmann::json;

TEST_CASE("defaults survive an empty config") {
  RunConfig cfg = parse_run_config(json::object());
  CHECK(cfg.seed == 0);
  CHECK(cfg.model == ModelKind::flow_matching);
  CHECK(cfg.epochs == 1);
  CHECK(cfg.batch_size == 16);
  CHECK(cfg.lr == 1e-3);
  CHECK(cfg.d_emb == 32);
  CHECK(cfg.fm_steps == 1000);
  CHECK(cfg.ddpm_T == 1000);
  CHECK(cfg.ddpm_r == 0.008);
  CHECK(cfg.samples == 1);
  REQUIRE(cfg.drop_fractions.size() == 3);
  CHECK(cfg.drop_fractions[0] == 0.05);
  CHECK(cfg.drop_fractions[1] == 0.10);
  CHECK(cfg.drop_fractions[2] == 0.15);
}

TEST_CASE("a full config lands every value") {
  json j = {
      {"seed", 99},
      {"model", "ddpm"},
      {"data_dir", "/tmp/data"},
      {"out_dir", "/tmp/out"},
      {"checkpoint", "/tmp/ck.bin"},
      {"dataset",
       {{"n_geometries", 12},
        {"n_points", 64},
        {"n_surface", 16},
        {"fractions", {0.5, 0.3, 0.2}},
        {"window", {-3.0, 5.0, -2.0, 2.0}},
        {"a_range", {0.8, 1.1}},
        {"aspect_range", {1.0, 1.5}},
        {"families", {"circle", "polygon"}}}},
      {"flow", {{"rho", 1.2}, {"mu", 0.02}, {"u_inf", 2.5}, {"p0", 10.0}}},
      {"train", {{"epochs", 3}, {"batch_size", 4}, {"lr", 0.01}}},
      {"sampler", {{"d_emb", 16}, {"fm_steps", 25}, {"ddpm_T", 50}, {"ddpm_r", 0.01}}},
      {"eval", {{"samples", 5}, {"fractions", {0.1, 0.2}}}},
  };
  RunConfig cfg = parse_run_config(j);
  CHECK(cfg.seed == 99);
  CHECK(cfg.model == ModelKind::diffusion);
  CHECK(cfg.data_dir == "/tmp/data");
  CHECK(cfg.checkpoint == "/tmp/ck.bin");
  CHECK(cfg.dataset.n_geometries == 12);
  CHECK(cfg.dataset.n_points == 64);
  CHECK(cfg.dataset.n_surface == 16);
  CHECK(cfg.dataset.fractions[0] == 0.5);
  CHECK(cfg.dataset.fractions[2] == 0.2);
  CHECK(cfg.dataset.window.x_min == -3.0);
  CHECK(cfg.dataset.window.y_max == 2.0);
  CHECK(cfg.dataset.a_min == 0.8);
  CHECK(cfg.dataset.aspect_max == 1.5);
  REQUIRE(cfg.dataset.families.size() == 2);
  CHECK(cfg.dataset.families[0] == ShapeFamily::circle);
  CHECK(cfg.dataset.families[1] == ShapeFamily::polygon);
  CHECK(cfg.flow.rho == 1.2);
  CHECK(cfg.flow.p0 == 10.0);
  CHECK(cfg.epochs == 3);
  CHECK(cfg.batch_size == 4);
  CHECK(cfg.lr == 0.01);
  CHECK(cfg.d_emb == 16);
  CHECK(cfg.fm_steps == 25);
  CHECK(cfg.ddpm_T == 50);
  CHECK(cfg.ddpm_r == 0.01);
  CHECK(cfg.samples == 5);
  REQUIRE(cfg.drop_fractions.size() == 2);
  CHECK(cfg.drop_fractions[1] == 0.2);
  // The master seed is forwarded to dataset generation.
  CHECK(cfg.dataset.seed == 99);
}

TEST_CASE("unknown keys abort before any work") {
  CHECK_THROWS_CATEGORY(ErrorCategory::config, parse_run_config(json{{"sede", 1}}));
  CHECK_THROWS_CATEGORY(ErrorCategory::config,
                        parse_run_config(json{{"dataset", {{"bogus", 1}}}}));
  CHECK_THROWS_CATEGORY(ErrorCategory::config,
                        parse_run_config(json{{"train", {{"learning_rate", 0.1}}}}));
  CHECK_THROWS_CATEGORY(ErrorCategory::config,
                        parse_run_config(json{{"eval", {{"drop", {0.1}}}}}));
}

TEST_CASE("bad values are config errors") {
  CHECK_THROWS_CATEGORY(ErrorCategory::config, parse_run_config(json{{"seed", "abc"}}));
  CHECK_THROWS_CATEGORY(ErrorCategory::config, parse_run_config(json{{"model", "vae"}}));
  CHECK_THROWS_CATEGORY(ErrorCategory::config,
                        parse_run_config(json{{"train", {{"epochs", 0}}}}));
  CHECK_THROWS_CATEGORY(ErrorCategory::config,
                        parse_run_config(json{{"train", {{"lr", -1.0}}}}));
  CHECK_THROWS_CATEGORY(ErrorCategory::config,
                        parse_run_config(json{{"sampler", {{"d_emb", 7}}}}));
  CHECK_THROWS_CATEGORY(ErrorCategory::config,
                        parse_run_config(json{{"eval", {{"fractions", {0.5, 1.0}}}}}));
  CHECK_THROWS_CATEGORY(ErrorCategory::config,
                        parse_run_config(json{{"dataset", {{"fractions", {0.5, 0.5}}}}}));
  CHECK_THROWS_CATEGORY(ErrorCategory::config,
                        parse_run_config(json{{"flow", {{"rho", 0.0}}}}));
  // Section must be an object, not a scalar.
  CHECK_THROWS_CATEGORY(ErrorCategory::config, parse_run_config(json{{"train", 5}}));
}

TEST_CASE("config files load from disk") {
  test::ScratchDir dir("runcfg");
  auto path = dir.path() / "run.json";
  {
    std::ofstream os(path);
    os << R"({"seed": 7, "model": "baseline", "train": {"epochs": 2}})";
  }
  RunConfig cfg = load_run_config(path);
  CHECK(cfg.seed == 7);
  CHECK(cfg.model == ModelKind::baseline);
  CHECK(cfg.epochs == 2);

  CHECK_THROWS_CATEGORY(ErrorCategory::io, load_run_config(dir.path() / "missing.json"));

  auto bad = dir.path() / "bad.json";
  {
    std::ofstream os(bad);
    os << "{ not json";
  }
  CHECK_THROWS_CATEGORY(ErrorCategory::config, load_run_config(bad));
}
