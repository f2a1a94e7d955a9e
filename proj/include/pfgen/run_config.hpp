#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfgen/errors.hpp"
#include "pfgen/pointnet.hpp"
#include "pfgen/synthetic.hpp"

namespace pfgen {

// Everything a run can configure, with desk-scale defaults. JSON mirrors
// the grouping: top-level {seed, model, data_dir, out_dir, checkpoint} plus
// sections dataset, flow, train, sampler, eval. Unknown keys abort before
// any work.
struct RunConfig {
  std::uint64_t seed = 0;
  ModelKind model = ModelKind::flow_matching;
  std::string data_dir;
  std::string out_dir;
  std::string checkpoint;

  DatasetConfig dataset;
  FlowConfig flow;

  long epochs = 1;
  Index batch_size = 16;
  double lr = 1e-3;

  Index d_emb = 32;
  long fm_steps = 1000;
  int ddpm_T = 1000;
  double ddpm_r = 0.008;

  long samples = 1;
  std::vector<double> drop_fractions{0.05, 0.10, 0.15};

  void validate() const {
    dataset.validate();
    require(epochs >= 1, ErrorCategory::config, "config: epochs must be >= 1");
    require(batch_size >= 1, ErrorCategory::config, "config: batch_size must be >= 1");
    require(lr > 0.0, ErrorCategory::config, "config: lr must be positive");
    require(d_emb >= 2 && d_emb % 2 == 0, ErrorCategory::config,
            "config: d_emb must be even and >= 2");
    require(fm_steps >= 1, ErrorCategory::config, "config: fm_steps must be >= 1");
    require(ddpm_T >= 1, ErrorCategory::config, "config: ddpm_T must be >= 1");
    require(ddpm_r > 0.0, ErrorCategory::config, "config: ddpm_r must be positive");
    require(samples >= 1, ErrorCategory::config, "config: samples must be >= 1");
    for (double f : drop_fractions)
      require(f >= 0.0 && f < 1.0, ErrorCategory::config,
              "config: drop fractions must be in [0, 1)");
    require(flow.rho > 0.0 && flow.u_inf > 0.0 && flow.mu > 0.0, ErrorCategory::config,
            "config: flow constants must be positive");
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const char* section) {
  require(j.is_object(), ErrorCategory::config,
          std::string("config: section '") + section + "' must be an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        ok = true;
        break;
      }
    require(ok, ErrorCategory::config,
            "config: unknown key '" + item.key() + "' in " + section);
  }
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCategory::config, std::string("config: bad value for '") + key + "'");
  }
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig cfg;
  detail::check_keys(j, {"seed", "model", "data_dir", "out_dir", "checkpoint", "dataset",
                         "flow", "train", "sampler", "eval"},
                     "config root");
  detail::read_opt(j, "seed", cfg.seed);
  if (j.contains("model")) {
    std::string m;
    detail::read_opt(j, "model", m);
    cfg.model = parse_model_kind(m);
  }
  detail::read_opt(j, "data_dir", cfg.data_dir);
  detail::read_opt(j, "out_dir", cfg.out_dir);
  detail::read_opt(j, "checkpoint", cfg.checkpoint);

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    detail::check_keys(d, {"n_geometries", "n_points", "n_surface", "fractions", "window",
                           "a_range", "aspect_range", "families"},
                       "dataset");
    detail::read_opt(d, "n_geometries", cfg.dataset.n_geometries);
    detail::read_opt(d, "n_points", cfg.dataset.n_points);
    detail::read_opt(d, "n_surface", cfg.dataset.n_surface);
    if (d.contains("fractions")) {
      std::vector<double> f;
      detail::read_opt(d, "fractions", f);
      require(f.size() == 3, ErrorCategory::config,
              "config: dataset.fractions needs exactly 3 entries");
      cfg.dataset.fractions = {f[0], f[1], f[2]};
    }
    if (d.contains("window")) {
      std::vector<double> wv;
      detail::read_opt(d, "window", wv);
      require(wv.size() == 4, ErrorCategory::config,
              "config: dataset.window needs [x_min, x_max, y_min, y_max]");
      cfg.dataset.window = {wv[0], wv[1], wv[2], wv[3]};
    }
    if (d.contains("a_range")) {
      std::vector<double> r;
      detail::read_opt(d, "a_range", r);
      require(r.size() == 2, ErrorCategory::config, "config: dataset.a_range needs 2 entries");
      cfg.dataset.a_min = r[0];
      cfg.dataset.a_max = r[1];
    }
    if (d.contains("aspect_range")) {
      std::vector<double> r;
      detail::read_opt(d, "aspect_range", r);
      require(r.size() == 2, ErrorCategory::config,
              "config: dataset.aspect_range needs 2 entries");
      cfg.dataset.aspect_min = r[0];
      cfg.dataset.aspect_max = r[1];
    }
    if (d.contains("families")) {
      std::vector<std::string> fam;
      detail::read_opt(d, "families", fam);
      cfg.dataset.families.clear();
      for (const std::string& f : fam) cfg.dataset.families.push_back(parse_family(f));
    }
  }

  if (j.contains("flow")) {
    const auto& f = j.at("flow");
    detail::check_keys(f, {"rho", "mu", "u_inf", "p0"}, "flow");
    detail::read_opt(f, "rho", cfg.flow.rho);
    detail::read_opt(f, "mu", cfg.flow.mu);
    detail::read_opt(f, "u_inf", cfg.flow.u_inf);
    detail::read_opt(f, "p0", cfg.flow.p0);
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::check_keys(t, {"epochs", "batch_size", "lr"}, "train");
    detail::read_opt(t, "epochs", cfg.epochs);
    detail::read_opt(t, "batch_size", cfg.batch_size);
    detail::read_opt(t, "lr", cfg.lr);
  }

  if (j.contains("sampler")) {
    const auto& s = j.at("sampler");
    detail::check_keys(s, {"d_emb", "fm_steps", "ddpm_T", "ddpm_r"}, "sampler");
    detail::read_opt(s, "d_emb", cfg.d_emb);
    detail::read_opt(s, "fm_steps", cfg.fm_steps);
    detail::read_opt(s, "ddpm_T", cfg.ddpm_T);
    detail::read_opt(s, "ddpm_r", cfg.ddpm_r);
  }

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    detail::check_keys(e, {"samples", "fractions"}, "eval");
    detail::read_opt(e, "samples", cfg.samples);
    detail::read_opt(e, "fractions", cfg.drop_fractions);
  }

  cfg.dataset.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorCategory::io, "cannot open config: " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::config, std::string("config parse error: ") + e.what());
  }
  return parse_run_config(j);
}

}  // namespace pfgen
