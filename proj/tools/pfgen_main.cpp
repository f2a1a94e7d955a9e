// pfgen: single binary driving the full workflow. Subcommands: gen-data,
// train, sample, eval, robust. Exit codes: 0 ok, 2 config, 3 io,
// 4 diverged, 5 metric, 1 anything else.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pfgen/pfgen.hpp"

namespace {

using namespace pfgen;
namespace fs = std::filesystem;

int exit_code_for(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config:
      return 2;
    case ErrorCategory::io:
      return 3;
    case ErrorCategory::diverged:
      return 4;
    case ErrorCategory::metric:
      return 5;
    default:
      return 1;
  }
}

struct Cli {
  std::string config, out, data, ckpt, model, split = "test";
  std::uint64_t seed = 0;
  long samples = -1, steps = -1, index = -1;
  std::vector<double> fractions;
};

bool given(CLI::App* sub, const char* name) {
  const CLI::Option* opt = sub->get_option_no_throw(name);
  return opt != nullptr && opt->count() > 0;
}

RunConfig resolve(const Cli& c, CLI::App* sub) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (given(sub, "--seed")) {
    cfg.seed = c.seed;
    cfg.dataset.seed = c.seed;
  }
  if (given(sub, "--out")) cfg.out_dir = c.out;
  if (given(sub, "--data")) cfg.data_dir = c.data;
  if (given(sub, "--ckpt")) cfg.checkpoint = c.ckpt;
  if (given(sub, "--model")) cfg.model = parse_model_kind(c.model);
  if (given(sub, "--samples")) {
    require(c.samples >= 1, ErrorCategory::config, "--samples must be >= 1");
    cfg.samples = c.samples;
  }
  if (given(sub, "--steps")) {
    require(c.steps >= 1, ErrorCategory::config, "--steps must be >= 1");
    cfg.fm_steps = c.steps;
  }
  if (given(sub, "--fractions")) cfg.drop_fractions = c.fractions;
  cfg.validate();
  return cfg;
}

fs::path ensure_out_dir(const RunConfig& cfg, const char* cmd) {
  require(!cfg.out_dir.empty(), ErrorCategory::config,
          std::string(cmd) + ": --out (or out_dir in the config) is required");
  fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCategory::io, "cannot create output directory: " + dir.string());
  return dir;
}

Dataset load_data(const RunConfig& cfg, const char* cmd) {
  require(!cfg.data_dir.empty(), ErrorCategory::config,
          std::string(cmd) + ": --data (or data_dir in the config) is required");
  return load_dataset(cfg.data_dir);
}

const std::vector<long>& split_ids(const Dataset& ds, const std::string& split) {
  if (split == "train") return ds.train_ids;
  if (split == "val") return ds.val_ids;
  if (split == "test") return ds.test_ids;
  fail(ErrorCategory::config, "unknown split: " + split);
}

void write_run_json(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                    nlohmann::json options) {
  options["model"] = to_string(cfg.model);
  nlohmann::json j;
  j["command"] = command;
  j["seed"] = cfg.seed;
  j["rng"] = kRngAlgorithm;
  j["options"] = options;
  std::ofstream os(dir / "run.json", std::ios::binary);
  require(os.good(), ErrorCategory::io, "cannot write run.json in " + dir.string());
  os << j.dump(2) << "\n";
  require(os.good(), ErrorCategory::io, "run.json write failed");
}

std::string pad3(long v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03ld", v);
  return buf;
}

void run_gen_data(const RunConfig& cfg) {
  fs::path dir = ensure_out_dir(cfg, "gen-data");
  Dataset ds = build_dataset(cfg.dataset, cfg.flow);
  save_dataset(ds, dir);
  char fp[32];
  std::snprintf(fp, sizeof(fp), "%016llx",
                static_cast<unsigned long long>(dataset_fingerprint(ds)));
  nlohmann::json opts;
  opts["out_dir"] = cfg.out_dir;
  opts["n_geometries"] = cfg.dataset.n_geometries;
  opts["n_points"] = cfg.dataset.n_points;
  opts["n_surface"] = cfg.dataset.n_surface;
  opts["fingerprint"] = fp;
  write_run_json(dir, "gen-data", cfg, opts);
  std::cout << "dataset: " << cfg.dataset.n_geometries << " geometries ("
            << ds.train_ids.size() << " train / " << ds.val_ids.size() << " val / "
            << ds.test_ids.size() << " test) -> " << dir.string() << "\n"
            << "fingerprint: " << fp << "\n";
}

void run_train(const RunConfig& cfg) {
  Dataset ds = load_data(cfg, "train");
  fs::path dir = ensure_out_dir(cfg, "train");
  Index d_emb = cfg.model == ModelKind::baseline ? 0 : cfg.d_emb;
  ModelParams params = build_model(cfg.model, 2, d_emb, 3, mix_seed(cfg.seed, 1));
  std::vector<PreparedCloud> clouds = prepare_clouds(ds, ds.train_ids);

  OptState opt = make_opt_state(params, AdamConfig{.lr = cfg.lr});
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.adam.lr = cfg.lr;
  tc.ddpm_T = cfg.ddpm_T;
  tc.ddpm_r = cfg.ddpm_r;
  Rng rng(mix_seed(cfg.seed, 2));
  StepLog log = train_epochs(params, opt, clouds, tc, rng);

  write_step_log(log, (dir / "train_log.csv").string());
  save_checkpoint(params, ds.stats, ds.flow, dir / "checkpoint.bin");
  nlohmann::json opts;
  opts["data_dir"] = cfg.data_dir;
  opts["out_dir"] = cfg.out_dir;
  opts["epochs"] = cfg.epochs;
  opts["batch_size"] = cfg.batch_size;
  opts["lr"] = cfg.lr;
  opts["d_emb"] = d_emb;
  opts["ddpm_T"] = cfg.ddpm_T;
  opts["ddpm_r"] = cfg.ddpm_r;
  write_run_json(dir, "train", cfg, opts);
  double final_loss = log.records.empty() ? 0.0 : log.records.back().loss;
  std::cout << "trained " << to_string(cfg.model) << ": " << log.records.size()
            << " steps, " << count_parameters(params) << " parameters, final loss "
            << g9(final_loss) << "\n"
            << "checkpoint: " << (dir / "checkpoint.bin").string() << "\n";
}

void run_sample(const RunConfig& cfg, const Cli& c, CLI::App* sub) {
  require(!cfg.checkpoint.empty(), ErrorCategory::config,
          "sample: --ckpt (or checkpoint in the config) is required");
  LoadedModel m = load_checkpoint(cfg.checkpoint);
  Dataset ds = load_data(cfg, "sample");
  fs::path dir = ensure_out_dir(cfg, "sample");

  const std::vector<long>& ids = split_ids(ds, c.split);
  require(!ids.empty(), ErrorCategory::config, "sample: split '" + c.split + "' is empty");
  long id = given(sub, "--index") ? c.index : ids.front();
  require(id >= 0 && id < static_cast<long>(ds.records.size()), ErrorCategory::config,
          "sample: geometry index out of range");
  const GeometryRecord& rec = ds.records[static_cast<std::size_t>(id)];

  long samples = m.params.kind == ModelKind::baseline ? 1 : cfg.samples;
  FieldSampler sampler =
      make_sampler(m.params, m.stats, m.flow, cfg.fm_steps, cfg.ddpm_T, cfg.ddpm_r);
  for (long s = 0; s < samples; ++s) {
    Rng rng(mix_seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(id) + 1),
                     static_cast<std::uint64_t>(s) + 1));
    Tensor pred = sample_physical(sampler, rec.cloud, rng);
    CsvWriter csv((dir / ("sample_" + pad3(s) + ".csv")).string());
    csv.raw_line("x,y,u,v,p,abs_err_u,abs_err_v,abs_err_p");
    for (Index i = 0; i < rec.cloud.size(); ++i) {
      double eu = std::abs(static_cast<double>(pred(i, 0)) - rec.fields.values(i, 0));
      double ev = std::abs(static_cast<double>(pred(i, 1)) - rec.fields.values(i, 1));
      double ep = std::abs(static_cast<double>(pred(i, 2)) - rec.fields.values(i, 2));
      csv.row({g9(rec.cloud.xs[static_cast<std::size_t>(i)]),
               g9(rec.cloud.ys[static_cast<std::size_t>(i)]), g9(pred(i, 0)), g9(pred(i, 1)),
               g9(pred(i, 2)), g9(eu), g9(ev), g9(ep)});
    }
    csv.close();
    write_profile_csv(surface_profile(rec.cloud, pred),
                      (dir / ("profile_" + pad3(s) + ".csv")).string());
  }
  nlohmann::json opts;
  opts["checkpoint"] = cfg.checkpoint;
  opts["data_dir"] = cfg.data_dir;
  opts["out_dir"] = cfg.out_dir;
  opts["split"] = c.split;
  opts["geometry_id"] = id;
  opts["samples"] = samples;
  opts["fm_steps"] = cfg.fm_steps;
  opts["ddpm_T"] = cfg.ddpm_T;
  write_run_json(dir, "sample", cfg, opts);
  std::cout << "sampled geometry " << id << " (" << to_string(rec.cloud.geom.family) << "), "
            << samples << " draw(s) -> " << dir.string() << "\n";
}

void run_eval(const RunConfig& cfg, const Cli& c) {
  require(!cfg.checkpoint.empty(), ErrorCategory::config,
          "eval: --ckpt (or checkpoint in the config) is required");
  LoadedModel m = load_checkpoint(cfg.checkpoint);
  Dataset ds = load_data(cfg, "eval");
  fs::path dir = ensure_out_dir(cfg, "eval");
  const std::vector<long>& ids = split_ids(ds, c.split);
  require(!ids.empty(), ErrorCategory::config, "eval: split '" + c.split + "' is empty");

  FieldSampler sampler =
      make_sampler(m.params, m.stats, m.flow, cfg.fm_steps, cfg.ddpm_T, cfg.ddpm_r);
  EvalOutput out = evaluate_full(sampler, ds, ids, cfg.samples, cfg.seed);

  write_metrics_csv(out.metrics, (dir / "metrics.csv").string());
  write_forces_csv(out.forces, (dir / "forces.csv").string());
  export_histogram(out.metrics, (dir / "histogram.csv").string());
  nlohmann::json opts;
  opts["checkpoint"] = cfg.checkpoint;
  opts["data_dir"] = cfg.data_dir;
  opts["out_dir"] = cfg.out_dir;
  opts["split"] = c.split;
  opts["samples"] = out.metrics.samples;
  opts["fm_steps"] = cfg.fm_steps;
  opts["ddpm_T"] = cfg.ddpm_T;
  write_run_json(dir, "eval", cfg, opts);
  std::cout << "eval on " << ids.size() << " geometries, S=" << out.metrics.samples
            << ": mean rel L2 u=" << g9(out.metrics.mean.u.mean)
            << " v=" << g9(out.metrics.mean.v.mean) << " p=" << g9(out.metrics.mean.p.mean)
            << "\n"
            << "force errors are absolute, in force units per unit span\n"
            << "reports -> " << dir.string() << "\n";
}

void run_robust(const RunConfig& cfg, const Cli& c) {
  require(!cfg.checkpoint.empty(), ErrorCategory::config,
          "robust: --ckpt (or checkpoint in the config) is required");
  LoadedModel m = load_checkpoint(cfg.checkpoint);
  Dataset ds = load_data(cfg, "robust");
  fs::path dir = ensure_out_dir(cfg, "robust");
  const std::vector<long>& ids = split_ids(ds, c.split);
  require(!ids.empty(), ErrorCategory::config, "robust: split '" + c.split + "' is empty");

  FieldSampler sampler =
      make_sampler(m.params, m.stats, m.flow, cfg.fm_steps, cfg.ddpm_T, cfg.ddpm_r);
  std::vector<RobustnessRow> rows =
      robustness_eval(sampler, ds, ids, cfg.samples, cfg.seed, cfg.drop_fractions);
  write_robustness_csv(rows, (dir / "robustness.csv").string());
  nlohmann::json opts;
  opts["checkpoint"] = cfg.checkpoint;
  opts["data_dir"] = cfg.data_dir;
  opts["out_dir"] = cfg.out_dir;
  opts["split"] = c.split;
  opts["samples"] = cfg.samples;
  opts["fractions"] = cfg.drop_fractions;
  opts["fm_steps"] = cfg.fm_steps;
  opts["ddpm_T"] = cfg.ddpm_T;
  write_run_json(dir, "robust", cfg, opts);
  for (const RobustnessRow& r : rows)
    std::cout << "fraction " << g9(r.fraction) << " (" << r.kept_points
              << " pts): mean rel L2 u=" << g9(r.mean.u.mean) << " v=" << g9(r.mean.v.mean)
              << " p=" << g9(r.mean.p.mean) << "\n";
  std::cout << "report -> " << (dir / "robustness.csv").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"point-cloud flow-field models: synthetic data, training, sampling, evaluation"};
  app.require_subcommand(1);
  Cli c;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config, "JSON config path");
    sub->add_option("--seed", c.seed, "master seed (also recorded in outputs)");
    sub->add_option("--out", c.out, "output directory");
  };
  auto add_model_io = [&](CLI::App* sub) {
    sub->add_option("--data", c.data, "dataset directory (from gen-data)");
    sub->add_option("--ckpt", c.ckpt, "checkpoint path");
    sub->add_option("--samples", c.samples, "generations per geometry");
    sub->add_option("--steps", c.steps, "flow-matching sampler steps");
    sub->add_option("--split", c.split, "dataset split")
        ->check(CLI::IsMember({"train", "val", "test"}));
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen);

  CLI::App* train = app.add_subcommand("train", "train a model on a dataset");
  add_common(train);
  train->add_option("--data", c.data, "dataset directory (from gen-data)");
  train->add_option("--model", c.model, "model kind")
      ->check(CLI::IsMember({"fm", "ddpm", "baseline"}));

  CLI::App* sample = app.add_subcommand("sample", "draw field predictions for one geometry");
  add_common(sample);
  add_model_io(sample);
  sample->add_option("--index", c.index, "geometry id (default: first of --split)");

  CLI::App* eval = app.add_subcommand("eval", "field error and force reports on a split");
  add_common(eval);
  add_model_io(eval);

  CLI::App* robust = app.add_subcommand("robust", "evaluation under random point removal");
  add_common(robust);
  add_model_io(robust);
  robust->add_option("--fractions", c.fractions, "drop fractions, e.g. 0.05,0.1,0.15")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      run_gen_data(resolve(c, gen));
    } else if (train->parsed()) {
      run_train(resolve(c, train));
    } else if (sample->parsed()) {
      run_sample(resolve(c, sample), c, sample);
    } else if (eval->parsed()) {
      run_eval(resolve(c, eval), c);
    } else if (robust->parsed()) {
      run_robust(resolve(c, robust), c);
    }
    return 0;
  } catch (const pfgen::Error& e) {
    std::cerr << "error [" << pfgen::to_string(e.category()) << "]: " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error [internal]: " << e.what() << "\n";
    return 1;
  }
}
