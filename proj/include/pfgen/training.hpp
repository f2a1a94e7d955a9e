#pragma once

#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "pfgen/autodiff.hpp"
#include "pfgen/conditioning.hpp"
#include "pfgen/csv.hpp"
#include "pfgen/diffusion.hpp"
#include "pfgen/errors.hpp"
#include "pfgen/flow_matching.hpp"
#include "pfgen/pointnet.hpp"
#include "pfgen/rng.hpp"
#include "pfgen/synthetic.hpp"

namespace pfgen {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moments mirror the trainable tensors; math is double
// per element, storage float32 like the parameters.
struct OptState {
  AdamConfig config;
  long step = 0;  // completed updates
  std::vector<Tensor> m, v;
};

inline OptState make_opt_state(const ModelParams& params, const AdamConfig& cfg = {}) {
  OptState st;
  st.config = cfg;
  for (const Tensor* t : params.trainable()) {
    st.m.push_back(Tensor::zeros(t->shape()));
    st.v.push_back(Tensor::zeros(t->shape()));
  }
  return st;
}

// Bias-corrected Adam over the tape gradients of the trainable tensors.
// A zero gradient on a fresh state leaves the parameter bit-identical.
inline void adam_step(ModelParams& params, OptState& st, const Tape& tape,
                      const std::vector<int>& param_nodes) {
  std::vector<Tensor*> ps = params.trainable();
  require(ps.size() == param_nodes.size() && ps.size() == st.m.size(),
          ErrorCategory::internal, "adam_step: parameter list mismatch");
  double t = static_cast<double>(st.step + 1);
  double c1 = 1.0 - std::pow(st.config.beta1, t);
  double c2 = 1.0 - std::pow(st.config.beta2, t);
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const Tensor& g = tape.grad(param_nodes[k]);
    Tensor& p = *ps[k];
    require(g.same_shape(p), ErrorCategory::internal, "adam_step: gradient shape mismatch");
    for (Index i = 0; i < p.size(); ++i) {
      double gi = g[i];
      if (!std::isfinite(gi))
        fail(ErrorCategory::diverged,
             "training diverged: non-finite gradient at step " + std::to_string(st.step));
      double m = st.config.beta1 * st.m[k][i] + (1.0 - st.config.beta1) * gi;
      double v = st.config.beta2 * st.v[k][i] + (1.0 - st.config.beta2) * gi * gi;
      st.m[k][i] = static_cast<float>(m);
      st.v[k][i] = static_cast<float>(v);
      double update = st.config.lr * (m / c1) / (std::sqrt(v / c2) + st.config.eps);
      p[i] = static_cast<float>(p[i] - update);
    }
  }
  ++st.step;
}

// One training cloud with inputs already normalized.
struct PreparedCloud {
  long id = 0;
  Tensor coords;  // N x 2 in [-1, 1]
  Tensor fields;  // N x 3 in [0, 1]
};

inline std::vector<PreparedCloud> prepare_clouds(const Dataset& ds,
                                                 const std::vector<long>& ids) {
  std::vector<PreparedCloud> out;
  out.reserve(ids.size());
  for (long id : ids) {
    require(id >= 0 && id < static_cast<long>(ds.records.size()), ErrorCategory::config,
            "prepare_clouds: id out of range");
    const GeometryRecord& rec = ds.records[static_cast<std::size_t>(id)];
    PreparedCloud pc;
    pc.id = id;
    pc.coords = normalize_coords(rec.cloud, ds.stats);
    pc.fields = physical_to_normalized(rec.fields, ds.stats, ds.flow).values;
    out.push_back(std::move(pc));
  }
  return out;
}

struct Batch {
  Tensor input;   // B x N x C
  Tensor target;  // B x N x 3
};

// Assembles one batch. Per cloud, in batch order: flow matching draws tau
// then the noise columns; diffusion draws t then the noise columns; the
// baseline draws nothing. All clouds must share the point count.
inline Batch make_batch(ModelKind kind, const TimeEmbedding* emb,
                        const std::vector<const PreparedCloud*>& items,
                        const ddpm::NoiseSchedule* sched, Rng& rng) {
  require(!items.empty(), ErrorCategory::config, "make_batch: empty batch");
  Index b = static_cast<Index>(items.size());
  Index n = items[0]->coords.extent(0);
  Index n_cfd = items[0]->fields.extent(1);
  Index d = items[0]->coords.extent(1);
  for (const PreparedCloud* pc : items)
    require(pc->coords.extent(0) == n && pc->fields.extent(0) == n,
            ErrorCategory::dimension, "make_batch: mixed point counts");
  if (kind != ModelKind::baseline)
    require(emb != nullptr, ErrorCategory::internal, "make_batch: missing time embedding");

  Index c_in = kind == ModelKind::baseline
                   ? d
                   : d + static_cast<Index>(emb->dim()) + n_cfd;
  Batch batch;
  batch.input = Tensor({b, n, c_in});
  batch.target = Tensor({b, n, n_cfd});

  for (Index i = 0; i < b; ++i) {
    const PreparedCloud& pc = *items[static_cast<std::size_t>(i)];
    Tensor rows;   // N x c_in
    Tensor tgt;    // N x n_cfd
    switch (kind) {
      case ModelKind::baseline:
        rows = pc.coords;
        tgt = pc.fields;
        break;
      case ModelKind::flow_matching: {
        fm::FlowSample s = fm::make_training_sample(pc.fields, rng);
        rows = assemble_input(pc.coords, s.y_tau, s.tau, *emb);
        tgt = s.f_target;
        break;
      }
      case ModelKind::diffusion: {
        require(sched != nullptr, ErrorCategory::internal, "make_batch: missing schedule");
        int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(sched->T)));
        auto [y_t, eps] = ddpm::forward_noise(pc.fields, t, *sched, rng);
        rows = assemble_input(pc.coords, y_t, static_cast<double>(t), *emb);
        tgt = eps;
        break;
      }
    }
    std::copy(rows.data(), rows.data() + rows.size(), batch.input.data() + i * n * c_in);
    std::copy(tgt.data(), tgt.data() + tgt.size(), batch.target.data() + i * n * n_cfd);
  }
  return batch;
}

struct StepRecord {
  long step = 0;
  long epoch = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

struct StepLog {
  std::vector<StepRecord> records;
};

inline void write_step_log(const StepLog& log, const std::string& path) {
  CsvWriter csv(path);
  csv.raw_line("step,epoch,loss,wall_ms");
  for (const StepRecord& r : log.records)
    csv.row({g9(static_cast<double>(r.step)), g9(static_cast<double>(r.epoch)),
             g9(r.loss), g9(r.wall_ms)});
  csv.close();
}

// Forward, MSE, backward, Adam. Returns the loss; a non-finite loss stops
// training with a diverged error naming the step.
inline double train_step(ModelParams& params, OptState& opt, const Batch& batch) {
  Tape tape;
  TapeForward f = forward_train(tape, params, batch.input);
  int loss_id = tape.mse(f.output, batch.target);
  double loss = tape.value(loss_id)[0];
  if (!std::isfinite(loss))
    fail(ErrorCategory::diverged,
         "training diverged: non-finite loss at step " + std::to_string(opt.step));
  tape.backward(loss_id);
  adam_step(params, opt, tape, f.param_nodes);
  return loss;
}

struct TrainConfig {
  long epochs = 1;
  Index batch_size = 16;
  AdamConfig adam{};
  int ddpm_T = 1000;
  double ddpm_r = 0.008;
};

// Epoch loop: shuffled visit order each epoch (drawn from rng before any
// noise draws of that epoch), consecutive chunks of batch_size, final
// partial batch kept.
inline StepLog train_epochs(ModelParams& params, OptState& opt,
                            const std::vector<PreparedCloud>& train_clouds,
                            const TrainConfig& cfg, Rng& rng) {
  require(cfg.epochs >= 1, ErrorCategory::config, "train: epochs must be >= 1");
  require(cfg.batch_size >= 1, ErrorCategory::config, "train: batch_size must be >= 1");
  require(!train_clouds.empty(), ErrorCategory::config, "train: empty training split");

  std::optional<TimeEmbedding> emb;
  if (params.kind != ModelKind::baseline) emb.emplace(params.d_emb);
  const TimeEmbedding* embp = emb ? &*emb : nullptr;
  std::optional<ddpm::NoiseSchedule> sched;
  if (params.kind == ModelKind::diffusion) sched = ddpm::build_schedule(cfg.ddpm_T, cfg.ddpm_r);
  const ddpm::NoiseSchedule* schedp = sched ? &*sched : nullptr;

  StepLog log;
  std::vector<std::size_t> order(train_clouds.size());
  for (long e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size() - 1; i >= 1; --i) {
      std::size_t j = rng.below(static_cast<std::uint64_t>(i) + 1);
      std::swap(order[i], order[j]);
    }
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const PreparedCloud*> items;
      items.reserve(stop - start);
      for (std::size_t k = start; k < stop; ++k) items.push_back(&train_clouds[order[k]]);
      auto t0 = std::chrono::steady_clock::now();
      Batch batch = make_batch(params.kind, embp, items, schedp, rng);
      long step_index = opt.step;
      double loss = train_step(params, opt, batch);
      auto t1 = std::chrono::steady_clock::now();
      double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      log.records.push_back({step_index, e, loss, ms});
    }
  }
  return log;
}

// Repeats the same clouds every step; generative kinds still draw fresh
// time and noise per step, so the loss target moves while the conditioning
// stays fixed.
inline StepLog train_repeat_batch(ModelParams& params, OptState& opt,
                                  const std::vector<const PreparedCloud*>& items,
                                  long steps, const TrainConfig& cfg, Rng& rng) {
  require(steps >= 1, ErrorCategory::config, "train: steps must be >= 1");
  std::optional<TimeEmbedding> emb;
  if (params.kind != ModelKind::baseline) emb.emplace(params.d_emb);
  const TimeEmbedding* embp = emb ? &*emb : nullptr;
  std::optional<ddpm::NoiseSchedule> sched;
  if (params.kind == ModelKind::diffusion) sched = ddpm::build_schedule(cfg.ddpm_T, cfg.ddpm_r);
  const ddpm::NoiseSchedule* schedp = sched ? &*sched : nullptr;
  StepLog log;
  for (long s = 0; s < steps; ++s) {
    auto t0 = std::chrono::steady_clock::now();
    Batch batch = make_batch(params.kind, embp, items, schedp, rng);
    long step_index = opt.step;
    double loss = train_step(params, opt, batch);
    auto t1 = std::chrono::steady_clock::now();
    double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    log.records.push_back({step_index, 0, loss, ms});
  }
  return log;
}

}  // namespace pfgen
