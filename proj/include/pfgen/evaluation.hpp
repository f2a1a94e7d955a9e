#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "pfgen/baseline.hpp"
#include "pfgen/csv.hpp"
#include "pfgen/diffusion.hpp"
#include "pfgen/errors.hpp"
#include "pfgen/flow_matching.hpp"
#include "pfgen/parallel.hpp"
#include "pfgen/pointnet.hpp"
#include "pfgen/rng.hpp"
#include "pfgen/synthetic.hpp"

namespace pfgen {

// sqrt(sum (pred - truth)^2) / sqrt(sum truth^2), double accumulation.
inline double relative_l2(const std::vector<double>& pred, const std::vector<double>& truth) {
  require(pred.size() == truth.size(), ErrorCategory::dimension,
          "relative_l2: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - truth[i];
    num += d * d;
    den += truth[i] * truth[i];
  }
  require(den > 0.0, ErrorCategory::metric, "relative_l2: zero-norm reference field");
  return std::sqrt(num) / std::sqrt(den);
}

inline double relative_l2_column(const Tensor& pred, const Tensor& truth, Index col) {
  require(pred.same_shape(truth), ErrorCategory::dimension, "relative_l2: shape mismatch");
  double num = 0.0, den = 0.0;
  for (Index i = 0; i < pred.extent(0); ++i) {
    double d = static_cast<double>(pred(i, col)) - static_cast<double>(truth(i, col));
    num += d * d;
    den += static_cast<double>(truth(i, col)) * static_cast<double>(truth(i, col));
  }
  require(den > 0.0, ErrorCategory::metric, "relative_l2: zero-norm reference field");
  return std::sqrt(num) / std::sqrt(den);
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population (divide by n)
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  require(!xs.empty(), ErrorCategory::internal, "mean_std: empty sample set");
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return {mean, std::sqrt(var)};
}

struct FieldErrors {
  double u = 0.0, v = 0.0, p = 0.0;
};

struct GeometryErrors {
  long id = 0;
  std::vector<FieldErrors> per_sample;
  MeanStd u, v, p;  // over samples
};

struct AggregateRow {
  MeanStd u, v, p;
};

// Table rows: per-geometry mean/std over S samples, then mean/max/min over
// the per-geometry means. The mean row's std is the std over samples of the
// per-sample split average; max/min rows carry the extreme geometry's own
// sample std.
struct MetricsReport {
  long samples = 1;
  std::vector<GeometryErrors> geometries;  // ascending id
  AggregateRow mean, max, min;
};

// Pressure force per geometry, lab axes: drag along +x, lift along +y.
// Errors are absolute, in force units per unit span.
struct ForceGeometry {
  long id = 0;
  double drag_true = 0.0, lift_true = 0.0;
  MeanStd drag_pred, lift_pred;
  MeanStd err_drag, err_lift;
  std::vector<std::array<double, 2>> per_sample;  // predicted (drag, lift)
};

struct ForcePair {
  MeanStd drag, lift;
};

struct ForceReport {
  long samples = 1;
  std::vector<ForceGeometry> geometries;  // ascending id
  ForcePair mean, max, min;               // aggregates of the absolute errors
};

// Force on the body from surface pressure, F = -sum_i p_i * N_i where
// N_i = rot(-90deg) of the average of the two edges meeting at vertex i.
// Algebraically the trapezoidal closed-curve rule: for constant pressure the
// edge vectors telescope and the force vanishes to roundoff at any count.
inline Vec2 pressure_forces(const PointCloud& cloud, const std::vector<double>& p_surface) {
  std::vector<Vec2> pts;
  for (Index i = 0; i < cloud.size(); ++i)
    if (cloud.surface[static_cast<std::size_t>(i)]) pts.push_back(cloud.point(i));
  require(pts.size() >= 3, ErrorCategory::config,
          "pressure_forces: need at least 3 surface points");
  require(pts.size() == p_surface.size(), ErrorCategory::dimension,
          "pressure_forces: pressure count must match surface points");
  std::size_t n = pts.size();
  double fx = 0.0, fy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& prev = pts[(i + n - 1) % n];
    const Vec2& next = pts[(i + 1) % n];
    double ex = 0.5 * (next.x - prev.x);  // average of adjacent edges
    double ey = 0.5 * (next.y - prev.y);
    fx -= p_surface[i] * ey;
    fy -= p_surface[i] * (-ex);
  }
  return {fx, fy};
}

// Pressure column restricted to surface-flagged points, cloud order.
inline std::vector<double> surface_pressures(const PointCloud& cloud, const Tensor& fields) {
  require(fields.extent(0) == cloud.size(), ErrorCategory::dimension,
          "surface_pressures: row count mismatch");
  std::vector<double> p;
  for (Index i = 0; i < cloud.size(); ++i)
    if (cloud.surface[static_cast<std::size_t>(i)]) p.push_back(fields(i, 2));
  return p;
}

// Bundles a trained model with everything needed to draw physical-space
// predictions: normalization stats, flow constants, sampler knobs.
struct FieldSampler {
  const ModelParams* params = nullptr;
  NormStats stats;
  FlowConfig flow;
  long fm_steps = 1000;
  std::optional<TimeEmbedding> emb;
  std::optional<ddpm::NoiseSchedule> sched;
};

inline FieldSampler make_sampler(const ModelParams& params, const NormStats& stats,
                                 const FlowConfig& flow, long fm_steps = 1000,
                                 int ddpm_T = 1000, double ddpm_r = 0.008) {
  FieldSampler s;
  s.params = &params;
  s.stats = stats;
  s.flow = flow;
  s.fm_steps = fm_steps;
  if (params.kind != ModelKind::baseline) s.emb.emplace(params.d_emb);
  if (params.kind == ModelKind::diffusion) s.sched = ddpm::build_schedule(ddpm_T, ddpm_r);
  return s;
}

// One prediction for one cloud, returned in physical units (N x 3).
inline Tensor sample_physical(const FieldSampler& s, const PointCloud& cloud, Rng& rng) {
  require(s.params != nullptr, ErrorCategory::internal, "sampler not initialized");
  Tensor coords = normalize_coords(cloud, s.stats);
  Tensor normalized;
  switch (s.params->kind) {
    case ModelKind::baseline:
      normalized = baseline::predict(*s.params, coords);
      break;
    case ModelKind::flow_matching:
      normalized = fm::sample(*s.params, coords, *s.emb, s.fm_steps, rng);
      break;
    case ModelKind::diffusion:
      normalized = ddpm::sample(*s.params, coords, *s.emb, *s.sched, rng);
      break;
  }
  FieldTriple f;
  f.space = FieldSpace::normalized;
  f.values = std::move(normalized);
  return normalized_to_physical(f, s.stats, s.flow).values;
}

namespace detail {

inline std::vector<long> sorted_ids(std::vector<long> ids, const Dataset& ds) {
  require(!ids.empty(), ErrorCategory::config, "evaluation: empty geometry list");
  std::sort(ids.begin(), ids.end());
  require(std::adjacent_find(ids.begin(), ids.end()) == ids.end(), ErrorCategory::config,
          "evaluation: duplicate geometry id");
  for (long id : ids)
    require(id >= 0 && id < static_cast<long>(ds.records.size()), ErrorCategory::config,
            "evaluation: geometry id out of range");
  return ids;
}

// Per-sample RNG stream: gs = mix(mix(seed, id+1), s+1) drives the sampler,
// mix(gs, 0) the point dropping, so fraction 0 evaluates bit-identically to
// the no-drop path while never sharing draws with it.
struct EvalPass {
  std::vector<GeometryErrors> errors;
  std::vector<ForceGeometry> forces;  // empty unless requested
};

inline EvalPass run_eval_pass(const FieldSampler& sampler, const Dataset& ds,
                              const std::vector<long>& ids_in, long samples,
                              std::uint64_t seed, double drop_fraction, bool with_forces) {
  require(samples >= 1, ErrorCategory::config, "evaluation: samples must be >= 1");
  require(drop_fraction >= 0.0 && drop_fraction < 1.0, ErrorCategory::config,
          "evaluation: drop fraction must be in [0, 1)");
  std::vector<long> ids = sorted_ids(ids_in, ds);
  if (sampler.params->kind == ModelKind::baseline) samples = 1;

  EvalPass pass;
  pass.errors.resize(ids.size());
  if (with_forces) pass.forces.resize(ids.size());

  parallel_for(static_cast<long>(ids.size()), [&](long k) {
    long id = ids[static_cast<std::size_t>(k)];
    const GeometryRecord& rec = ds.records[static_cast<std::size_t>(id)];
    GeometryErrors ge;
    ge.id = id;
    ForceGeometry fg;
    fg.id = id;
    std::vector<double> truth_p;
    if (with_forces) {
      truth_p = surface_pressures(rec.cloud, rec.fields.values);
      Vec2 ft = pressure_forces(rec.cloud, truth_p);
      fg.drag_true = ft.x;
      fg.lift_true = ft.y;
    }
    for (long s = 0; s < samples; ++s) {
      std::uint64_t gs = mix_seed(mix_seed(seed, static_cast<std::uint64_t>(id) + 1),
                                  static_cast<std::uint64_t>(s) + 1);
      Rng sample_rng(gs);
      const PointCloud* cloud = &rec.cloud;
      const Tensor* truth = &rec.fields.values;
      PointCloud dropped;
      FieldTriple dropped_fields;
      if (drop_fraction > 0.0) {
        Rng drop_rng(mix_seed(gs, 0));
        std::tie(dropped, dropped_fields) =
            drop_points(rec.cloud, rec.fields, drop_fraction, drop_rng);
        cloud = &dropped;
        truth = &dropped_fields.values;
      }
      Tensor pred = sample_physical(sampler, *cloud, sample_rng);
      FieldErrors fe;
      fe.u = relative_l2_column(pred, *truth, 0);
      fe.v = relative_l2_column(pred, *truth, 1);
      fe.p = relative_l2_column(pred, *truth, 2);
      ge.per_sample.push_back(fe);
      if (with_forces) {
        Vec2 fp = pressure_forces(*cloud, surface_pressures(*cloud, pred));
        fg.per_sample.push_back({fp.x, fp.y});
      }
    }
    std::vector<double> us, vs, ps;
    for (const FieldErrors& fe : ge.per_sample) {
      us.push_back(fe.u);
      vs.push_back(fe.v);
      ps.push_back(fe.p);
    }
    ge.u = mean_std(us);
    ge.v = mean_std(vs);
    ge.p = mean_std(ps);
    pass.errors[static_cast<std::size_t>(k)] = std::move(ge);
    if (with_forces) {
      std::vector<double> ds_, ls_, eds, els;
      for (const auto& pr : fg.per_sample) {
        ds_.push_back(pr[0]);
        ls_.push_back(pr[1]);
        eds.push_back(std::abs(pr[0] - fg.drag_true));
        els.push_back(std::abs(pr[1] - fg.lift_true));
      }
      fg.drag_pred = mean_std(ds_);
      fg.lift_pred = mean_std(ls_);
      fg.err_drag = mean_std(eds);
      fg.err_lift = mean_std(els);
      pass.forces[static_cast<std::size_t>(k)] = std::move(fg);
    }
  });
  return pass;
}

// Aggregates one scalar quantity from its per-geometry sample matrix.
struct AggregateQuantity {
  MeanStd mean, max, min;
};

inline AggregateQuantity aggregate_quantity(const std::vector<std::vector<double>>& samples) {
  AggregateQuantity a;
  std::size_t n_geoms = samples.size();
  std::size_t n_samples = samples[0].size();
  std::vector<double> geom_means;
  for (const auto& row : samples) geom_means.push_back(mean_std(row).mean);

  double total = 0.0;
  for (double m : geom_means) total += m;
  a.mean.mean = total / static_cast<double>(n_geoms);
  std::vector<double> split_avg(n_samples, 0.0);
  for (const auto& row : samples)
    for (std::size_t s = 0; s < n_samples; ++s) split_avg[s] += row[s];
  for (double& x : split_avg) x /= static_cast<double>(n_geoms);
  a.mean.std = mean_std(split_avg).std;

  std::size_t gmax = 0, gmin = 0;
  for (std::size_t g = 1; g < n_geoms; ++g) {
    if (geom_means[g] > geom_means[gmax]) gmax = g;
    if (geom_means[g] < geom_means[gmin]) gmin = g;
  }
  a.max = mean_std(samples[gmax]);
  a.min = mean_std(samples[gmin]);
  return a;
}

}  // namespace detail

inline MetricsReport assemble_metrics(std::vector<GeometryErrors> rows, long samples) {
  MetricsReport rep;
  rep.samples = samples;
  rep.geometries = std::move(rows);
  std::vector<std::vector<double>> us, vs, ps;
  for (const GeometryErrors& ge : rep.geometries) {
    std::vector<double> u, v, p;
    for (const FieldErrors& fe : ge.per_sample) {
      u.push_back(fe.u);
      v.push_back(fe.v);
      p.push_back(fe.p);
    }
    us.push_back(std::move(u));
    vs.push_back(std::move(v));
    ps.push_back(std::move(p));
  }
  auto au = detail::aggregate_quantity(us);
  auto av = detail::aggregate_quantity(vs);
  auto ap = detail::aggregate_quantity(ps);
  rep.mean = {au.mean, av.mean, ap.mean};
  rep.max = {au.max, av.max, ap.max};
  rep.min = {au.min, av.min, ap.min};
  return rep;
}

// S generations per geometry (1 for the deterministic baseline), errors in
// physical units, geometry order irrelevant to the aggregates.
inline MetricsReport evaluate_model(const FieldSampler& sampler, const Dataset& ds,
                                    const std::vector<long>& ids, long samples,
                                    std::uint64_t seed) {
  auto pass = detail::run_eval_pass(sampler, ds, ids, samples, seed, 0.0, false);
  long used = sampler.params->kind == ModelKind::baseline ? 1 : samples;
  return assemble_metrics(std::move(pass.errors), used);
}

inline ForceReport assemble_forces(std::vector<ForceGeometry> rows, long samples) {
  ForceReport rep;
  rep.samples = samples;
  rep.geometries = std::move(rows);
  std::vector<std::vector<double>> eds, els;
  for (const ForceGeometry& fg : rep.geometries) {
    std::vector<double> ed, el;
    for (const auto& pr : fg.per_sample) {
      ed.push_back(std::abs(pr[0] - fg.drag_true));
      el.push_back(std::abs(pr[1] - fg.lift_true));
    }
    eds.push_back(std::move(ed));
    els.push_back(std::move(el));
  }
  auto ad = detail::aggregate_quantity(eds);
  auto al = detail::aggregate_quantity(els);
  rep.mean = {ad.mean, al.mean};
  rep.max = {ad.max, al.max};
  rep.min = {ad.min, al.min};
  return rep;
}

struct EvalOutput {
  MetricsReport metrics;
  ForceReport forces;
};

// One sampling pass feeding both reports; predictions match evaluate_model
// for the same (seed, ids, samples).
inline EvalOutput evaluate_full(const FieldSampler& sampler, const Dataset& ds,
                                const std::vector<long>& ids, long samples,
                                std::uint64_t seed) {
  auto pass = detail::run_eval_pass(sampler, ds, ids, samples, seed, 0.0, true);
  long used = sampler.params->kind == ModelKind::baseline ? 1 : samples;
  EvalOutput out;
  out.metrics = assemble_metrics(std::move(pass.errors), used);
  out.forces = assemble_forces(std::move(pass.forces), used);
  return out;
}

struct RobustnessRow {
  double fraction = 0.0;
  Index kept_points = 0;
  AggregateRow mean;
};

// Re-runs the evaluation pass on reduced clouds; fraction 0 reproduces
// evaluate_model bit for bit.
inline std::vector<RobustnessRow> robustness_eval(const FieldSampler& sampler,
                                                  const Dataset& ds,
                                                  const std::vector<long>& ids, long samples,
                                                  std::uint64_t seed,
                                                  const std::vector<double>& fractions) {
  require(!fractions.empty(), ErrorCategory::config, "robustness: empty fraction list");
  long used = sampler.params->kind == ModelKind::baseline ? 1 : samples;
  std::vector<RobustnessRow> rows;
  for (double f : fractions) {
    require(f >= 0.0 && f < 1.0, ErrorCategory::config,
            "robustness: fractions must be in [0, 1)");
    auto pass = detail::run_eval_pass(sampler, ds, ids, samples, seed, f, false);
    MetricsReport rep = assemble_metrics(std::move(pass.errors), used);
    RobustnessRow row;
    row.fraction = f;
    row.kept_points = static_cast<Index>(
        std::ceil((1.0 - f) * static_cast<double>(ds.config.n_points)));
    row.mean = rep.mean;
    rows.push_back(row);
  }
  return rows;
}

struct ProfileRow {
  double angle_deg = 0.0;
  double u = 0.0, v = 0.0, p = 0.0;
};

// Surface rows ordered by angle from the body center, counterclockwise from
// the +x axis, angles in [0, 360).
inline std::vector<ProfileRow> surface_profile(const PointCloud& cloud, const Tensor& fields) {
  require(fields.extent(0) == cloud.size(), ErrorCategory::dimension,
          "surface_profile: row count mismatch");
  std::vector<ProfileRow> rows;
  for (Index i = 0; i < cloud.size(); ++i) {
    if (!cloud.surface[static_cast<std::size_t>(i)]) continue;
    Vec2 d = cloud.point(i) - cloud.geom.center;
    double ang = std::atan2(d.y, d.x) * 180.0 / kPi;
    if (ang < 0.0) ang += 360.0;
    rows.push_back({ang, fields(i, 0), fields(i, 1), fields(i, 2)});
  }
  require(!rows.empty(), ErrorCategory::config, "surface_profile: no surface points");
  std::sort(rows.begin(), rows.end(),
            [](const ProfileRow& a, const ProfileRow& b) { return a.angle_deg < b.angle_deg; });
  for (std::size_t i = 1; i < rows.size(); ++i)
    require(rows[i].angle_deg > rows[i - 1].angle_deg, ErrorCategory::domain,
            "surface_profile: duplicate surface angle");
  return rows;
}

// One row per geometry: the per-geometry mean errors.
inline void export_histogram(const MetricsReport& rep, const std::string& path) {
  CsvWriter csv(path);
  csv.raw_line("geometry_id,err_u,err_v,err_p");
  for (const GeometryErrors& ge : rep.geometries)
    csv.row({g9(static_cast<double>(ge.id)), g9(ge.u.mean), g9(ge.v.mean), g9(ge.p.mean)});
  csv.close();
}

inline void write_profile_csv(const std::vector<ProfileRow>& rows, const std::string& path) {
  CsvWriter csv(path);
  csv.raw_line("angle_deg,u,v,p");
  for (const ProfileRow& r : rows) csv.row({g9(r.angle_deg), g9(r.u), g9(r.v), g9(r.p)});
  csv.close();
}

inline void write_metrics_csv(const MetricsReport& rep, const std::string& path) {
  CsvWriter csv(path);
  csv.raw_line("row,geometry_id,samples,err_u_mean,err_u_std,err_v_mean,err_v_std,err_p_mean,err_p_std");
  auto line = [&](const std::string& tag, const std::string& id, const AggregateRow& a) {
    csv.row({tag, id, std::to_string(rep.samples), g9(a.u.mean), g9(a.u.std), g9(a.v.mean),
             g9(a.v.std), g9(a.p.mean), g9(a.p.std)});
  };
  for (const GeometryErrors& ge : rep.geometries)
    line("geometry", std::to_string(ge.id), {ge.u, ge.v, ge.p});
  line("mean", "", rep.mean);
  line("max", "", rep.max);
  line("min", "", rep.min);
  csv.close();
}

inline void write_forces_csv(const ForceReport& rep, const std::string& path) {
  CsvWriter csv(path);
  csv.raw_line("# pressure force on the body; absolute errors in force units per unit span; drag along +x, lift along +y");
  csv.raw_line("row,geometry_id,samples,drag_true,lift_true,drag_pred_mean,drag_pred_std,"
               "lift_pred_mean,lift_pred_std,err_drag_mean,err_drag_std,err_lift_mean,err_lift_std");
  for (const ForceGeometry& fg : rep.geometries)
    csv.row({"geometry", std::to_string(fg.id), std::to_string(rep.samples), g9(fg.drag_true),
             g9(fg.lift_true), g9(fg.drag_pred.mean), g9(fg.drag_pred.std), g9(fg.lift_pred.mean),
             g9(fg.lift_pred.std), g9(fg.err_drag.mean), g9(fg.err_drag.std), g9(fg.err_lift.mean),
             g9(fg.err_lift.std)});
  auto agg = [&](const std::string& tag, const ForcePair& fp) {
    csv.row({tag, "", std::to_string(rep.samples), "", "", "", "", "", "", g9(fp.drag.mean),
             g9(fp.drag.std), g9(fp.lift.mean), g9(fp.lift.std)});
  };
  agg("mean", rep.mean);
  agg("max", rep.max);
  agg("min", rep.min);
  csv.close();
}

inline void write_robustness_csv(const std::vector<RobustnessRow>& rows, const std::string& path) {
  CsvWriter csv(path);
  csv.raw_line("fraction,kept_points,err_u_mean,err_u_std,err_v_mean,err_v_std,err_p_mean,err_p_std");
  for (const RobustnessRow& r : rows)
    csv.row({g9(r.fraction), std::to_string(r.kept_points), g9(r.mean.u.mean), g9(r.mean.u.std),
             g9(r.mean.v.mean), g9(r.mean.v.std), g9(r.mean.p.mean), g9(r.mean.p.std)});
  csv.close();
}

}  // namespace pfgen
