#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <utility>
#include <vector>

#include "pfgen/errors.hpp"
#include "pfgen/geometry.hpp"
#include "pfgen/parallel.hpp"
#include "pfgen/rng.hpp"
#include "pfgen/tensor.hpp"

namespace pfgen {

// Rectangular sampling window (meters).
struct Window {
  double x_min = 0.0, x_max = 38.0;
  double y_min = 0.0, y_max = 32.0;
};

// Point cloud for one geometry. Coordinates are kept in double so surface
// points sit on the boundary curve to analytic precision; float32 views are
// produced on demand. Boundary points occupy the first surface_count slots
// in counterclockwise parameter order.
struct PointCloud {
  GeometrySpec geom;
  std::vector<double> xs, ys;
  std::vector<std::uint8_t> surface;

  Index size() const { return static_cast<Index>(xs.size()); }

  Index surface_count() const {
    Index n = 0;
    for (std::uint8_t f : surface) n += f ? 1 : 0;
    return n;
  }

  Vec2 point(Index i) const {
    return {xs[static_cast<std::size_t>(i)], ys[static_cast<std::size_t>(i)]};
  }

  Tensor coords_tensor() const {
    Tensor t({size(), 2});
    for (Index i = 0; i < size(); ++i) {
      t(i, 0) = static_cast<float>(xs[static_cast<std::size_t>(i)]);
      t(i, 1) = static_cast<float>(ys[static_cast<std::size_t>(i)]);
    }
    return t;
  }
};

// Unit system of a field tensor; conversions are explicit and tagged.
enum class FieldSpace { physical, dimensionless, normalized };

// Per-point (u, v, p) columns in the tagged unit system.
struct FieldTriple {
  Tensor values;  // N x 3
  FieldSpace space = FieldSpace::physical;
};

struct PointFlow {
  double u = 0.0, v = 0.0, p = 0.0;
};

inline constexpr double kInsideTol = 1e-9;

// Ideal-flow field at one point: the potential-flow solution around a
// circle of radius R = sqrt(ab), evaluated after anisotropically scaling
// the body frame so the ellipse maps onto that circle. Mapped radii below R
// are clamped to the circle surface, which keeps the 1/r^4 terms bounded
// for points that land slightly inside the mapped disk (polygon edges).
inline PointFlow oracle_at(const GeometrySpec& g, const FlowConfig& flow, Vec2 p) {
  require(!strictly_inside(g, p, kInsideTol), ErrorCategory::domain,
          "oracle_fields: point inside the body");
  double R = g.scale_radius();
  Vec2 q = detail::to_body(g, p);
  double xh = q.x * R / g.a;
  double yh = q.y * R / g.b;
  double r2 = xh * xh + yh * yh;
  double R2 = R * R;
  if (r2 < R2) {
    if (r2 == 0.0) {
      xh = R;
      yh = 0.0;
    } else {
      double s = R / std::sqrt(r2);
      xh *= s;
      yh *= s;
    }
    r2 = R2;
  }
  double U = flow.u_inf;
  double r4 = r2 * r2;
  double ub = U * (1.0 + R2 * (yh * yh - xh * xh) / r4);
  double vb = -2.0 * U * R2 * xh * yh / r4;
  double speed2 = ub * ub + vb * vb;
  double pr = flow.p0 + 0.5 * flow.rho * (U * U - speed2);
  Vec2 vel = rotate({ub, vb}, g.theta);
  return {vel.x, vel.y, pr};
}

inline FieldTriple oracle_fields(const GeometrySpec& g, const FlowConfig& flow,
                                 const PointCloud& cloud) {
  FieldTriple f;
  f.space = FieldSpace::physical;
  f.values = Tensor({cloud.size(), 3});
  for (Index i = 0; i < cloud.size(); ++i) {
    PointFlow s = oracle_at(g, flow, cloud.point(i));
    f.values(i, 0) = static_cast<float>(s.u);
    f.values(i, 1) = static_cast<float>(s.v);
    f.values(i, 2) = static_cast<float>(s.p);
  }
  return f;
}

// Samples one cloud: n_surface equispaced-in-parameter boundary points
// first, then interior points drawn uniformly in the window, rejected when
// inside the body and thinned to acceptance probability min(1, R^2/r^2)
// from the body center, concentrating points near the body the way a graded
// CFD mesh does.
inline PointCloud sample_cloud(const GeometrySpec& g, Index n_points, Index n_surface,
                               const Window& w, Rng& rng) {
  g.validate();
  require(n_points >= 1, ErrorCategory::config, "sample_cloud: n_points must be >= 1");
  require(n_surface >= 0 && n_surface <= n_points, ErrorCategory::config,
          "sample_cloud: n_surface must be in [0, n_points]");
  require(w.x_max > w.x_min && w.y_max > w.y_min, ErrorCategory::config,
          "sample_cloud: empty window");

  PointCloud cloud;
  cloud.geom = g;
  cloud.xs.reserve(static_cast<std::size_t>(n_points));
  cloud.ys.reserve(static_cast<std::size_t>(n_points));
  cloud.surface.reserve(static_cast<std::size_t>(n_points));

  for (Index i = 0; i < n_surface; ++i) {
    double s = static_cast<double>(i) / static_cast<double>(n_surface);
    Vec2 p = boundary_point(g, s);
    require(p.x >= w.x_min && p.x <= w.x_max && p.y >= w.y_min && p.y <= w.y_max,
            ErrorCategory::config, "sample_cloud: body exceeds the window");
    cloud.xs.push_back(p.x);
    cloud.ys.push_back(p.y);
    cloud.surface.push_back(1);
  }

  double R2 = g.scale_radius() * g.scale_radius();
  Index want = n_points - n_surface;
  long attempts = 0;
  const long max_attempts = 100000 + 20000 * static_cast<long>(want);
  while (want > 0) {
    require(++attempts <= max_attempts, ErrorCategory::config,
            "sample_cloud: acceptance sampling stalled");
    Vec2 p{rng.uniform(w.x_min, w.x_max), rng.uniform(w.y_min, w.y_max)};
    if (inside_measure(g, p) > 0.0) continue;
    Vec2 d = p - g.center;
    double r2 = d.x * d.x + d.y * d.y;
    double acc = r2 <= R2 ? 1.0 : R2 / r2;
    if (rng.uniform01() >= acc) continue;
    cloud.xs.push_back(p.x);
    cloud.ys.push_back(p.y);
    cloud.surface.push_back(0);
    --want;
  }
  return cloud;
}

struct QuantityRange {
  double lo = 0.0, hi = 1.0;
  double span() const { return hi - lo; }
};

// Min/max of coordinates (meters) and dimensionless fields over the
// training split; fixed once and reused for validation/test/inference.
struct NormStats {
  QuantityRange x, y;      // coordinates
  QuantityRange u, v, p;   // dimensionless fields

  void validate() const {
    for (const QuantityRange* q : {&x, &y, &u, &v, &p})
      require(q->hi > q->lo, ErrorCategory::config,
              "normalization stats degenerate: max must exceed min");
  }
};

// u* = u/U, v* = v/U, p* = (p - p0) / (rho U^2).
inline FieldTriple to_dimensionless(const FieldTriple& f, const FlowConfig& flow) {
  require(f.space == FieldSpace::physical, ErrorCategory::config,
          "to_dimensionless: input must be physical");
  FieldTriple out;
  out.space = FieldSpace::dimensionless;
  out.values = Tensor(f.values.shape());
  double U = flow.u_inf;
  double q = flow.rho * U * U;
  for (Index i = 0; i < f.values.extent(0); ++i) {
    out.values(i, 0) = static_cast<float>(f.values(i, 0) / U);
    out.values(i, 1) = static_cast<float>(f.values(i, 1) / U);
    out.values(i, 2) = static_cast<float>((f.values(i, 2) - flow.p0) / q);
  }
  return out;
}

inline FieldTriple to_physical(const FieldTriple& f, const FlowConfig& flow) {
  require(f.space == FieldSpace::dimensionless, ErrorCategory::config,
          "to_physical: input must be dimensionless");
  FieldTriple out;
  out.space = FieldSpace::physical;
  out.values = Tensor(f.values.shape());
  double U = flow.u_inf;
  double q = flow.rho * U * U;
  for (Index i = 0; i < f.values.extent(0); ++i) {
    out.values(i, 0) = static_cast<float>(f.values(i, 0) * U);
    out.values(i, 1) = static_cast<float>(f.values(i, 1) * U);
    out.values(i, 2) = static_cast<float>(f.values(i, 2) * q + flow.p0);
  }
  return out;
}

// Min-max map of dimensionless fields to [0,1] per quantity.
inline FieldTriple normalize01(const FieldTriple& f, const NormStats& st) {
  require(f.space == FieldSpace::dimensionless, ErrorCategory::config,
          "normalize01: input must be dimensionless");
  st.validate();
  FieldTriple out;
  out.space = FieldSpace::normalized;
  out.values = Tensor(f.values.shape());
  const QuantityRange* q[3] = {&st.u, &st.v, &st.p};
  for (Index i = 0; i < f.values.extent(0); ++i)
    for (Index j = 0; j < 3; ++j)
      out.values(i, j) = static_cast<float>(
          (static_cast<double>(f.values(i, j)) - q[j]->lo) / q[j]->span());
  return out;
}

inline FieldTriple denormalize01(const FieldTriple& f, const NormStats& st) {
  require(f.space == FieldSpace::normalized, ErrorCategory::config,
          "denormalize01: input must be normalized");
  st.validate();
  FieldTriple out;
  out.space = FieldSpace::dimensionless;
  out.values = Tensor(f.values.shape());
  const QuantityRange* q[3] = {&st.u, &st.v, &st.p};
  for (Index i = 0; i < f.values.extent(0); ++i)
    for (Index j = 0; j < 3; ++j)
      out.values(i, j) = static_cast<float>(
          static_cast<double>(f.values(i, j)) * q[j]->span() + q[j]->lo);
  return out;
}

inline FieldTriple physical_to_normalized(const FieldTriple& f, const NormStats& st,
                                          const FlowConfig& flow) {
  return normalize01(to_dimensionless(f, flow), st);
}

inline FieldTriple normalized_to_physical(const FieldTriple& f, const NormStats& st,
                                          const FlowConfig& flow) {
  return to_physical(denormalize01(f, st), flow);
}

// Coordinates to [-1, 1] per axis.
inline Tensor normalize_coords(const PointCloud& cloud, const NormStats& st) {
  st.validate();
  Tensor t({cloud.size(), 2});
  for (Index i = 0; i < cloud.size(); ++i) {
    t(i, 0) = static_cast<float>(
        2.0 * (cloud.xs[static_cast<std::size_t>(i)] - st.x.lo) / st.x.span() - 1.0);
    t(i, 1) = static_cast<float>(
        2.0 * (cloud.ys[static_cast<std::size_t>(i)] - st.y.lo) / st.y.span() - 1.0);
  }
  return t;
}

struct GeometryRecord {
  long id = 0;
  PointCloud cloud;
  FieldTriple fields;  // physical units
};

// Dataset generation knobs; every default is desk scale.
struct DatasetConfig {
  long n_geometries = 200;
  Index n_points = 1024;
  Index n_surface = 128;
  std::array<double, 3> fractions{0.79, 0.11, 0.10};
  Window window{};
  double a_min = 0.7, a_max = 1.3;
  double aspect_min = 1.0, aspect_max = 2.0;
  std::vector<ShapeFamily> families{ShapeFamily::circle, ShapeFamily::ellipse,
                                    ShapeFamily::superellipse, ShapeFamily::polygon};
  std::uint64_t seed = 0;

  void validate() const {
    require(n_geometries >= 1, ErrorCategory::config, "dataset: n_geometries must be >= 1");
    require(n_points >= 1, ErrorCategory::config, "dataset: n_points must be >= 1");
    require(n_surface >= 0 && n_surface <= n_points, ErrorCategory::config,
            "dataset: n_surface must be in [0, n_points]");
    for (double f : fractions)
      require(f >= 0.0, ErrorCategory::config, "dataset: fractions must be non-negative");
    double sum = fractions[0] + fractions[1] + fractions[2];
    require(std::abs(sum - 1.0) < 1e-9, ErrorCategory::config,
            "dataset: fractions must sum to 1");
    require(a_max >= a_min && a_min > 0.0, ErrorCategory::config, "dataset: bad a range");
    require(aspect_max >= aspect_min && aspect_min >= 1.0, ErrorCategory::config,
            "dataset: bad aspect range");
    require(!families.empty(), ErrorCategory::config, "dataset: families must be non-empty");
  }
};

struct Dataset {
  DatasetConfig config;
  FlowConfig flow;
  std::vector<GeometryRecord> records;
  std::vector<long> train_ids, val_ids, test_ids;
  NormStats stats;
};

// Floor each share, then hand the remainder out one at a time in
// train, val, test order.
inline std::array<long, 3> split_counts(long n, const std::array<double, 3>& fractions) {
  std::array<long, 3> c{};
  long used = 0;
  for (int i = 0; i < 3; ++i) {
    c[static_cast<std::size_t>(i)] =
        static_cast<long>(std::floor(static_cast<double>(n) * fractions[static_cast<std::size_t>(i)]));
    used += c[static_cast<std::size_t>(i)];
  }
  long rem = n - used;
  for (int i = 0; rem > 0; i = (i + 1) % 3, --rem) ++c[static_cast<std::size_t>(i)];
  return c;
}

inline NormStats compute_norm_stats(const std::vector<GeometryRecord>& records,
                                    const std::vector<long>& train_ids,
                                    const FlowConfig& flow) {
  require(!train_ids.empty(), ErrorCategory::config, "norm stats: empty training split");
  NormStats st;
  bool first = true;
  double U = flow.u_inf;
  double q = flow.rho * U * U;
  for (long id : train_ids) {
    const GeometryRecord& rec = records[static_cast<std::size_t>(id)];
    for (Index i = 0; i < rec.cloud.size(); ++i) {
      double x = rec.cloud.xs[static_cast<std::size_t>(i)];
      double y = rec.cloud.ys[static_cast<std::size_t>(i)];
      double u = rec.fields.values(i, 0) / U;
      double v = rec.fields.values(i, 1) / U;
      double p = (rec.fields.values(i, 2) - flow.p0) / q;
      if (first) {
        st.x = {x, x};
        st.y = {y, y};
        st.u = {u, u};
        st.v = {v, v};
        st.p = {p, p};
        first = false;
        continue;
      }
      st.x.lo = std::min(st.x.lo, x);
      st.x.hi = std::max(st.x.hi, x);
      st.y.lo = std::min(st.y.lo, y);
      st.y.hi = std::max(st.y.hi, y);
      st.u.lo = std::min(st.u.lo, u);
      st.u.hi = std::max(st.u.hi, u);
      st.v.lo = std::min(st.v.lo, v);
      st.v.hi = std::max(st.v.hi, v);
      st.p.lo = std::min(st.p.lo, p);
      st.p.hi = std::max(st.p.hi, p);
    }
  }
  st.validate();
  return st;
}

namespace detail {

// Drawn per geometry from its private stream; draw order is part of the
// reproducibility contract: family, a, then family-specific knobs.
inline GeometrySpec draw_geometry(const DatasetConfig& cfg, Rng& rng) {
  GeometrySpec g;
  g.family = cfg.families[rng.below(cfg.families.size())];
  g.a = rng.uniform(cfg.a_min, cfg.a_max);
  switch (g.family) {
    case ShapeFamily::circle:
      g.b = g.a;
      g.theta = 0.0;
      g.param = 0;
      break;
    case ShapeFamily::ellipse:
      g.b = g.a * rng.uniform(cfg.aspect_min, cfg.aspect_max);
      g.theta = rng.uniform(0.0, 2.0 * kPi);
      g.param = 0;
      break;
    case ShapeFamily::superellipse:
      g.b = g.a * rng.uniform(cfg.aspect_min, cfg.aspect_max);
      g.theta = rng.uniform(0.0, 2.0 * kPi);
      g.param = 4 + 2 * static_cast<int>(rng.below(3));  // m in {4, 6, 8}
      break;
    case ShapeFamily::polygon:
      g.b = g.a;
      g.theta = rng.uniform(0.0, 2.0 * kPi);
      g.param = 3 + static_cast<int>(rng.below(4));  // k in {3, 4, 5, 6}
      break;
  }
  return g;
}

}  // namespace detail

// Deterministic per seed: geometry g draws from substream g+1 of the master
// seed, the split shuffle from substream 0, so generation parallelism cannot
// change the result.
inline Dataset build_dataset(const DatasetConfig& cfg, const FlowConfig& flow = {}) {
  cfg.validate();
  Dataset ds;
  ds.config = cfg;
  ds.flow = flow;
  ds.records.resize(static_cast<std::size_t>(cfg.n_geometries));

  parallel_for(cfg.n_geometries, [&](long g) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(g) + 1));
    GeometryRecord& rec = ds.records[static_cast<std::size_t>(g)];
    rec.id = g;
    GeometrySpec spec = detail::draw_geometry(cfg, rng);
    rec.cloud = sample_cloud(spec, cfg.n_points, cfg.n_surface, cfg.window, rng);
    rec.fields = oracle_fields(spec, flow, rec.cloud);
  });

  std::vector<long> order(static_cast<std::size_t>(cfg.n_geometries));
  std::iota(order.begin(), order.end(), 0L);
  Rng shuffle_rng(mix_seed(cfg.seed, 0));
  for (long i = cfg.n_geometries - 1; i >= 1; --i) {
    long j = static_cast<long>(shuffle_rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  auto counts = split_counts(cfg.n_geometries, cfg.fractions);
  ds.train_ids.assign(order.begin(), order.begin() + counts[0]);
  ds.val_ids.assign(order.begin() + counts[0], order.begin() + counts[0] + counts[1]);
  ds.test_ids.assign(order.begin() + counts[0] + counts[1], order.end());
  std::sort(ds.train_ids.begin(), ds.train_ids.end());
  std::sort(ds.val_ids.begin(), ds.val_ids.end());
  std::sort(ds.test_ids.begin(), ds.test_ids.end());

  ds.stats = compute_norm_stats(ds.records, ds.train_ids, flow);
  return ds;
}

// Keeps ceil((1-fraction)*N) uniformly chosen points, original relative
// order preserved; fraction 0 is the exact identity.
inline std::pair<PointCloud, FieldTriple> drop_points(const PointCloud& cloud,
                                                      const FieldTriple& fields,
                                                      double fraction, Rng& rng) {
  require(fraction >= 0.0 && fraction < 1.0, ErrorCategory::domain,
          "drop_points: fraction must be in [0, 1)");
  Index n = cloud.size();
  require(fields.values.extent(0) == n, ErrorCategory::dimension,
          "drop_points: fields row count mismatch");
  Index keep = static_cast<Index>(
      std::ceil((1.0 - fraction) * static_cast<double>(n)));
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  for (Index i = n - 1; i >= 1; --i) {
    Index j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  perm.resize(static_cast<std::size_t>(keep));
  std::sort(perm.begin(), perm.end());

  PointCloud out;
  out.geom = cloud.geom;
  out.xs.reserve(perm.size());
  out.ys.reserve(perm.size());
  out.surface.reserve(perm.size());
  FieldTriple fout;
  fout.space = fields.space;
  fout.values = Tensor({keep, fields.values.extent(1)});
  Index row = 0;
  for (Index src : perm) {
    out.xs.push_back(cloud.xs[static_cast<std::size_t>(src)]);
    out.ys.push_back(cloud.ys[static_cast<std::size_t>(src)]);
    out.surface.push_back(cloud.surface[static_cast<std::size_t>(src)]);
    for (Index j = 0; j < fields.values.extent(1); ++j)
      fout.values(row, j) = fields.values(src, j);
    ++row;
  }
  return {std::move(out), std::move(fout)};
}

namespace detail {

inline void fnv_update(std::uint64_t& h, const void* data, std::size_t len) {
  const unsigned char* b = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= b[i];
    h *= 1099511628211ULL;
  }
}

template <typename T>
void fnv_update_vec(std::uint64_t& h, const std::vector<T>& v) {
  fnv_update(h, v.data(), v.size() * sizeof(T));
}

}  // namespace detail

// Order-sensitive FNV-1a digest of everything that defines the dataset.
inline std::uint64_t dataset_fingerprint(const Dataset& ds) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const GeometryRecord& rec : ds.records) {
    const GeometrySpec& g = rec.cloud.geom;
    int fam = static_cast<int>(g.family);
    detail::fnv_update(h, &fam, sizeof(fam));
    detail::fnv_update(h, &g.param, sizeof(g.param));
    double geo[5] = {g.a, g.b, g.theta, g.center.x, g.center.y};
    detail::fnv_update(h, geo, sizeof(geo));
    detail::fnv_update_vec(h, rec.cloud.xs);
    detail::fnv_update_vec(h, rec.cloud.ys);
    detail::fnv_update_vec(h, rec.cloud.surface);
    detail::fnv_update(h, rec.fields.values.data(),
                       static_cast<std::size_t>(rec.fields.values.size()) * sizeof(float));
  }
  detail::fnv_update_vec(h, ds.train_ids);
  detail::fnv_update_vec(h, ds.val_ids);
  detail::fnv_update_vec(h, ds.test_ids);
  double st[10] = {ds.stats.x.lo, ds.stats.x.hi, ds.stats.y.lo, ds.stats.y.hi,
                   ds.stats.u.lo, ds.stats.u.hi, ds.stats.v.lo, ds.stats.v.hi,
                   ds.stats.p.lo, ds.stats.p.hi};
  detail::fnv_update(h, st, sizeof(st));
  return h;
}

}  // namespace pfgen
