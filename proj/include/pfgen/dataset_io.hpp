#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfgen/errors.hpp"
#include "pfgen/rng.hpp"
#include "pfgen/synthetic.hpp"

namespace pfgen {

static_assert(std::endian::native == std::endian::little,
              "record files are little-endian");

inline constexpr int kDatasetVersion = 1;
inline constexpr const char* kDatasetFormat = "pfgen-dataset";

namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

inline nlohmann::json range_json(const QuantityRange& q) {
  return nlohmann::json::array({q.lo, q.hi});
}

inline QuantityRange range_from(const nlohmann::json& j) {
  require(j.is_array() && j.size() == 2, ErrorCategory::io, "manifest: bad range entry");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace detail

inline std::string record_filename(long id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "g%05ld.bin", id);
  return std::string("geometries/") + buf;
}

// Record layout, little-endian, no padding:
//   u32 n_points, u32 family, i32 param, u32 reserved,
//   f64 a, b, theta, cx, cy,
//   f32 coords (x, y per point), f32 fields (u, v, p per point, physical),
//   u8 surface flags.
inline void save_record(const GeometryRecord& rec, const std::filesystem::path& path) {
  require(rec.fields.space == FieldSpace::physical, ErrorCategory::internal,
          "save_record: fields must be physical");
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorCategory::io, "cannot open record file for writing: " + path.string());
  const PointCloud& c = rec.cloud;
  const GeometrySpec& g = c.geom;
  detail::write_pod(os, static_cast<std::uint32_t>(c.size()));
  detail::write_pod(os, static_cast<std::uint32_t>(g.family));
  detail::write_pod(os, static_cast<std::int32_t>(g.param));
  detail::write_pod(os, std::uint32_t{0});
  for (double v : {g.a, g.b, g.theta, g.center.x, g.center.y}) detail::write_pod(os, v);
  for (Index i = 0; i < c.size(); ++i) {
    detail::write_pod(os, static_cast<float>(c.xs[static_cast<std::size_t>(i)]));
    detail::write_pod(os, static_cast<float>(c.ys[static_cast<std::size_t>(i)]));
  }
  os.write(reinterpret_cast<const char*>(rec.fields.values.data()),
           static_cast<std::streamsize>(rec.fields.values.size() * sizeof(float)));
  os.write(reinterpret_cast<const char*>(c.surface.data()),
           static_cast<std::streamsize>(c.surface.size()));
  require(os.good(), ErrorCategory::io, "write failed: " + path.string());
}

inline GeometryRecord load_record(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorCategory::io, "cannot open record file: " + path.string());
  auto n = detail::read_pod<std::uint32_t>(is);
  auto fam = detail::read_pod<std::uint32_t>(is);
  auto param = detail::read_pod<std::int32_t>(is);
  detail::read_pod<std::uint32_t>(is);  // reserved
  require(is.good() && n >= 1 && fam <= 3, ErrorCategory::io,
          "corrupt record header: " + path.string());

  GeometryRecord rec;
  GeometrySpec& g = rec.cloud.geom;
  g.family = static_cast<ShapeFamily>(fam);
  g.param = param;
  g.a = detail::read_pod<double>(is);
  g.b = detail::read_pod<double>(is);
  g.theta = detail::read_pod<double>(is);
  g.center.x = detail::read_pod<double>(is);
  g.center.y = detail::read_pod<double>(is);

  Index np = static_cast<Index>(n);
  rec.cloud.xs.resize(n);
  rec.cloud.ys.resize(n);
  rec.cloud.surface.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    rec.cloud.xs[i] = detail::read_pod<float>(is);
    rec.cloud.ys[i] = detail::read_pod<float>(is);
  }
  rec.fields.space = FieldSpace::physical;
  rec.fields.values = Tensor({np, 3});
  is.read(reinterpret_cast<char*>(rec.fields.values.data()),
          static_cast<std::streamsize>(rec.fields.values.size() * sizeof(float)));
  is.read(reinterpret_cast<char*>(rec.cloud.surface.data()),
          static_cast<std::streamsize>(n));
  require(is.good(), ErrorCategory::io, "record truncated: " + path.string());
  is.peek();
  require(is.eof(), ErrorCategory::io, "record has trailing bytes: " + path.string());
  return rec;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "geometries", ec);
  require(!ec, ErrorCategory::io, "cannot create dataset directory: " + dir.string());

  nlohmann::json j;
  j["format"] = kDatasetFormat;
  j["version"] = kDatasetVersion;
  j["seed"] = ds.config.seed;
  j["rng"] = kRngAlgorithm;
  j["flow"] = {{"rho", ds.flow.rho},
               {"mu", ds.flow.mu},
               {"u_inf", ds.flow.u_inf},
               {"p0", ds.flow.p0}};
  nlohmann::json fam = nlohmann::json::array();
  for (ShapeFamily f : ds.config.families) fam.push_back(to_string(f));
  j["config"] = {{"n_geometries", ds.config.n_geometries},
                 {"n_points", ds.config.n_points},
                 {"n_surface", ds.config.n_surface},
                 {"fractions", ds.config.fractions},
                 {"window", {ds.config.window.x_min, ds.config.window.x_max,
                             ds.config.window.y_min, ds.config.window.y_max}},
                 {"a_range", {ds.config.a_min, ds.config.a_max}},
                 {"aspect_range", {ds.config.aspect_min, ds.config.aspect_max}},
                 {"families", fam}};
  j["norm_stats"] = {{"x", detail::range_json(ds.stats.x)},
                     {"y", detail::range_json(ds.stats.y)},
                     {"u", detail::range_json(ds.stats.u)},
                     {"v", detail::range_json(ds.stats.v)},
                     {"p", detail::range_json(ds.stats.p)}};
  j["splits"] = {{"train", ds.train_ids}, {"val", ds.val_ids}, {"test", ds.test_ids}};
  nlohmann::json recs = nlohmann::json::array();
  for (const GeometryRecord& rec : ds.records) {
    std::string name = record_filename(rec.id);
    save_record(rec, dir / name);
    recs.push_back(name);
  }
  j["records"] = recs;

  std::ofstream os(dir / "manifest.json", std::ios::binary);
  require(os.good(), ErrorCategory::io, "cannot write manifest: " + (dir / "manifest.json").string());
  os << j.dump(2) << "\n";
  require(os.good(), ErrorCategory::io, "manifest write failed");
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json", std::ios::binary);
  require(is.good(), ErrorCategory::io, "cannot open manifest: " + (dir / "manifest.json").string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::io, std::string("manifest parse error: ") + e.what());
  }

  try {
    require(j.at("format").get<std::string>() == kDatasetFormat, ErrorCategory::io,
            "manifest: unknown format tag");
    require(j.at("version").get<int>() == kDatasetVersion, ErrorCategory::io,
            "manifest: unsupported version");
    require(j.at("rng").get<std::string>() == kRngAlgorithm, ErrorCategory::io,
            "manifest: incompatible rng algorithm");

    Dataset ds;
    const auto& jf = j.at("flow");
    ds.flow.rho = jf.at("rho").get<double>();
    ds.flow.mu = jf.at("mu").get<double>();
    ds.flow.u_inf = jf.at("u_inf").get<double>();
    ds.flow.p0 = jf.at("p0").get<double>();

    const auto& jc = j.at("config");
    ds.config.seed = j.at("seed").get<std::uint64_t>();
    ds.config.n_geometries = jc.at("n_geometries").get<long>();
    ds.config.n_points = jc.at("n_points").get<Index>();
    ds.config.n_surface = jc.at("n_surface").get<Index>();
    auto frac = jc.at("fractions");
    require(frac.is_array() && frac.size() == 3, ErrorCategory::io, "manifest: bad fractions");
    for (std::size_t i = 0; i < 3; ++i) ds.config.fractions[i] = frac[i].get<double>();
    auto win = jc.at("window");
    require(win.is_array() && win.size() == 4, ErrorCategory::io, "manifest: bad window");
    ds.config.window = {win[0].get<double>(), win[1].get<double>(), win[2].get<double>(),
                        win[3].get<double>()};
    auto ar = jc.at("a_range");
    ds.config.a_min = ar.at(0).get<double>();
    ds.config.a_max = ar.at(1).get<double>();
    auto sr = jc.at("aspect_range");
    ds.config.aspect_min = sr.at(0).get<double>();
    ds.config.aspect_max = sr.at(1).get<double>();
    ds.config.families.clear();
    for (const auto& f : jc.at("families")) {
      try {
        ds.config.families.push_back(parse_family(f.get<std::string>()));
      } catch (const Error&) {
        fail(ErrorCategory::io, "manifest: unknown shape family");
      }
    }

    const auto& js = j.at("norm_stats");
    ds.stats.x = detail::range_from(js.at("x"));
    ds.stats.y = detail::range_from(js.at("y"));
    ds.stats.u = detail::range_from(js.at("u"));
    ds.stats.v = detail::range_from(js.at("v"));
    ds.stats.p = detail::range_from(js.at("p"));

    ds.train_ids = j.at("splits").at("train").get<std::vector<long>>();
    ds.val_ids = j.at("splits").at("val").get<std::vector<long>>();
    ds.test_ids = j.at("splits").at("test").get<std::vector<long>>();
    long total = static_cast<long>(ds.train_ids.size() + ds.val_ids.size() + ds.test_ids.size());
    require(total == ds.config.n_geometries, ErrorCategory::io,
            "manifest: split sizes do not cover the dataset");

    auto names = j.at("records").get<std::vector<std::string>>();
    require(static_cast<long>(names.size()) == ds.config.n_geometries, ErrorCategory::io,
            "manifest: record list size mismatch");
    ds.records.resize(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) {
      ds.records[i] = load_record(dir / names[i]);
      ds.records[i].id = static_cast<long>(i);
    }
    for (const QuantityRange* q :
         {&ds.stats.x, &ds.stats.y, &ds.stats.u, &ds.stats.v, &ds.stats.p})
      require(q->hi > q->lo, ErrorCategory::io, "manifest: degenerate normalization range");
    return ds;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::io, std::string("manifest: missing or malformed field: ") + e.what());
  }
}

}  // namespace pfgen
