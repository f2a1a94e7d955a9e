#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "pfgen/errors.hpp"

namespace pfgen {

inline constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
  double x = 0.0, y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 v) { return std::sqrt(v.x * v.x + v.y * v.y); }
inline Vec2 rotate(Vec2 v, double theta) {
  double c = std::cos(theta), s = std::sin(theta);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// Free-stream and fluid constants of the synthetic flow.
struct FlowConfig {
  double rho = 1.00;
  double mu = 0.05;
  double u_inf = 1.00;
  double p0 = 0.0;
};

enum class ShapeFamily { circle, ellipse, superellipse, polygon };

inline const char* to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::circle: return "circle";
    case ShapeFamily::ellipse: return "ellipse";
    case ShapeFamily::superellipse: return "superellipse";
    case ShapeFamily::polygon: return "polygon";
  }
  return "?";
}

inline ShapeFamily parse_family(const std::string& s) {
  if (s == "circle") return ShapeFamily::circle;
  if (s == "ellipse") return ShapeFamily::ellipse;
  if (s == "superellipse") return ShapeFamily::superellipse;
  if (s == "polygon") return ShapeFamily::polygon;
  fail(ErrorCategory::config, "unknown shape family '" + s + "'");
}

// An immersed body: semi-axes a (along body x) and b (body y), rotated by
// theta (counterclockwise, radians) about its center. param is the
// superellipse exponent m or the polygon vertex count k; polygons are
// regular with circumradius a.
struct GeometrySpec {
  ShapeFamily family = ShapeFamily::circle;
  double a = 1.0;
  double b = 1.0;
  double theta = 0.0;
  int param = 0;
  Vec2 center{8.0, 16.0};

  double scale_radius() const { return std::sqrt(a * b); }
  double characteristic_length() const { return a > b ? a : b; }
  double reynolds(const FlowConfig& f) const {
    return f.rho * characteristic_length() * f.u_inf / f.mu;
  }

  void validate() const {
    require(a > 0.0 && b > 0.0, ErrorCategory::config, "geometry: axes must be positive");
    require(std::isfinite(theta), ErrorCategory::config, "geometry: theta must be finite");
    switch (family) {
      case ShapeFamily::circle:
        require(b == a, ErrorCategory::config, "geometry: circle requires b == a");
        break;
      case ShapeFamily::ellipse:
        break;
      case ShapeFamily::superellipse:
        require(param >= 2, ErrorCategory::config,
                "geometry: superellipse exponent must be >= 2");
        break;
      case ShapeFamily::polygon:
        require(param >= 3, ErrorCategory::config, "geometry: polygon needs >= 3 vertices");
        require(b == a, ErrorCategory::config, "geometry: polygon requires b == a");
        break;
    }
  }
};

namespace detail {

inline double shape_exponent(const GeometrySpec& g) {
  return g.family == ShapeFamily::superellipse ? static_cast<double>(g.param) : 2.0;
}

inline double signed_pow(double v, double e) {
  return v >= 0.0 ? std::pow(v, e) : -std::pow(-v, e);
}

inline Vec2 to_body(const GeometrySpec& g, Vec2 p) { return rotate(p - g.center, -g.theta); }

inline Vec2 polygon_vertex(const GeometrySpec& g, int j) {
  double phi = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(g.param);
  return {g.a * std::cos(phi), g.a * std::sin(phi)};
}

}  // namespace detail

// Boundary point at curve parameter s (wrapped to [0,1)), traversed
// counterclockwise. Smooth families use the superellipse parameterization
// (m = 2 for circle/ellipse); polygons walk edges at constant parameter
// speed, so equispaced s gives equispaced points along each edge.
inline Vec2 boundary_point(const GeometrySpec& g, double s) {
  s -= std::floor(s);
  Vec2 body;
  if (g.family == ShapeFamily::polygon) {
    int k = g.param;
    double u = s * static_cast<double>(k);
    int j = static_cast<int>(u);
    if (j >= k) j = k - 1;
    double frac = u - static_cast<double>(j);
    Vec2 v0 = detail::polygon_vertex(g, j);
    Vec2 v1 = detail::polygon_vertex(g, (j + 1) % k);
    body = v0 + frac * (v1 - v0);
  } else {
    double m = detail::shape_exponent(g);
    double phi = 2.0 * kPi * s;
    double c = std::cos(phi), sn = std::sin(phi);
    body = {g.a * detail::signed_pow(c, 2.0 / m), g.b * detail::signed_pow(sn, 2.0 / m)};
  }
  return rotate(body, g.theta) + g.center;
}

// Outward unit normal at curve parameter s.
inline Vec2 boundary_normal(const GeometrySpec& g, double s) {
  s -= std::floor(s);
  Vec2 body;
  if (g.family == ShapeFamily::polygon) {
    int k = g.param;
    double u = s * static_cast<double>(k);
    int j = static_cast<int>(u);
    if (j >= k) j = k - 1;
    Vec2 e = detail::polygon_vertex(g, (j + 1) % k) - detail::polygon_vertex(g, j);
    double len = norm(e);
    body = {e.y / len, -e.x / len};  // outward for counterclockwise traversal
  } else {
    double m = detail::shape_exponent(g);
    double phi = 2.0 * kPi * s;
    double px = detail::signed_pow(std::cos(phi), 2.0 / m);
    double py = detail::signed_pow(std::sin(phi), 2.0 / m);
    // Gradient of |x/a|^m + |y/b|^m at the boundary point, up to a positive
    // factor: component i is sign(x_i) * |x_i/axis|^(m-1) / axis.
    double gx = detail::signed_pow(px, m - 1.0) / g.a;
    double gy = detail::signed_pow(py, m - 1.0) / g.b;
    double len = std::sqrt(gx * gx + gy * gy);
    body = {gx / len, gy / len};
  }
  return rotate(body, g.theta);
}

// Signed interior measure: positive strictly inside, negative outside,
// approximately zero on the boundary. Smooth families return 1 - |x/a|^m -
// |y/b|^m (dimensionless); polygons return the minimum signed distance to an
// edge line (length units).
inline double inside_measure(const GeometrySpec& g, Vec2 p) {
  Vec2 q = detail::to_body(g, p);
  if (g.family == ShapeFamily::polygon) {
    int k = g.param;
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
      Vec2 v0 = detail::polygon_vertex(g, j);
      Vec2 e = detail::polygon_vertex(g, (j + 1) % k) - v0;
      double d = cross(e, q - v0) / norm(e);
      if (d < best) best = d;
    }
    return best;
  }
  double m = detail::shape_exponent(g);
  return 1.0 - std::pow(std::abs(q.x / g.a), m) - std::pow(std::abs(q.y / g.b), m);
}

inline bool strictly_inside(const GeometrySpec& g, Vec2 p, double tol = 1e-9) {
  return inside_measure(g, p) > tol;
}

}  // namespace pfgen
