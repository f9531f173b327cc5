#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Core>

namespace texgen {

/// Screen-space barycentric weights of a covered pixel center.
using Barycentric = std::array<double, 3>;

namespace detail {

// Edge function evaluated from the lexicographically smaller endpoint so that
// the two triangles sharing an edge see exactly negated values. That makes
// the top-left tie-break watertight in floating point.
struct CanonicalEdge {
  double ox, oy, dx, dy;
  double sign;

  CanonicalEdge(const Eigen::Vector2d& p, const Eigen::Vector2d& q) {
    bool p_first = p.x() < q.x() || (p.x() == q.x() && p.y() < q.y());
    const Eigen::Vector2d& lo = p_first ? p : q;
    const Eigen::Vector2d& hi = p_first ? q : p;
    ox = lo.x();
    oy = lo.y();
    dx = hi.x() - lo.x();
    dy = hi.y() - lo.y();
    sign = p_first ? 1.0 : -1.0;
  }

  double operator()(double px, double py) const {
    return sign * (dx * (py - oy) - dy * (px - ox));
  }
};

// Top-left rule for y-down pixel coordinates, with the triangle oriented so
// that interior edge values are positive. d is the oriented edge direction.
inline bool is_top_left(double dx, double dy) {
  return dy < 0.0 || (dy == 0.0 && dx > 0.0);
}

}  // namespace detail

/// Rasterizes a triangle given in continuous pixel coordinates (pixel (x, y)
/// has its center at (x + 0.5, y + 0.5), y pointing down). Calls
/// fn(x, y, bary) for every pixel center inside the triangle, restricted to
/// columns [0, width) and rows [row_begin, row_end). One sample per pixel and
/// a top-left fill rule, so triangles sharing an edge never double-claim or
/// drop a pixel. Winding does not matter. Returns false for zero-area input.
template <typename Fn>
bool rasterize_triangle(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                        const Eigen::Vector2d& c, int width, int row_begin,
                        int row_end, Fn&& fn) {
  const std::array<Eigen::Vector2d, 3> v{a, b, c};
  // Edge i is opposite vertex i.
  const std::array<detail::CanonicalEdge, 3> edges{
      detail::CanonicalEdge(v[1], v[2]), detail::CanonicalEdge(v[2], v[0]),
      detail::CanonicalEdge(v[0], v[1])};
  const double area = edges[2](v[2].x(), v[2].y());
  if (!(std::abs(area) > 0.0) || !std::isfinite(area)) return false;
  const double orient = area > 0.0 ? 1.0 : -1.0;

  std::array<bool, 3> top_left{};
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector2d& from = v[(i + 1) % 3];
    const Eigen::Vector2d& to = v[(i + 2) % 3];
    top_left[i] = detail::is_top_left(orient * (to.x() - from.x()),
                                      orient * (to.y() - from.y()));
  }

  const double min_x = std::min({a.x(), b.x(), c.x()});
  const double max_x = std::max({a.x(), b.x(), c.x()});
  const double min_y = std::min({a.y(), b.y(), c.y()});
  const double max_y = std::max({a.y(), b.y(), c.y()});
  const int x0 = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)));
  const int x1 = std::min(width - 1, static_cast<int>(std::floor(max_x - 0.5)));
  const int y0 = std::max(row_begin, static_cast<int>(std::ceil(min_y - 0.5)));
  const int y1 = std::min(row_end - 1, static_cast<int>(std::floor(max_y - 0.5)));

  for (int y = y0; y <= y1; ++y) {
    const double py = y + 0.5;
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5;
      double e[3];
      bool inside = true;
      for (int i = 0; i < 3 && inside; ++i) {
        e[i] = orient * edges[i](px, py);
        inside = e[i] > 0.0 || (e[i] == 0.0 && top_left[i]);
      }
      if (!inside) continue;
      const double sum = e[0] + e[1] + e[2];
      fn(x, y, Barycentric{e[0] / sum, e[1] / sum, e[2] / sum});
    }
  }
  return true;
}

/// Barycentric interpolation shared by screen rendering and UV baking.
template <typename V>
V interpolate(const Barycentric& b, const V& a0, const V& a1, const V& a2) {
  return b[0] * a0 + b[1] * a1 + b[2] * a2;
}

}  // namespace texgen
