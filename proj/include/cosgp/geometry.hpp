#pragma once

#include <cmath>
#include <vector>

namespace cosgp {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

using Polygon = std::vector<Point>;  // closed implicitly, vertices in order

/// Signed shoelace area; positive for counter-clockwise winding.
inline double signed_area(const Polygon& poly) {
  double acc = 0.0;
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % n];
    acc += a.x * b.y - b.x * a.y;
  }
  return 0.5 * acc;
}

inline double polygon_area(const Polygon& poly) { return std::abs(signed_area(poly)); }

namespace geometry_detail {

// Clip against a single half-plane keep(p) >= 0, with `intersect` giving the
// crossing point on the boundary.
template <class Keep, class Intersect>
Polygon clip_half_plane(const Polygon& poly, Keep keep, Intersect intersect) {
  Polygon out;
  const std::size_t n = poly.size();
  if (n == 0) return out;
  out.reserve(n + 4);
  for (std::size_t i = 0; i < n; ++i) {
    const Point& cur = poly[i];
    const Point& prev = poly[(i + n - 1) % n];
    const bool cur_in = keep(cur);
    const bool prev_in = keep(prev);
    if (cur_in) {
      if (!prev_in) out.push_back(intersect(prev, cur));
      out.push_back(cur);
    } else if (prev_in) {
      out.push_back(intersect(prev, cur));
    }
  }
  return out;
}

}  // namespace geometry_detail

/// Sutherland-Hodgman clip of a (convex or concave, non-self-intersecting)
/// polygon to the axis-aligned rectangle [x0,x1] x [y0,y1].
inline Polygon clip_to_rect(const Polygon& poly, double x0, double x1, double y0,
                            double y1) {
  using geometry_detail::clip_half_plane;
  auto lerp_x = [](double bound) {
    return [bound](const Point& a, const Point& b) {
      const double t = (bound - a.x) / (b.x - a.x);
      return Point{bound, a.y + t * (b.y - a.y)};
    };
  };
  auto lerp_y = [](double bound) {
    return [bound](const Point& a, const Point& b) {
      const double t = (bound - a.y) / (b.y - a.y);
      return Point{a.x + t * (b.x - a.x), bound};
    };
  };
  Polygon p = clip_half_plane(poly, [x0](const Point& q) { return q.x >= x0; }, lerp_x(x0));
  p = clip_half_plane(p, [x1](const Point& q) { return q.x <= x1; }, lerp_x(x1));
  p = clip_half_plane(p, [y0](const Point& q) { return q.y >= y0; }, lerp_y(y0));
  p = clip_half_plane(p, [y1](const Point& q) { return q.y <= y1; }, lerp_y(y1));
  return p;
}

/// |polygon ∩ [x0,x1]x[y0,y1]|.
inline double clipped_area(const Polygon& poly, double x0, double x1, double y0,
                           double y1) {
  return polygon_area(clip_to_rect(poly, x0, x1, y0, y1));
}

struct BoundingBox {
  double min_x = 0.0, max_x = 0.0, min_y = 0.0, max_y = 0.0;
};

inline BoundingBox bounding_box(const Polygon& poly) {
  BoundingBox bb{poly.front().x, poly.front().x, poly.front().y, poly.front().y};
  for (const Point& p : poly) {
    bb.min_x = std::min(bb.min_x, p.x);
    bb.max_x = std::max(bb.max_x, p.x);
    bb.min_y = std::min(bb.min_y, p.y);
    bb.max_y = std::max(bb.max_y, p.y);
  }
  return bb;
}

}  // namespace cosgp
