#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

// Mask moments, equal-angle boundary sampling, polygon reconstruction,
// rasterization and pixel-exact polygon IoU.
//
// Coordinates follow the image convention: x to the right, y down. Pixel
// (i, j) has its center at the integer point (i, j).

namespace polybox {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline double cross(const Vec2& u, const Vec2& v) { return u.x * v.y - u.y * v.x; }
inline Vec2 operator-(const Vec2& a, const Vec2& b) { return {a.x - b.x, a.y - b.y}; }

// Binary instance mask; nonzero = object. Row-major, values[y * width + x].
struct InstanceMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;

  InstanceMask() = default;
  InstanceMask(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0) {
    if (w < 1 || h < 1) throw std::invalid_argument("InstanceMask: dimensions must be >= 1");
  }

  std::uint8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  bool contains(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

// Centroid plus 24 radial distances at equally spaced angles, tracing a
// star-shaped polygon. The regression target and prediction format.
struct PolyBox {
  static constexpr int kNumPoints = 24;

  double cx = 0.0;
  double cy = 0.0;
  std::array<double, kNumPoints> radii{};
};

// cos/sin of k*15deg. Multiples of 90deg are exact so that axis-aligned
// vertices land exactly on the axes.
inline const std::array<Vec2, PolyBox::kNumPoints>& ray_directions() {
  static const std::array<Vec2, PolyBox::kNumPoints> dirs = [] {
    std::array<Vec2, PolyBox::kNumPoints> d{};
    for (int k = 0; k < PolyBox::kNumPoints; ++k) {
      switch (k) {
        case 0: d[k] = {1.0, 0.0}; break;
        case 6: d[k] = {0.0, 1.0}; break;
        case 12: d[k] = {-1.0, 0.0}; break;
        case 18: d[k] = {0.0, -1.0}; break;
        default: {
          const double theta = k * (M_PI / 12.0);
          d[k] = {std::cos(theta), std::sin(theta)};
        }
      }
    }
    return d;
  }();
  return dirs;
}

// Boolean pixel grid; true where the pixel center lies inside a polygon.
struct PixelCoverage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  PixelCoverage() = default;
  PixelCoverage(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  bool test(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y) { bits[static_cast<std::size_t>(y) * width + x] = 1; }

  long area() const {
    long n = 0;
    for (auto b : bits) n += b;
    return n;
  }
};

// Centroid from image moments over the filled mask region:
//   cx = M10 / M00, cy = M01 / M00 with V(i,j) as weights.
inline std::pair<double, double> centroid_from_mask(const InstanceMask& mask) {
  double m00 = 0.0, m10 = 0.0, m01 = 0.0;
  for (int j = 0; j < mask.height; ++j) {
    for (int i = 0; i < mask.width; ++i) {
      const double v = mask.at(i, j);
      m00 += v;
      m10 += i * v;
      m01 += j * v;
    }
  }
  if (m00 == 0.0) throw std::invalid_argument("centroid_from_mask: empty mask");
  return {m10 / m00, m01 / m00};
}

// Vertex k of the polygon: C + r_k * (cos(k*15deg), sin(k*15deg)).
inline std::array<Vec2, PolyBox::kNumPoints> polygon_vertices(const PolyBox& box) {
  const auto& dirs = ray_directions();
  std::array<Vec2, PolyBox::kNumPoints> pts{};
  for (int k = 0; k < PolyBox::kNumPoints; ++k) {
    pts[k] = {box.cx + box.radii[k] * dirs[k].x, box.cy + box.radii[k] * dirs[k].y};
  }
  return pts;
}

struct BoundarySampling {
  PolyBox box;
  std::uint32_t zero_radius_flags = 0;  // bit k set when ray k hit no object pixel
};

// Equal-angular boundary sampling: for each of n rays from the centroid,
// march to the grid border and keep the farthest hit. Two measures feed
// each radius and the larger wins:
//   - centers of nonzero pixels within 0.75 px of the ray line,
//   - the marching distance itself while the sample's nearest pixel is
//     nonzero (the ray still inside the pixel footprint).
// Lattice quantization makes either measure alone undershoot by over a
// pixel on oblique rays; combined the error stays under a pixel. The
// farthest hit wins when a ray exits and re-enters the object.
inline BoundarySampling sample_boundary(const InstanceMask& mask, double cx, double cy,
                                        int n = PolyBox::kNumPoints) {
  if (n != PolyBox::kNumPoints) throw std::invalid_argument("sample_boundary: n must be 24");
  const int ci = static_cast<int>(std::lround(cx));
  const int cj = static_cast<int>(std::lround(cy));
  if (!mask.contains(ci, cj) || mask.at(ci, cj) == 0)
    throw std::invalid_argument("sample_boundary: centroid outside object");

  const auto& dirs = ray_directions();
  BoundarySampling out;
  out.box.cx = cx;
  out.box.cy = cy;
  for (int k = 0; k < n; ++k) {
    double best = 0.0;
    bool hit = false;
    for (double t = 0.0;; t += 0.1) {
      const double x = cx + t * dirs[k].x;
      const double y = cy + t * dirs[k].y;
      const int rx = static_cast<int>(std::lround(x));
      const int ry = static_cast<int>(std::lround(y));
      if (!mask.contains(rx, ry)) break;
      if (mask.at(rx, ry) != 0) {
        best = std::max(best, t);
        hit = true;
      }
      for (int px : {static_cast<int>(std::floor(x)), static_cast<int>(std::ceil(x))}) {
        for (int py : {static_cast<int>(std::floor(y)), static_cast<int>(std::ceil(y))}) {
          if (!mask.contains(px, py) || mask.at(px, py) == 0) continue;
          const double dx = px - cx, dy = py - cy;
          const double along = dx * dirs[k].x + dy * dirs[k].y;
          const double perp = std::abs(dx * dirs[k].y - dy * dirs[k].x);
          if (along < 0.0 || perp > 0.75) continue;
          best = std::max(best, std::hypot(dx, dy));
          hit = true;
        }
      }
    }
    out.box.radii[k] = best;
    if (!hit || best == 0.0) out.zero_radius_flags |= (1u << k);
  }
  return out;
}

// Cross-product sign test: j is inside triangle (a, b, c) iff the three
// edge cross products share a sign (zero counts as inside). A fully
// degenerate triangle accepts only points on its segment.
inline bool point_in_triangle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& j) {
  const double c1 = cross(b - a, j - a);
  const double c2 = cross(c - b, j - b);
  const double c3 = cross(a - c, j - c);
  const double area2 = cross(b - a, c - a);
  if (area2 == 0.0) {
    // Collinear triangle: the segment is the hull of the three vertices.
    Vec2 p = a, q = a;
    for (const Vec2& v : {b, c}) {
      if (v.x < p.x || (v.x == p.x && v.y < p.y)) p = v;
      if (v.x > q.x || (v.x == q.x && v.y > q.y)) q = v;
    }
    const Vec2 pq = q - p;
    if (pq.x == 0.0 && pq.y == 0.0) return j.x == p.x && j.y == p.y;
    if (cross(pq, j - p) != 0.0) return false;
    const double t = pq.x * (j.x - p.x) + pq.y * (j.y - p.y);
    return t >= 0.0 && t <= pq.x * pq.x + pq.y * pq.y;
  }
  const bool has_pos = c1 > 0.0 || c2 > 0.0 || c3 > 0.0;
  const bool has_neg = c1 < 0.0 || c2 < 0.0 || c3 < 0.0;
  return !(has_pos && has_neg);
}

namespace detail {

// Marks pixels of one fan triangle into the coverage, scanning only the
// triangle's own bounding box clipped to the grid.
inline void rasterize_triangle(const Vec2& a, const Vec2& b, const Vec2& c, PixelCoverage& cov) {
  const double min_x = std::min({a.x, b.x, c.x});
  const double max_x = std::max({a.x, b.x, c.x});
  const double min_y = std::min({a.y, b.y, c.y});
  const double max_y = std::max({a.y, b.y, c.y});
  const int x0 = std::max(0, static_cast<int>(std::ceil(min_x)));
  const int x1 = std::min(cov.width - 1, static_cast<int>(std::floor(max_x)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(min_y)));
  const int y1 = std::min(cov.height - 1, static_cast<int>(std::floor(max_y)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (point_in_triangle(a, b, c, {double(x), double(y)})) cov.set(x, y);
    }
  }
}

}  // namespace detail

// Pixel coverage of the polygon: the union of its 24 fan triangles
// (P_k, P_{k+1}, C), pixel centers only, boundary counts as inside.
inline PixelCoverage rasterize(const PolyBox& box, int width, int height) {
  if (width < 1 || height < 1) throw std::invalid_argument("rasterize: grid must be >= 1x1");
  PixelCoverage cov(width, height);
  const auto pts = polygon_vertices(box);
  const Vec2 c{box.cx, box.cy};
  for (int k = 0; k < PolyBox::kNumPoints; ++k) {
    detail::rasterize_triangle(pts[k], pts[(k + 1) % PolyBox::kNumPoints], c, cov);
  }
  return cov;
}

inline double coverage_iou(const PixelCoverage& a, const PixelCoverage& b) {
  long inter = 0, uni = 0;
  const std::size_t n = a.bits.size();
  for (std::size_t i = 0; i < n; ++i) {
    inter += a.bits[i] & b.bits[i];
    uni += a.bits[i] | b.bits[i];
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Pixel-level polygon IoU on a shared grid. Works for convex and concave
// star-shaped polygons alike.
inline double poly_iou(const PolyBox& a, const PolyBox& b, int width, int height) {
  return coverage_iou(rasterize(a, width, height), rasterize(b, width, height));
}

// Intersection/union counting against a precomputed coverage, rasterizing
// only b. Used by the harness where one side is fixed across many calls.
inline double poly_iou_cached(const PixelCoverage& a_cov, long a_area, const PolyBox& b) {
  const PixelCoverage b_cov = rasterize(b, a_cov.width, a_cov.height);
  long b_area = 0, inter = 0;
  const std::size_t n = b_cov.bits.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (b_cov.bits[i]) {
      ++b_area;
      inter += a_cov.bits[i];
    }
  }
  const long uni = a_area + b_area - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline InstanceMask mask_from_coverage(const PixelCoverage& cov) {
  InstanceMask m(cov.width, cov.height);
  for (std::size_t i = 0; i < cov.bits.size(); ++i) m.values[i] = cov.bits[i] ? 255 : 0;
  return m;
}

}  // namespace polybox
