#pragma once

// Image-analysis primitives used by reward programs: palette masks, outer
// contours of 4-connected components, polygon reduction, hulls, moments and
// containment. Everything here is a pure function.

#include <cstdint>
#include <string_view>
#include <vector>

#include "car/error.hpp"
#include "car/frame.hpp"

namespace car {

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // row-major, 0 or 1

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0) {}

  bool get(int x, int y) const {
    return bits[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)] != 0;
  }
  void set(int x, int y, bool v = true) {
    bits[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)] = v ? 1 : 0;
  }
  std::size_t count() const;

  friend bool operator==(const Mask&, const Mask&) = default;
};

struct PointI {
  int x = 0;
  int y = 0;
  friend bool operator==(const PointI&, const PointI&) = default;
};

struct PointPx {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const PointPx&, const PointPx&) = default;
};

// Inclusive pixel extent, so a single pixel has width = height = 1.
struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
  friend bool operator==(const Rect&, const Rect&) = default;
};

// Closed polygon in pixel-index coordinates.
struct Contour {
  std::vector<PointI> vertices;
  friend bool operator==(const Contour&, const Contour&) = default;
};

// Exact palette match; `tolerance` is the max per-channel delta allowed for
// externally supplied images (0 for rendered frames).
Mask color_mask(const Frame& frame, Color color, int tolerance = 0);
// Throws UnknownColor for names outside the palette.
Mask color_mask(const Frame& frame, std::string_view color, int tolerance = 0);

// One outer boundary per 4-connected foreground component, ordered by
// descending area (ties keep raster order). Holes are ignored. Components of
// one or two pixels yield contours with fewer than three vertices.
std::vector<Contour> extract_contours(const Mask& mask);

// Closed Douglas-Peucker reduction. eps == 0 returns the input unchanged.
Contour approx_polygon(const Contour& c, double eps);

// Andrew's monotone chain. Throws Degenerate when all points are collinear.
Contour convex_hull(const Contour& c);

// Shoelace area (absolute value); 0 for fewer than three vertices.
double area(const Contour& c);
// Polygon centroid; throws Degenerate on zero-area input.
PointPx centroid(const Contour& c);
Rect bbox(const Contour& c);

// Even-odd test; points on the boundary count as inside.
bool contains_point(const Contour& outer, PointPx p);

double euclidean(PointPx a, PointPx b);

}  // namespace car
