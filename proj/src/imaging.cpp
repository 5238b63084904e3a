#include "car/imaging.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <numeric>
#include <string>

#include "car/error.hpp"

namespace car {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

Mask color_mask(const Frame& frame, Color color, int tolerance) {
  Mask m(frame.width(), frame.height());
  const Rgb want = rgb_of(color);
  const auto& d = frame.data();
  for (std::size_t p = 0, i = 0; i < d.size(); ++p, i += 3) {
    if (tolerance == 0) {
      m.bits[p] = (d[i] == want.r && d[i + 1] == want.g && d[i + 2] == want.b) ? 1 : 0;
    } else {
      m.bits[p] = (std::abs(d[i] - want.r) <= tolerance && std::abs(d[i + 1] - want.g) <= tolerance &&
                   std::abs(d[i + 2] - want.b) <= tolerance)
                      ? 1
                      : 0;
    }
  }
  return m;
}

Mask color_mask(const Frame& frame, std::string_view color, int tolerance) {
  const auto c = color_from_name(color);
  if (!c) throw UnknownColor("unknown color '" + std::string(color) + "'");
  return color_mask(frame, *c, tolerance);
}

namespace {

// Clockwise on screen (y down), starting east.
constexpr std::array<PointI, 8> kRing = {{{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};

int ring_index(PointI d) {
  for (int k = 0; k < 8; ++k) {
    if (kRing[k] == d) return k;
  }
  return -1;
}

// Suzuki-Abe outer border following, restricted to pixels carrying `label`.
Contour trace_outer(const std::vector<int>& labels, int w, int h, int label, PointI start) {
  auto is_fg = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < w && y < h && labels[static_cast<std::size_t>(y) * w + x] == label;
  };
  Contour out;
  // Search clockwise from the west neighbour for the first foreground pixel.
  int k0 = ring_index({-1, 0});
  PointI first{};
  bool found = false;
  for (int s = 0; s < 8; ++s) {
    const PointI d = kRing[(k0 + s) % 8];
    if (is_fg(start.x + d.x, start.y + d.y)) {
      first = {start.x + d.x, start.y + d.y};
      found = true;
      break;
    }
  }
  if (!found) {
    out.vertices.push_back(start);
    return out;
  }
  PointI prev = first;
  PointI cur = start;
  while (true) {
    // Counterclockwise search around `cur`, starting just after `prev`.
    const int kp = ring_index({prev.x - cur.x, prev.y - cur.y});
    PointI next = cur;
    for (int s = 1; s <= 8; ++s) {
      const PointI d = kRing[((kp - s) % 8 + 8) % 8];
      if (is_fg(cur.x + d.x, cur.y + d.y)) {
        next = {cur.x + d.x, cur.y + d.y};
        break;
      }
    }
    out.vertices.push_back(cur);
    if (next == start && cur == first) break;
    prev = cur;
    cur = next;
  }
  return out;
}

double seg_distance(const PointI& p, const PointI& a, const PointI& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len = std::hypot(dx, dy);
  if (len == 0.0) return std::hypot(p.x - a.x, p.y - a.y);
  return std::abs(dy * (p.x - a.x) - dx * (p.y - a.y)) / len;
}

double sq_dist(const PointI& a, const PointI& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

bool on_segment(PointPx p, PointI a, PointI b) {
  const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
  if (std::abs(cross) > 1e-9) return false;
  return p.x >= std::min(a.x, b.x) - 1e-9 && p.x <= std::max(a.x, b.x) + 1e-9 && p.y >= std::min(a.y, b.y) - 1e-9 &&
         p.y <= std::max(a.y, b.y) + 1e-9;
}

}  // namespace

std::vector<Contour> extract_contours(const Mask& mask) {
  const int w = mask.width;
  const int h = mask.height;
  std::vector<int> labels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0);
  std::vector<Contour> contours;
  int next_label = 0;
  std::deque<PointI> queue;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!mask.bits[i] || labels[i] != 0) continue;
      const int label = ++next_label;
      labels[i] = label;
      queue.push_back({x, y});
      while (!queue.empty()) {
        const PointI p = queue.front();
        queue.pop_front();
        constexpr std::array<PointI, 4> n4 = {{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
        for (const PointI d : n4) {
          const int nx = p.x + d.x;
          const int ny = p.y + d.y;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
          if (mask.bits[j] && labels[j] == 0) {
            labels[j] = label;
            queue.push_back({nx, ny});
          }
        }
      }
      // (x, y) is the first pixel of this component in raster order.
      contours.push_back(trace_outer(labels, w, h, label, {x, y}));
    }
  }
  std::vector<double> areas(contours.size());
  for (std::size_t i = 0; i < contours.size(); ++i) areas[i] = area(contours[i]);
  std::vector<std::size_t> order(contours.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return areas[a] > areas[b]; });
  std::vector<Contour> sorted;
  sorted.reserve(contours.size());
  for (std::size_t i : order) sorted.push_back(std::move(contours[i]));
  return sorted;
}

Contour approx_polygon(const Contour& c, double eps) {
  const auto& v = c.vertices;
  const std::size_t n = v.size();
  if (eps <= 0.0 || n < 3) return c;

  // Split the closed curve at a far-apart pair; the pair does not depend on
  // eps, which keeps the vertex count monotone in eps.
  std::size_t a = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (sq_dist(v[i], v[0]) > sq_dist(v[a], v[0])) a = i;
  }
  std::size_t b = a;
  for (std::size_t i = 0; i < n; ++i) {
    if (sq_dist(v[i], v[a]) > sq_dist(v[b], v[a])) b = i;
  }
  if (a == b) return Contour{{v[0]}};
  const std::size_t i0 = std::min(a, b);
  const std::size_t i1 = std::max(a, b);

  std::vector<std::uint8_t> keep(n, 0);
  keep[i0] = keep[i1] = 1;
  // Ranges are over the unrolled index space [i0, i0 + n].
  std::vector<std::pair<std::size_t, std::size_t>> stack = {{i0, i1}, {i1, i0 + n}};
  while (!stack.empty()) {
    const auto [s, e] = stack.back();
    stack.pop_back();
    if (e <= s + 1) continue;
    const PointI& ps = v[s % n];
    const PointI& pe = v[e % n];
    double dmax = -1.0;
    std::size_t imax = s;
    for (std::size_t k = s + 1; k < e; ++k) {
      const double d = seg_distance(v[k % n], ps, pe);
      if (d > dmax) {
        dmax = d;
        imax = k;
      }
    }
    if (dmax > eps) {
      keep[imax % n] = 1;
      stack.push_back({imax, e});
      stack.push_back({s, imax});
    }
  }
  Contour out;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t idx = (i0 + k) % n;
    if (keep[idx]) out.vertices.push_back(v[idx]);
  }
  return out;
}

Contour convex_hull(const Contour& c) {
  std::vector<PointI> pts = c.vertices;
  std::sort(pts.begin(), pts.end(), [](const PointI& a, const PointI& b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) throw Degenerate("convex hull needs at least three distinct points");
  auto cross = [](const PointI& o, const PointI& a, const PointI& b) {
    return static_cast<long long>(a.x - o.x) * (b.y - o.y) - static_cast<long long>(a.y - o.y) * (b.x - o.x);
  };
  std::vector<PointI> hull(2 * pts.size());
  std::size_t k = 0;
  for (const PointI& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  if (hull.size() < 3) throw Degenerate("all points are collinear");
  return Contour{std::move(hull)};
}

double area(const Contour& c) {
  const auto& v = c.vertices;
  if (v.size() < 3) return 0.0;
  long long twice = 0;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    twice += static_cast<long long>(v[j].x) * v[i].y - static_cast<long long>(v[i].x) * v[j].y;
  }
  return std::abs(static_cast<double>(twice)) / 2.0;
}

PointPx centroid(const Contour& c) {
  const auto& v = c.vertices;
  double a2 = 0.0, cx = 0.0, cy = 0.0;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size() && v.size() >= 3; j = i++) {
    const double cr = static_cast<double>(v[j].x) * v[i].y - static_cast<double>(v[i].x) * v[j].y;
    a2 += cr;
    cx += (v[j].x + v[i].x) * cr;
    cy += (v[j].y + v[i].y) * cr;
  }
  if (std::abs(a2) < 1e-12) throw Degenerate("centroid of a zero-area contour");
  return {cx / (3.0 * a2), cy / (3.0 * a2)};
}

Rect bbox(const Contour& c) {
  if (c.vertices.empty()) throw Degenerate("bbox of an empty contour");
  int x0 = c.vertices[0].x, x1 = x0, y0 = c.vertices[0].y, y1 = y0;
  for (const PointI& p : c.vertices) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

bool contains_point(const Contour& outer, PointPx p) {
  const auto& v = outer.vertices;
  if (v.empty()) return false;
  if (v.size() == 1) return p.x == v[0].x && p.y == v[0].y;
  bool in = false;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    if (on_segment(p, v[j], v[i])) return true;
    if ((v[i].y > p.y) != (v[j].y > p.y)) {
      const double xi =
          v[j].x + (p.y - v[j].y) * static_cast<double>(v[i].x - v[j].x) / static_cast<double>(v[i].y - v[j].y);
      if (p.x < xi) in = !in;
    }
  }
  return in;
}

double euclidean(PointPx a, PointPx b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace car
