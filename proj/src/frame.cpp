#include "car/frame.hpp"

#include <algorithm>
#include <cmath>

namespace car {

std::string_view color_name(Color c) {
  switch (c) {
    case Color::Black: return "black";
    case Color::Grey: return "grey";
    case Color::Red: return "red";
    case Color::Green: return "green";
    case Color::Yellow: return "yellow";
    case Color::Blue: return "blue";
    case Color::Brown: return "brown";
    case Color::Orange: return "orange";
    case Color::Purple: return "purple";
  }
  return "?";
}

std::optional<Color> color_from_name(std::string_view name) {
  for (Color c : kPalette) {
    if (color_name(c) == name) return c;
  }
  if (name == "gray") return Color::Grey;
  return std::nullopt;
}

Frame::Frame(int width, int height, Rgb fill) : width_(width), height_(height) {
  data_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

void Frame::fill_rect(int x0, int y0, int w, int h, Rgb c) {
  const int x1 = std::min(width_, x0 + w);
  const int y1 = std::min(height_, y0 + h);
  for (int y = std::max(0, y0); y < y1; ++y) {
    for (int x = std::max(0, x0); x < x1; ++x) set(x, y, c);
  }
}

namespace {

bool on_segment(Vec2 p, Vec2 a, Vec2 b) {
  const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
  if (std::abs(cross) > 1e-9) return false;
  return p.x >= std::min(a.x, b.x) - 1e-9 && p.x <= std::max(a.x, b.x) + 1e-9 &&
         p.y >= std::min(a.y, b.y) - 1e-9 && p.y <= std::max(a.y, b.y) + 1e-9;
}

bool inside(Vec2 p, const std::vector<Vec2>& poly) {
  bool in = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    if (on_segment(p, poly[j], poly[i])) return true;
    if ((poly[i].y > p.y) != (poly[j].y > p.y)) {
      const double xi = poly[j].x + (p.y - poly[j].y) * (poly[i].x - poly[j].x) / (poly[i].y - poly[j].y);
      if (p.x < xi) in = !in;
    }
  }
  return in;
}

}  // namespace

void fill_polygon(Frame& frame, int origin_x, int origin_y, const std::vector<Vec2>& polygon, Rgb c) {
  if (polygon.size() < 3) return;
  double minx = polygon[0].x, maxx = polygon[0].x, miny = polygon[0].y, maxy = polygon[0].y;
  for (const Vec2& v : polygon) {
    minx = std::min(minx, v.x);
    maxx = std::max(maxx, v.x);
    miny = std::min(miny, v.y);
    maxy = std::max(maxy, v.y);
  }
  for (int y = static_cast<int>(std::floor(miny)); y <= static_cast<int>(std::ceil(maxy)); ++y) {
    for (int x = static_cast<int>(std::floor(minx)); x <= static_cast<int>(std::ceil(maxx)); ++x) {
      if (!frame.contains(origin_x + x, origin_y + y)) continue;
      if (inside({x + 0.5, y + 0.5}, polygon)) frame.set(origin_x + x, origin_y + y, c);
    }
  }
}

void fill_disc(Frame& frame, double cx, double cy, double radius, Rgb c) {
  const int y0 = static_cast<int>(std::floor(cy - radius));
  const int y1 = static_cast<int>(std::ceil(cy + radius));
  const int x0 = static_cast<int>(std::floor(cx - radius));
  const int x1 = static_cast<int>(std::ceil(cx + radius));
  const double r2 = radius * radius;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      if (dx * dx + dy * dy <= r2 && frame.contains(x, y)) frame.set(x, y, c);
    }
  }
}

}  // namespace car
