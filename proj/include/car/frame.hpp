#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace car {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// The fixed rendering palette. Environments only ever emit these exact values.
enum class Color : std::uint8_t { Black, Grey, Red, Green, Yellow, Blue, Brown, Orange, Purple };

inline constexpr std::array<Color, 9> kPalette = {Color::Black,  Color::Grey,   Color::Red,
                                                  Color::Green,  Color::Yellow, Color::Blue,
                                                  Color::Brown,  Color::Orange, Color::Purple};

constexpr Rgb rgb_of(Color c) {
  switch (c) {
    case Color::Black: return {0, 0, 0};
    case Color::Grey: return {100, 100, 100};
    case Color::Red: return {255, 0, 0};
    case Color::Green: return {0, 255, 0};
    case Color::Yellow: return {255, 255, 0};
    case Color::Blue: return {0, 0, 255};
    case Color::Brown: return {139, 69, 19};
    case Color::Orange: return {255, 165, 0};
    case Color::Purple: return {160, 32, 240};
  }
  return {};
}

std::string_view color_name(Color c);
std::optional<Color> color_from_name(std::string_view name);

// Row-major 8-bit RGB raster.
class Frame {
 public:
  Frame() = default;
  Frame(int width, int height, Rgb fill = {});

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }

  Rgb at(int x, int y) const {
    const std::size_t i = index(x, y);
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  void set(int x, int y, Rgb c) {
    const std::size_t i = index(x, y);
    data_[i] = c.r;
    data_[i + 1] = c.g;
    data_[i + 2] = c.b;
  }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  void fill_rect(int x0, int y0, int w, int h, Rgb c);

  const std::vector<std::uint8_t>& data() const { return data_; }
  std::vector<std::uint8_t>& data() { return data_; }

  friend bool operator==(const Frame&, const Frame&) = default;

 private:
  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// Fills every pixel whose center lies inside (or on) the polygon, given in
// pixel units relative to (origin_x, origin_y).
struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};
void fill_polygon(Frame& frame, int origin_x, int origin_y, const std::vector<Vec2>& polygon, Rgb c);
void fill_disc(Frame& frame, double cx, double cy, double radius, Rgb c);

}  // namespace car
