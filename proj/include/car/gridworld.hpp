#pragma once

// Deterministic MiniGrid-style gridworlds (Empty, Unlock, DoorKey) rendered
// as full-grid RGB frames with fixed visual conventions: red triangle agent,
// yellow key silhouette and door, green goal square, grey walls, black floor.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "car/error.hpp"
#include "car/frame.hpp"

namespace car {

enum class Layout : std::uint8_t { Empty, Unlock, DoorKey };

enum class Direction : std::uint8_t { N, E, S, W };

enum class Action : std::uint8_t { TurnLeft, TurnRight, Forward, Pickup, Toggle };

inline constexpr std::array<Action, 5> kActions = {Action::TurnLeft, Action::TurnRight, Action::Forward,
                                                   Action::Pickup, Action::Toggle};

std::string_view to_string(Layout l);
std::string_view to_string(Direction d);
std::string_view to_string(Action a);
std::optional<Action> action_from_string(std::string_view s);

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

Cell step_toward(Cell c, Direction d);

struct GridSpec {
  int width = 8;   // cells, including the outer wall
  int height = 8;
  Layout layout = Layout::DoorKey;
  int tile_px = 16;
  std::uint64_t seed = 0;  // fixes walls, door, key and goal placement
  int max_steps = 0;       // 0 selects 4 * width * height

  int step_limit() const { return max_steps > 0 ? max_steps : 4 * width * height; }
  // Throws InvalidSpec.
  void validate() const;
  // Stable identifier such as "doorkey-8x8".
  std::string env_id() const;
  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

// Parses "doorkey-8x8", "unlock-6x6", "empty-5x5".
std::optional<GridSpec> parse_grid_env_id(std::string_view id);

struct GridState {
  Cell agent;
  Direction facing = Direction::E;
  bool has_key = false;
  bool door_open = false;
  bool key_present = false;
  int steps = 0;
  friend bool operator==(const GridState&, const GridState&) = default;
};

struct StepResult {
  GridState state;
  double reward = 0.0;
  bool done = false;
  bool truncated = false;
};

enum class Tile : std::uint8_t { Floor, Wall, Door, Key, Goal };

// Static placement derived from a GridSpec.
struct GridLayout {
  int width = 0;
  int height = 0;
  std::vector<Tile> tiles;
  std::optional<Cell> key;
  std::optional<Cell> door;
  std::optional<Cell> goal;
  // Cells the agent may start on.
  std::vector<Cell> start_cells;

  Tile at(Cell c) const { return tiles[static_cast<std::size_t>(c.y) * width + c.x]; }
};

GridLayout make_layout(const GridSpec& spec);

// Single-owner environment: the layout is generated once from the spec.
class GridEnv {
 public:
  explicit GridEnv(GridSpec spec);

  const GridSpec& spec() const { return spec_; }
  const GridLayout& layout() const { return layout_; }

  // Agent start cell and facing are drawn from `seed`; the layout is fixed by spec.seed.
  GridState reset(std::uint64_t seed) const;
  StepResult step(const GridState& state, Action action) const;
  Frame render(const GridState& state) const;
  // Scripted solver; throws Unsolvable when no plan exists from `state`.
  Action expert(const GridState& state) const;

  bool passable(Cell c, const GridState& state) const;
  bool is_goal_state(const GridState& state) const;

 private:
  void draw_background();

  GridSpec spec_;
  GridLayout layout_;
  Frame background_;
};

// Free-function forms of the GridEnv operations. Each builds the layout from
// the spec, so prefer GridEnv in loops.
GridState grid_reset(const GridSpec& spec, std::uint64_t seed);
StepResult grid_step(const GridState& state, Action action, const GridSpec& spec);
Frame grid_render(const GridState& state, const GridSpec& spec);
Action grid_expert(const GridState& state, const GridSpec& spec);

// Tile-relative outline of the key silhouette, in units of one tile.
const std::vector<Vec2>& key_silhouette();

}  // namespace car
