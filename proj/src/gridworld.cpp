#include "car/gridworld.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <deque>
#include <random>

#include "car/error.hpp"

namespace car {

std::string_view to_string(Layout l) {
  switch (l) {
    case Layout::Empty: return "empty";
    case Layout::Unlock: return "unlock";
    case Layout::DoorKey: return "doorkey";
  }
  return "?";
}

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::N: return "N";
    case Direction::E: return "E";
    case Direction::S: return "S";
    case Direction::W: return "W";
  }
  return "?";
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::TurnLeft: return "turn_left";
    case Action::TurnRight: return "turn_right";
    case Action::Forward: return "forward";
    case Action::Pickup: return "pickup";
    case Action::Toggle: return "toggle";
  }
  return "?";
}

std::optional<Action> action_from_string(std::string_view s) {
  for (Action a : kActions) {
    if (to_string(a) == s) return a;
  }
  return std::nullopt;
}

Cell step_toward(Cell c, Direction d) {
  switch (d) {
    case Direction::N: return {c.x, c.y - 1};
    case Direction::E: return {c.x + 1, c.y};
    case Direction::S: return {c.x, c.y + 1};
    case Direction::W: return {c.x - 1, c.y};
  }
  return c;
}

namespace {

Direction turn_left(Direction d) { return static_cast<Direction>((static_cast<int>(d) + 3) % 4); }
Direction turn_right(Direction d) { return static_cast<Direction>((static_cast<int>(d) + 1) % 4); }

int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

}  // namespace

void GridSpec::validate() const {
  if (width < 5 || height < 5) throw InvalidSpec("grid width and height must be at least 5");
  if (tile_px < 8 || tile_px % 2 != 0) throw InvalidSpec("tile_px must be even and at least 8");
  if (max_steps < 0) throw InvalidSpec("max_steps must be non-negative");
}

std::string GridSpec::env_id() const {
  return std::string(to_string(layout)) + "-" + std::to_string(width) + "x" + std::to_string(height);
}

std::optional<GridSpec> parse_grid_env_id(std::string_view id) {
  const auto dash = id.find('-');
  if (dash == std::string_view::npos) return std::nullopt;
  const std::string_view name = id.substr(0, dash);
  const std::string_view dims = id.substr(dash + 1);
  const auto x = dims.find('x');
  if (x == std::string_view::npos) return std::nullopt;
  GridSpec spec;
  if (name == "empty") {
    spec.layout = Layout::Empty;
  } else if (name == "unlock") {
    spec.layout = Layout::Unlock;
  } else if (name == "doorkey") {
    spec.layout = Layout::DoorKey;
  } else {
    return std::nullopt;
  }
  const auto parse_int = [](std::string_view s, int& out) {
    const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return r.ec == std::errc() && r.ptr == s.data() + s.size();
  };
  if (!parse_int(dims.substr(0, x), spec.width) || !parse_int(dims.substr(x + 1), spec.height)) return std::nullopt;
  if (spec.width < 5 || spec.height < 5) return std::nullopt;
  return spec;
}

GridLayout make_layout(const GridSpec& spec) {
  spec.validate();
  GridLayout l;
  l.width = spec.width;
  l.height = spec.height;
  l.tiles.assign(static_cast<std::size_t>(spec.width) * spec.height, Tile::Floor);
  auto set = [&](Cell c, Tile t) { l.tiles[static_cast<std::size_t>(c.y) * l.width + c.x] = t; };
  for (int x = 0; x < spec.width; ++x) {
    set({x, 0}, Tile::Wall);
    set({x, spec.height - 1}, Tile::Wall);
  }
  for (int y = 0; y < spec.height; ++y) {
    set({0, y}, Tile::Wall);
    set({spec.width - 1, y}, Tile::Wall);
  }

  std::mt19937_64 rng(spec.seed);
  if (spec.layout == Layout::Empty) {
    l.goal = Cell{spec.width - 2, spec.height - 2};
    set(*l.goal, Tile::Goal);
    l.start_cells = {Cell{1, 1}};
    return l;
  }

  const int split = uniform(rng, 2, spec.width - 3);
  for (int y = 1; y < spec.height - 1; ++y) set({split, y}, Tile::Wall);
  l.door = Cell{split, uniform(rng, 1, spec.height - 2)};
  set(*l.door, Tile::Door);
  l.key = Cell{uniform(rng, 1, split - 1), uniform(rng, 1, spec.height - 2)};
  set(*l.key, Tile::Key);
  if (spec.layout == Layout::DoorKey) {
    l.goal = Cell{spec.width - 2, spec.height - 2};
    set(*l.goal, Tile::Goal);
  }
  // The agent starts in the left-room cells farthest from the key.
  int far = 0;
  for (int y = 1; y < spec.height - 1; ++y) {
    for (int x = 1; x < split; ++x) far = std::max(far, std::abs(x - l.key->x) + std::abs(y - l.key->y));
  }
  for (int y = 1; y < spec.height - 1; ++y) {
    for (int x = 1; x < split; ++x) {
      if (std::abs(x - l.key->x) + std::abs(y - l.key->y) == far) l.start_cells.push_back({x, y});
    }
  }
  return l;
}

const std::vector<Vec2>& key_silhouette() {
  // Ring head on the left, shaft to the right, one tooth hanging down.
  static const std::vector<Vec2> kKey = {{0.10, 0.10}, {0.48, 0.10}, {0.48, 0.42}, {0.90, 0.42},
                                         {0.90, 0.90}, {0.62, 0.90}, {0.62, 0.62}, {0.10, 0.62}};
  return kKey;
}

GridEnv::GridEnv(GridSpec spec) : spec_(spec), layout_(make_layout(spec)) { draw_background(); }

void GridEnv::draw_background() {
  const int t = spec_.tile_px;
  background_ = Frame(spec_.width * t, spec_.height * t, rgb_of(Color::Black));
  for (int y = 0; y < layout_.height; ++y) {
    for (int x = 0; x < layout_.width; ++x) {
      const Tile tile = layout_.at({x, y});
      if (tile == Tile::Wall) background_.fill_rect(x * t, y * t, t, t, rgb_of(Color::Grey));
      if (tile == Tile::Goal) background_.fill_rect(x * t, y * t, t, t, rgb_of(Color::Green));
    }
  }
}

GridState GridEnv::reset(std::uint64_t seed) const {
  GridState s;
  std::mt19937_64 rng(seed);
  if (spec_.layout == Layout::Empty) {
    s.agent = layout_.start_cells.front();
    s.facing = Direction::E;
    s.door_open = true;
    s.key_present = false;
    return s;
  }
  const int idx = uniform(rng, 0, static_cast<int>(layout_.start_cells.size()) - 1);
  s.agent = layout_.start_cells[static_cast<std::size_t>(idx)];
  s.facing = static_cast<Direction>(uniform(rng, 0, 3));
  s.key_present = true;
  s.door_open = false;
  return s;
}

bool GridEnv::passable(Cell c, const GridState& state) const {
  if (c.x < 0 || c.y < 0 || c.x >= layout_.width || c.y >= layout_.height) return false;
  switch (layout_.at(c)) {
    case Tile::Floor:
    case Tile::Goal: return true;
    case Tile::Wall: return false;
    case Tile::Door: return state.door_open;
    case Tile::Key: return !state.key_present;
  }
  return false;
}

bool GridEnv::is_goal_state(const GridState& state) const {
  if (spec_.layout == Layout::Unlock) return state.door_open;
  return layout_.goal && state.agent == *layout_.goal;
}

StepResult GridEnv::step(const GridState& state, Action action) const {
  StepResult r;
  r.state = state;
  GridState& s = r.state;
  const Cell front = step_toward(s.agent, s.facing);
  switch (action) {
    case Action::TurnLeft: s.facing = turn_left(s.facing); break;
    case Action::TurnRight: s.facing = turn_right(s.facing); break;
    case Action::Forward:
      if (passable(front, s)) {
        s.agent = front;
        if (layout_.goal && front == *layout_.goal) {
          r.reward = 1.0;
          r.done = true;
        }
      }
      break;
    case Action::Pickup:
      if (layout_.key && front == *layout_.key && s.key_present && !s.has_key) {
        s.key_present = false;
        s.has_key = true;
      }
      break;
    case Action::Toggle:
      if (layout_.door && front == *layout_.door) {
        if (!s.door_open && s.has_key) {
          s.door_open = true;
          if (spec_.layout == Layout::Unlock) {
            r.reward = 1.0;
            r.done = true;
          }
        } else if (s.door_open) {
          s.door_open = false;
        }
      }
      break;
  }
  ++s.steps;
  if (!r.done && s.steps >= spec_.step_limit()) {
    r.done = true;
    r.truncated = true;
  }
  return r;
}

Frame GridEnv::render(const GridState& state) const {
  Frame f = background_;
  const int t = spec_.tile_px;
  const int strip = std::max(2, t / 8);
  if (layout_.door) {
    const Cell d = *layout_.door;
    if (state.door_open) {
      f.fill_rect(d.x * t, d.y * t, strip, t, rgb_of(Color::Yellow));
    } else {
      f.fill_rect(d.x * t, d.y * t, t, t, rgb_of(Color::Yellow));
    }
  }
  if (layout_.key && state.key_present) {
    std::vector<Vec2> poly;
    for (const Vec2& v : key_silhouette()) poly.push_back({v.x * t, v.y * t});
    fill_polygon(f, layout_.key->x * t, layout_.key->y * t, poly, rgb_of(Color::Yellow));
  }
  // Agent triangle, inset by at least the open-door strip width so the two
  // never share pixels when the agent stands in the doorway.
  const double m = strip;
  const double hi = t - m;
  const double mid = t / 2.0;
  std::vector<Vec2> tri;
  switch (state.facing) {
    case Direction::E: tri = {{m, m}, {hi, mid}, {m, hi}}; break;
    case Direction::W: tri = {{hi, m}, {hi, hi}, {m, mid}}; break;
    case Direction::S: tri = {{m, m}, {hi, m}, {mid, hi}}; break;
    case Direction::N: tri = {{mid, m}, {hi, hi}, {m, hi}}; break;
  }
  fill_polygon(f, state.agent.x * t, state.agent.y * t, tri, rgb_of(Color::Red));
  return f;
}

namespace {

struct NavNode {
  Cell cell;
  Direction dir;
};

}  // namespace

Action GridEnv::expert(const GridState& state) const {
  enum class Phase { Key, Door, Goal };
  Phase phase;
  if (spec_.layout != Layout::Empty && state.key_present && !state.has_key) {
    phase = Phase::Key;
  } else if (layout_.door && !state.door_open) {
    phase = Phase::Door;
  } else if (layout_.goal) {
    phase = Phase::Goal;
  } else {
    throw Unsolvable("nothing left to solve");
  }
  if (phase == Phase::Door && !state.has_key) throw Unsolvable("door is locked and the key is gone");

  auto reached = [&](const NavNode& n) {
    switch (phase) {
      case Phase::Key: return step_toward(n.cell, n.dir) == *layout_.key;
      case Phase::Door: return step_toward(n.cell, n.dir) == *layout_.door;
      case Phase::Goal: return n.cell == *layout_.goal;
    }
    return false;
  };
  const NavNode start{state.agent, state.facing};
  if (reached(start)) {
    if (phase == Phase::Key) return Action::Pickup;
    if (phase == Phase::Door) return Action::Toggle;
  }

  // Breadth-first search over (cell, facing); remember each node's first action.
  const std::size_t n_nodes = static_cast<std::size_t>(layout_.width) * layout_.height * 4;
  auto id = [&](const NavNode& n) {
    return (static_cast<std::size_t>(n.cell.y) * layout_.width + n.cell.x) * 4 + static_cast<std::size_t>(n.dir);
  };
  std::vector<int> first(n_nodes, -1);
  std::vector<std::uint8_t> seen(n_nodes, 0);
  std::deque<NavNode> queue{start};
  seen[id(start)] = 1;
  constexpr std::array<Action, 3> kMoves = {Action::Forward, Action::TurnLeft, Action::TurnRight};
  while (!queue.empty()) {
    const NavNode cur = queue.front();
    queue.pop_front();
    for (Action a : kMoves) {
      NavNode nxt = cur;
      if (a == Action::Forward) {
        const Cell c = step_toward(cur.cell, cur.dir);
        if (!passable(c, state)) continue;
        // The goal ends the episode, so it is never a waypoint.
        if (phase != Phase::Goal && layout_.goal && c == *layout_.goal) continue;
        nxt.cell = c;
      } else {
        nxt.dir = a == Action::TurnLeft ? turn_left(cur.dir) : turn_right(cur.dir);
      }
      const std::size_t nid = id(nxt);
      if (seen[nid]) continue;
      seen[nid] = 1;
      first[nid] = cur.cell == start.cell && cur.dir == start.dir ? static_cast<int>(a) : first[id(cur)];
      if (reached(nxt)) return static_cast<Action>(first[nid]);
      queue.push_back(nxt);
    }
  }
  throw Unsolvable("no path to the next objective");
}

GridState grid_reset(const GridSpec& spec, std::uint64_t seed) { return GridEnv(spec).reset(seed); }

StepResult grid_step(const GridState& state, Action action, const GridSpec& spec) {
  return GridEnv(spec).step(state, action);
}

Frame grid_render(const GridState& state, const GridSpec& spec) { return GridEnv(spec).render(state); }

Action grid_expert(const GridState& state, const GridSpec& spec) { return GridEnv(spec).expert(state); }

}  // namespace car
