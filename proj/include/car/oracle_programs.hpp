#pragma once

// Known-good reward programs for the built-in environments. They serve as
// the oracle backend's answers and as test fixtures.

#include <string>

namespace car::oracle {

// Gridworld programs for a given tile size. Shape tests approximate contours
// with eps = tile_px / 8.
struct GridPrograms {
  std::string agent_id;
  std::string key_id;
  std::string door_id;
  std::string goal_id;
  std::string key_check;   // key no longer visible
  std::string door_check;  // door drawn as a thin upright strip
  std::string goal_check;  // agent centroid inside the goal square
  // Flawed: fires whenever the agent is near the key's initial position.
  std::string proximity_key_check;
};

GridPrograms grid_programs(int tile_px);

// Block-push programs for the default 256 px render.
struct PushPrograms {
  std::string block_id;
  std::string target_id;
  std::string goal_check;          // block center within the target slack
  std::string incremental_reward;  // (d0 - d) / d0, clamped to [0, 1]
};

PushPrograms push_programs();

}  // namespace car::oracle
