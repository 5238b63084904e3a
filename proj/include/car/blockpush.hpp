#pragma once

// A 2D block-pushing task in the unit square: a blue disc agent pushes a
// green square block into a yellow target square. Positions live on the
// render lattice (pixel centers), so rendered centroids equal the simulator
// positions exactly.

#include <cstdint>

#include "car/error.hpp"
#include "car/frame.hpp"

namespace car {

struct Vec2d {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2d&, const Vec2d&) = default;
};

struct PushConfig {
  int render_px = 256;
  double agent_radius = 0.035;
  double block_half = 0.03;
  double target_half = 0.045;
  double v_max = 0.03;
  double dt = 1.0;
  int max_steps = 90;
  double min_separation = 0.5;  // initial block-to-target distance

  // Throws InvalidSpec.
  void validate() const;
  friend bool operator==(const PushConfig&, const PushConfig&) = default;
};

struct PushState {
  Vec2d agent;
  Vec2d block;
  Vec2d target;
  int steps = 0;
  friend bool operator==(const PushState&, const PushState&) = default;
};

struct PushStepResult {
  PushState state;
  bool done = false;       // block fully inside the target
  bool truncated = false;  // step limit reached first
};

PushState push_reset(const PushConfig& cfg, std::uint64_t seed);
// Velocity components are clamped to [-v_max, v_max].
PushStepResult push_step(const PushState& state, Vec2d velocity, const PushConfig& cfg);
Frame push_render(const PushState& state, const PushConfig& cfg);
// Deterministic axis-by-axis pushing controller.
Vec2d push_expert(const PushState& state, const PushConfig& cfg);

bool push_block_in_target(const PushState& state, const PushConfig& cfg);
double push_block_target_distance(const PushState& state);

// Rounds a coordinate to the nearest pixel center of the render lattice.
double snap_to_lattice(double v, int render_px);

}  // namespace car
