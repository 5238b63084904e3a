#pragma once

// Scripted policies of graded skill and rollout helpers that record
// trajectories (frames, actions, env rewards) for both environments.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "car/blockpush.hpp"
#include "car/gridworld.hpp"

namespace car {

enum class PolicyKind : std::uint8_t { Expert, Suboptimal, Novice, Random };

inline constexpr std::array<PolicyKind, 4> kPolicyKinds = {PolicyKind::Random, PolicyKind::Novice,
                                                           PolicyKind::Suboptimal, PolicyKind::Expert};

// Probability that the expert action is replaced by a uniform random one.
double random_action_rate(PolicyKind kind);
std::string_view to_string(PolicyKind kind);
std::optional<PolicyKind> policy_from_string(std::string_view s);

template <class A>
struct Decision {
  A action;
  bool randomized = false;
};

class GridPolicy {
 public:
  GridPolicy(const GridEnv& env, PolicyKind kind, std::uint64_t seed);
  Decision<Action> act(const GridState& state);

 private:
  const GridEnv* env_;
  PolicyKind kind_;
  std::mt19937_64 rng_;
};

class PushPolicy {
 public:
  PushPolicy(PushConfig cfg, PolicyKind kind, std::uint64_t seed);
  Decision<Vec2d> act(const PushState& state);

 private:
  PushConfig cfg_;
  PolicyKind kind_;
  std::mt19937_64 rng_;
};

// One recorded episode. Frame count is actions + 1; action vectors hold the
// action index for gridworlds and (vx, vy) for the pusher.
struct Trajectory {
  std::string env_id;
  std::string policy;
  std::uint64_t seed = 0;
  std::vector<Frame> frames;
  std::vector<std::vector<double>> actions;
  std::vector<double> rewards;

  double env_return() const;
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct GridRollout {
  Trajectory traj;
  std::vector<GridState> states;  // aligned with frames
};

struct PushRollout {
  Trajectory traj;
  std::vector<PushState> states;
  bool done = false;
};

inline constexpr std::string_view kPushEnvId = "blockpush";

// The env reset and the policy stream are both derived from `seed`.
GridRollout rollout_grid(const GridEnv& env, PolicyKind kind, std::uint64_t seed);
PushRollout rollout_push(const PushConfig& cfg, PolicyKind kind, std::uint64_t seed);

}  // namespace car
