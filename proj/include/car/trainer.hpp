#pragma once

// Tabular Q-learning over the true gridworld state with either the sparse
// environment reward or an assembled dense reward. With a dense reward the
// assembly's latched sub-task flags are part of the state; without them the
// reward is not Markov (closing and reopening a door looks like it pays again).

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "car/gridworld.hpp"
#include "car/rewarder.hpp"

namespace car {

struct TrainConfig {
  double gamma = 0.99;
  double alpha = 0.5;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::int64_t epsilon_decay_steps = 0;  // 0 selects half of total_steps
  std::int64_t total_steps = 100'000;
  int eval_every = 250;
  int eval_episodes = 5;
  std::uint64_t seed = 0;

  // Throws InvalidConfig.
  void validate() const;
  double epsilon_at(std::int64_t step) const;
};

using QRow = std::array<double, kActions.size()>;

class QTable {
 public:
  // (x, y, facing, has_key, door_open, progress) packed into one key.
  static std::uint64_t key(const GridState& s, std::uint32_t progress = 0);

  const QRow& row(const GridState& s, std::uint32_t progress = 0) const;
  QRow& row(const GridState& s, std::uint32_t progress = 0);
  double max_value(const GridState& s, std::uint32_t progress = 0) const;
  // Ties go to the earliest action in kActions.
  Action greedy(const GridState& s, std::uint32_t progress = 0) const;
  std::size_t size() const { return table_.size(); }

 private:
  std::unordered_map<std::uint64_t, QRow> table_;
};

// One Q-learning backup. Terminal transitions do not bootstrap.
double q_update(double q, double reward, double next_max, double alpha, double gamma, bool terminal);

struct CurvePoint {
  std::int64_t step = 0;
  double mean_return = 0.0;
  double success_rate = 0.0;
};

struct EvalResult {
  double mean_return = 0.0;
  double success_rate = 0.0;
};

struct TrainResult {
  QTable q;
  std::vector<CurvePoint> curve;
  std::int64_t episodes = 0;
  double max_episode_reward = 0.0;  // largest per-episode sum of training rewards
};

// Bit i set when sub-task i is done; bit n when the goal has paid.
std::uint32_t progress_bits(const RewardAssembly& a);

// Greedy rollouts from env.reset(seed + i); returns sparse env statistics.
// A table trained with an assembly needs it here too, to track progress; a
// private copy is used so the caller's episode state is untouched.
EvalResult evaluate(const QTable& q, const GridSpec& spec, int episodes, std::uint64_t seed,
                    const RewardAssembly* assembly = nullptr);

// `assembly` may be null for the sparse condition; when given, begin_episode
// runs on every reset with the rendered initial frame.
TrainResult train(const GridSpec& spec, RewardAssembly* assembly, const TrainConfig& cfg);

std::string curve_csv(const std::vector<CurvePoint>& curve);
std::string curve_json(const std::vector<CurvePoint>& curve);

}  // namespace car
