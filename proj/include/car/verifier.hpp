#pragma once

// Automated verification of generated programs against expert and random
// trajectories, plus the policy-separation check for goal rewards.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "car/artifacts.hpp"
#include "car/blockpush.hpp"
#include "car/policy.hpp"
#include "car/rewardlang.hpp"

namespace car {

enum class ThresholdUnits : std::uint8_t { Fraction, Percent };

struct VerifierConfig {
  int n_expert = 2;
  int n_random = 100;
  double p = 0.1;
  ThresholdUnits p_units = ThresholdUnits::Fraction;
  int goal_recency_x = 3;  // frames
  std::uint64_t random_seed_base = 1000;
  // Random trajectories are judged over their first `random_horizon` steps;
  // 0 uses the longest expert trajectory, a negative value the whole trajectory.
  int random_horizon = 0;
  std::uint64_t fuel = dsl::kDefaultFuel;
  int threads = 1;

  // p as a fraction in (0, 1).
  double threshold() const;
  // Throws InvalidConfig.
  void validate() const;
};

struct IdentifierVerdict {
  bool pass = false;
  std::string reason;
  dsl::Detection detection;
};

IdentifierVerdict verify_identifier(const dsl::Program& p, const Frame& initial,
                                    std::optional<int> expected_count = std::nullopt);

struct SubTaskReport {
  int index = 0;
  std::vector<bool> expert_completed;
  std::vector<int> expert_completion_frames;  // -1 when never completed
  int random_completions = 0;
  int random_trajectories = 0;
  double random_rate = 0.0;
  std::vector<int> random_completion_frames;
  int expert_errors = 0;
  int random_errors = 0;
  bool pass = false;
  std::string reason;
};

struct GoalReport {
  dsl::ProgramKind kind = dsl::ProgramKind::Check;
  std::vector<int> first_true_frames;  // Check goals, per expert trajectory
  bool recency_pass = false;
  double expert_terminal_mean = 0.0;  // Reward goals
  double random_terminal_mean = 0.0;
  int expert_errors = 0;
  bool pass = false;
  std::string reason;
};

struct VerificationReport {
  std::vector<SubTaskReport> subtasks;
  std::optional<GoalReport> goal;
  std::optional<GoalReport> reward;
  bool overall_pass = false;
  double p = 0.1;
  int goal_recency_x = 3;
  int random_horizon = 0;

  std::string to_json() const;
  static VerificationReport from_json(const std::string& text);
};

// Throws InvalidArtifacts (empty or non-Check checkers) and TrajectoryMismatch
// (frame sizes differ, or no expert trajectories).
VerificationReport verify_subtasks(const std::vector<dsl::Program>& checkers, const std::vector<Trajectory>& expert,
                                   const std::vector<Trajectory>& random, const VerifierConfig& cfg);

bool verify_goal_recency(const dsl::Program& goal, const std::vector<Trajectory>& expert, int x,
                         std::vector<int>* first_true_frames = nullptr, std::uint64_t fuel = dsl::kDefaultFuel);

// Check goals: recency on the experts. Reward goals: no expert errors and a
// higher mean terminal value on experts than on random trajectories.
GoalReport verify_goal(const dsl::Program& goal, const std::vector<Trajectory>& expert,
                       const std::vector<Trajectory>& random, const VerifierConfig& cfg);

// Sub-tasks (when present) and goal/reward programs together.
VerificationReport verify_artifacts(const GeneratedArtifacts& artifacts, const std::vector<Trajectory>& expert,
                                    const std::vector<Trajectory>& random, const VerifierConfig& cfg);

// Value of a Check or Reward program on the last frame of a trajectory, with
// every earlier frame evaluated first so stored state builds up as it would
// online. Errors read as 0.
double terminal_value(const dsl::Program& p, const Trajectory& t, std::uint64_t fuel = dsl::kDefaultFuel);

struct PolicyStats {
  PolicyKind kind = PolicyKind::Random;
  std::vector<double> values;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
};

struct SeparationReport {
  int k = 0;
  std::vector<PolicyStats> policies;  // random, novice, suboptimal, expert
  bool ordering_pass = false;
  std::string reason;

  const PolicyStats& stats(PolicyKind kind) const;
  std::string to_json() const;
};

// Rolls out k pusher episodes per policy on seeds seed_base + i.
SeparationReport evaluate_separation(const dsl::Program& reward, const PushConfig& cfg, int k,
                                     std::uint64_t seed_base);
// Same verdict over pre-recorded trajectories, grouped by policy.
SeparationReport separation_from_values(std::vector<PolicyStats> stats);

}  // namespace car
