#pragma once

// Runtime reward assembly: ordered sub-task checkers with latched per-episode
// flags, an auxiliary reward on each completion and a goal program once all
// sub-tasks are done.

#include <optional>
#include <string>
#include <vector>

#include "car/artifacts.hpp"
#include "car/frame.hpp"
#include "car/rewardlang.hpp"

namespace car {

struct VerificationReport;

struct SubTaskProgram {
  std::string description;
  std::vector<dsl::Program> identifiers;
  dsl::Program checker;
  bool verified = false;
};

struct AssemblyOptions {
  std::optional<double> r_aux;    // default 1 / number of sub-tasks
  bool goal_as_last_task = false;  // the last checker becomes the goal
  bool prefer_reward_goal = true;  // use the Reward program as goal when present
  double terminal_bonus = 1.0;     // paid once by a Check goal
  bool replace_env_reward = false;  // drop the env reward from the returned value
  std::uint64_t fuel = dsl::kDefaultFuel;  // per program evaluation
};

struct StepInfo {
  int completed = -1;  // index of the sub-task that latched this step
  double aux = 0.0;
  double goal = 0.0;
  std::vector<std::string> errors;
};

class RewardAssembly {
 public:
  RewardAssembly(std::vector<SubTaskProgram> subtasks, std::optional<dsl::Program> goal, AssemblyOptions options = {});

  void begin_episode(const Frame& initial);
  // Throws NotInitialized before the first begin_episode.
  double reward_step(const Frame& frame, double env_reward);

  int n() const { return static_cast<int>(subtasks_.size()); }
  double r_aux() const { return r_aux_; }
  const std::vector<SubTaskProgram>& subtasks() const { return subtasks_; }
  const std::optional<dsl::Program>& goal() const { return goal_; }
  const AssemblyOptions& options() const { return options_; }
  const std::vector<bool>& done_flags() const { return done_; }
  bool goal_paid() const { return goal_paid_; }
  const StepInfo& last_step() const { return last_; }
  double episode_aux_total() const { return aux_total_; }
  const dsl::EvalContext& context() const { return ctx_; }

 private:
  std::vector<SubTaskProgram> subtasks_;
  std::optional<dsl::Program> goal_;
  AssemblyOptions options_;
  double r_aux_ = 0.0;
  std::vector<bool> done_;
  bool goal_paid_ = false;
  bool started_ = false;
  double aux_total_ = 0.0;
  dsl::EvalContext ctx_;
  StepInfo last_;
};

// Throws UnverifiedArtifacts unless the report passed overall.
RewardAssembly assemble(const GeneratedArtifacts& artifacts, const VerificationReport& report,
                        AssemblyOptions options = {});

// Audit record: program order with hashes of their canonical text, r_aux and
// the hash of the report JSON (empty when no report backed the assembly).
std::string assembly_manifest(const RewardAssembly& a, const VerificationReport* report = nullptr);

}  // namespace car
