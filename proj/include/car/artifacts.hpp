#pragma once

// Programs produced by a generation pipeline, before and after verification.

#include <optional>
#include <string>
#include <vector>

#include "car/rewardlang.hpp"

namespace car {

struct GeneratedArtifacts {
  std::string task_description;  // the inferred final goal
  std::vector<std::string> subtask_descriptions;
  std::optional<dsl::Program> agent_identifier;
  // identifiers[i] holds the object identifiers written for sub-task i.
  std::vector<std::vector<dsl::Program>> identifiers;
  std::vector<dsl::Program> checkers;
  std::vector<dsl::Program> goal_identifiers;
  std::optional<dsl::Program> goal;    // Check kind
  std::optional<dsl::Program> reward;  // optional incremental Reward program
  // Failed attempts per program slot, in slot order.
  std::vector<std::pair<std::string, int>> failed_attempts;
  std::string session_log;  // path of the JSON-lines transcript, if any
};

}  // namespace car
