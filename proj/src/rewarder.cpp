#include "car/rewarder.hpp"

#include <algorithm>

#include "car/datastore.hpp"
#include "car/error.hpp"
#include "car/verifier.hpp"
#include "json.hpp"

namespace car {

RewardAssembly::RewardAssembly(std::vector<SubTaskProgram> subtasks, std::optional<dsl::Program> goal,
                               AssemblyOptions options)
    : subtasks_(std::move(subtasks)), goal_(std::move(goal)), options_(options) {
  for (const SubTaskProgram& s : subtasks_) {
    if (s.checker.kind != dsl::ProgramKind::Check) throw InvalidArtifacts("sub-task checker must be a Check program");
  }
  if (goal_ && goal_->kind == dsl::ProgramKind::Identify) throw InvalidArtifacts("goal must be a Check or Reward program");
  if (options_.r_aux) {
    if (*options_.r_aux < 0.0) throw InvalidConfig("r_aux must be non-negative");
    r_aux_ = *options_.r_aux;
  } else {
    r_aux_ = subtasks_.empty() ? 0.0 : 1.0 / static_cast<double>(subtasks_.size());
  }
  done_.assign(subtasks_.size(), false);
}

void RewardAssembly::begin_episode(const Frame& initial) {
  ctx_ = dsl::EvalContext{};
  auto f = std::make_shared<const Frame>(initial);
  ctx_.frame = f;
  ctx_.begin_episode(f);
  done_.assign(subtasks_.size(), false);
  goal_paid_ = false;
  aux_total_ = 0.0;
  last_ = StepInfo{};
  started_ = true;
}

double RewardAssembly::reward_step(const Frame& frame, double env_reward) {
  if (!started_) throw NotInitialized("reward_step called before begin_episode");
  last_ = StepInfo{};
  ctx_.frame = std::make_shared<const Frame>(frame);

  const auto active = std::find(done_.begin(), done_.end(), false);
  if (active != done_.end()) {
    const auto i = static_cast<std::size_t>(active - done_.begin());
    ctx_.fuel = options_.fuel;
    bool fired = false;
    try {
      fired = dsl::eval_check(subtasks_[i].checker, ctx_);
    } catch (const dsl::EvalError& e) {
      last_.errors.emplace_back(e.what());
    }
    if (fired) {
      done_[i] = true;
      last_.completed = static_cast<int>(i);
      last_.aux = r_aux_;
      aux_total_ += r_aux_;
    }
  }

  const bool all_done = std::find(done_.begin(), done_.end(), false) == done_.end();
  double env = options_.replace_env_reward ? 0.0 : env_reward;
  if (all_done && goal_) {
    ctx_.fuel = options_.fuel;
    try {
      if (goal_->kind == dsl::ProgramKind::Reward) {
        last_.goal = dsl::eval_reward(*goal_, ctx_);
      } else if (!goal_paid_ && dsl::eval_check(*goal_, ctx_)) {
        goal_paid_ = true;
        // The goal check and the env terminal reward describe the same event;
        // pay the larger of the two once rather than both.
        last_.goal = std::max(0.0, options_.terminal_bonus - env);
      }
    } catch (const dsl::EvalError& e) {
      last_.errors.emplace_back(e.what());
    }
  }
  return env + last_.aux + last_.goal;
}

RewardAssembly assemble(const GeneratedArtifacts& artifacts, const VerificationReport& report,
                        AssemblyOptions options) {
  if (!report.overall_pass) throw UnverifiedArtifacts("verification report did not pass");
  std::vector<SubTaskProgram> subtasks;
  for (std::size_t i = 0; i < artifacts.checkers.size(); ++i) {
    SubTaskProgram s{.description = i < artifacts.subtask_descriptions.size() ? artifacts.subtask_descriptions[i] : "",
                     .identifiers = i < artifacts.identifiers.size() ? artifacts.identifiers[i]
                                                                     : std::vector<dsl::Program>{},
                     .checker = artifacts.checkers[i],
                     .verified = true};
    subtasks.push_back(std::move(s));
  }
  std::optional<dsl::Program> goal;
  if (options.prefer_reward_goal && artifacts.reward) {
    goal = artifacts.reward;
  } else if (artifacts.goal) {
    goal = artifacts.goal;
  }
  if (options.goal_as_last_task && !subtasks.empty()) {
    goal = subtasks.back().checker;
    subtasks.pop_back();
  }
  return RewardAssembly(std::move(subtasks), std::move(goal), options);
}

std::string assembly_manifest(const RewardAssembly& a, const VerificationReport* report) {
  using nlohmann::json;
  auto ref = [](const dsl::Program& p) {
    return json{{"kind", std::string(dsl::to_string(p.kind))}, {"sha256", sha256_hex(dsl::format(p))}};
  };
  json j;
  j["format"] = "car-assembly/v1";
  j["n"] = a.n();
  j["r_aux"] = a.r_aux();
  j["subtasks"] = json::array();
  for (int i = 0; i < a.n(); ++i) {
    const SubTaskProgram& s = a.subtasks()[static_cast<std::size_t>(i)];
    json e = ref(s.checker);
    e["order"] = i;
    e["description"] = s.description;
    e["verified"] = s.verified;
    e["identifiers"] = json::array();
    for (const dsl::Program& id : s.identifiers) e["identifiers"].push_back(ref(id));
    j["subtasks"].push_back(e);
  }
  j["goal"] = a.goal() ? ref(*a.goal()) : json(nullptr);
  j["terminal_bonus"] = a.options().terminal_bonus;
  j["replace_env_reward"] = a.options().replace_env_reward;
  j["report_sha256"] = report ? json(sha256_hex(report->to_json())) : json(nullptr);
  return j.dump(2) + "\n";
}

}  // namespace car
