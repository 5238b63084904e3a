#include "car/policy.hpp"

#include <numeric>

#include "car/error.hpp"

namespace car {

namespace {

// Decorrelates the policy stream from the environment reset stream.
constexpr std::uint64_t kPolicySalt = 0x9e3779b97f4a7c15ULL;

}  // namespace

double random_action_rate(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Expert: return 0.0;
    case PolicyKind::Suboptimal: return 0.3;
    case PolicyKind::Novice: return 0.5;
    case PolicyKind::Random: return 1.0;
  }
  return 1.0;
}

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Expert: return "expert";
    case PolicyKind::Suboptimal: return "suboptimal";
    case PolicyKind::Novice: return "novice";
    case PolicyKind::Random: return "random";
  }
  return "random";
}

std::optional<PolicyKind> policy_from_string(std::string_view s) {
  for (PolicyKind k : kPolicyKinds) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

GridPolicy::GridPolicy(const GridEnv& env, PolicyKind kind, std::uint64_t seed)
    : env_(&env), kind_(kind), rng_(seed ^ kPolicySalt) {}

Decision<Action> GridPolicy::act(const GridState& state) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, kActions.size() - 1);
  const double rate = random_action_rate(kind_);
  // Always draw the coin so the stream position does not depend on the rate.
  const bool randomize = coin(rng_) < rate;
  const Action random_action = kActions[pick(rng_)];
  if (randomize) return {random_action, true};
  try {
    return {env_->expert(state), false};
  } catch (const Unsolvable&) {
    return {random_action, true};
  }
}

PushPolicy::PushPolicy(PushConfig cfg, PolicyKind kind, std::uint64_t seed)
    : cfg_(cfg), kind_(kind), rng_(seed ^ kPolicySalt) {}

Decision<Vec2d> PushPolicy::act(const PushState& state) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_real_distribution<double> vel(-cfg_.v_max, cfg_.v_max);
  const bool randomize = coin(rng_) < random_action_rate(kind_);
  const Vec2d random_action{vel(rng_), vel(rng_)};
  if (randomize) return {random_action, true};
  return {push_expert(state, cfg_), false};
}

double Trajectory::env_return() const { return std::accumulate(rewards.begin(), rewards.end(), 0.0); }

GridRollout rollout_grid(const GridEnv& env, PolicyKind kind, std::uint64_t seed) {
  GridRollout out;
  out.traj.env_id = env.spec().env_id();
  out.traj.policy = std::string(to_string(kind));
  out.traj.seed = seed;
  GridPolicy policy(env, kind, seed);
  GridState s = env.reset(seed);
  out.states.push_back(s);
  out.traj.frames.push_back(env.render(s));
  while (true) {
    const Action a = policy.act(s).action;
    const StepResult r = env.step(s, a);
    s = r.state;
    out.traj.actions.push_back({static_cast<double>(a)});
    out.traj.rewards.push_back(r.reward);
    out.states.push_back(s);
    out.traj.frames.push_back(env.render(s));
    if (r.done || r.truncated) break;
  }
  return out;
}

PushRollout rollout_push(const PushConfig& cfg, PolicyKind kind, std::uint64_t seed) {
  PushRollout out;
  out.traj.env_id = std::string(kPushEnvId);
  out.traj.policy = std::string(to_string(kind));
  out.traj.seed = seed;
  PushPolicy policy(cfg, kind, seed);
  PushState s = push_reset(cfg, seed);
  out.states.push_back(s);
  out.traj.frames.push_back(push_render(s, cfg));
  while (true) {
    const Vec2d v = policy.act(s).action;
    const PushStepResult r = push_step(s, v, cfg);
    s = r.state;
    out.traj.actions.push_back({v.x, v.y});
    out.traj.rewards.push_back(r.done ? 1.0 : 0.0);
    out.states.push_back(s);
    out.traj.frames.push_back(push_render(s, cfg));
    if (r.done || r.truncated) {
      out.done = r.done;
      break;
    }
  }
  return out;
}

}  // namespace car
