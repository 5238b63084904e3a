#include "car/trainer.hpp"

#include <algorithm>
#include <optional>
#include <random>
#include <sstream>

#include "json.hpp"

#include "car/error.hpp"

namespace car {

void TrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidConfig("gamma must lie in (0, 1)");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidConfig("alpha must lie in (0, 1]");
  for (double e : {epsilon_start, epsilon_end}) {
    if (!(e >= 0.0 && e <= 1.0)) throw InvalidConfig("epsilon must lie in [0, 1]");
  }
  if (total_steps < 1) throw InvalidConfig("total_steps must be positive");
  if (epsilon_decay_steps < 0) throw InvalidConfig("epsilon_decay_steps must be non-negative");
  if (eval_every < 1 || eval_episodes < 1) throw InvalidConfig("eval_every and eval_episodes must be positive");
}

double TrainConfig::epsilon_at(std::int64_t step) const {
  const std::int64_t decay = epsilon_decay_steps > 0 ? epsilon_decay_steps : std::max<std::int64_t>(1, total_steps / 2);
  if (step >= decay) return epsilon_end;
  const double t = static_cast<double>(step) / static_cast<double>(decay);
  return epsilon_start + (epsilon_end - epsilon_start) * t;
}

std::uint64_t QTable::key(const GridState& s, std::uint32_t progress) {
  return static_cast<std::uint64_t>(s.agent.x) | static_cast<std::uint64_t>(s.agent.y) << 16 |
         static_cast<std::uint64_t>(s.facing) << 32 | static_cast<std::uint64_t>(s.has_key) << 34 |
         static_cast<std::uint64_t>(s.door_open) << 35 | static_cast<std::uint64_t>(progress) << 36;
}

const QRow& QTable::row(const GridState& s, std::uint32_t progress) const {
  static const QRow kZero{};
  const auto it = table_.find(key(s, progress));
  return it == table_.end() ? kZero : it->second;
}

QRow& QTable::row(const GridState& s, std::uint32_t progress) { return table_[key(s, progress)]; }

double QTable::max_value(const GridState& s, std::uint32_t progress) const {
  const QRow& r = row(s, progress);
  return *std::max_element(r.begin(), r.end());
}

Action QTable::greedy(const GridState& s, std::uint32_t progress) const {
  const QRow& r = row(s, progress);
  return kActions[static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin())];
}

double q_update(double q, double reward, double next_max, double alpha, double gamma, bool terminal) {
  const double target = reward + (terminal ? 0.0 : gamma * next_max);
  return q + alpha * (target - q);
}

std::uint32_t progress_bits(const RewardAssembly& a) {
  const std::vector<bool>& flags = a.done_flags();
  if (flags.size() > 27) throw InvalidConfig("too many sub-tasks for the tabular learner");
  std::uint32_t bits = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (flags[i]) bits |= 1U << i;
  }
  if (a.goal_paid()) bits |= 1U << flags.size();
  return bits;
}

EvalResult evaluate(const QTable& q, const GridSpec& spec, int episodes, std::uint64_t seed,
                    const RewardAssembly* assembly) {
  if (episodes < 1) throw InvalidConfig("episodes must be at least 1");
  const GridEnv env(spec);
  std::optional<RewardAssembly> tracker;
  if (assembly != nullptr) tracker.emplace(*assembly);
  EvalResult out;
  for (int e = 0; e < episodes; ++e) {
    GridState s = env.reset(seed + static_cast<std::uint64_t>(e));
    if (tracker) tracker->begin_episode(env.render(s));
    std::uint32_t progress = 0;
    double ret = 0.0;
    while (true) {
      const StepResult r = env.step(s, q.greedy(s, progress));
      ret += r.reward;
      if (tracker) {
        tracker->reward_step(env.render(r.state), r.reward);
        progress = progress_bits(*tracker);
      }
      s = r.state;
      if (r.done || r.truncated) break;
    }
    out.mean_return += ret / episodes;
    if (ret > 0.0) out.success_rate += 1.0 / episodes;
  }
  return out;
}

TrainResult train(const GridSpec& spec, RewardAssembly* assembly, const TrainConfig& cfg) {
  cfg.validate();
  const GridEnv env(spec);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, kActions.size() - 1);
  // Episode starts and evaluation seeds come from their own streams.
  std::mt19937_64 starts(cfg.seed ^ 0x5bd1e995ULL);
  const std::uint64_t eval_seed = cfg.seed * 1'000'003ULL + 17;

  TrainResult out;
  auto begin = [&] {
    GridState s = env.reset(starts());
    if (assembly != nullptr) assembly->begin_episode(env.render(s));
    ++out.episodes;
    return s;
  };
  GridState s = begin();
  std::uint32_t progress = 0;
  double episode_reward = 0.0;
  for (std::int64_t step = 1; step <= cfg.total_steps; ++step) {
    const bool explore = coin(rng) < cfg.epsilon_at(step - 1);
    const Action random_action = kActions[pick(rng)];
    const Action a = explore ? random_action : out.q.greedy(s, progress);
    const StepResult r = env.step(s, a);
    double reward = r.reward;
    std::uint32_t next_progress = 0;
    if (assembly != nullptr) {
      reward = assembly->reward_step(env.render(r.state), r.reward);
      next_progress = progress_bits(*assembly);
    }
    episode_reward += reward;
    const double next_max = r.done ? 0.0 : out.q.max_value(r.state, next_progress);
    double& q = out.q.row(s, progress)[static_cast<std::size_t>(a)];
    // Truncation is not a true terminal, so it still bootstraps.
    q = q_update(q, reward, next_max, cfg.alpha, cfg.gamma, r.done);
    s = r.state;
    progress = next_progress;
    if (r.done || r.truncated) {
      out.max_episode_reward = std::max(out.max_episode_reward, episode_reward);
      episode_reward = 0.0;
      s = begin();
      progress = 0;
    }
    if (step % cfg.eval_every == 0) {
      const EvalResult ev = evaluate(out.q, spec, cfg.eval_episodes, eval_seed, assembly);
      out.curve.push_back({step, ev.mean_return, ev.success_rate});
    }
  }
  return out;
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream os;
  os << "step,mean_return,success_rate\n";
  for (const CurvePoint& p : curve) os << p.step << ',' << p.mean_return << ',' << p.success_rate << '\n';
  return os.str();
}

std::string curve_json(const std::vector<CurvePoint>& curve) {
  nlohmann::json j = nlohmann::json::array();
  for (const CurvePoint& p : curve) {
    j.push_back({{"step", p.step}, {"mean_return", p.mean_return}, {"success_rate", p.success_rate}});
  }
  return j.dump(2) + "\n";
}

}  // namespace car
