#include "car/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <thread>

#include "json.hpp"

#include "car/error.hpp"

namespace car {

using nlohmann::json;

double VerifierConfig::threshold() const { return p_units == ThresholdUnits::Percent ? p / 100.0 : p; }

void VerifierConfig::validate() const {
  const double t = threshold();
  if (!(t > 0.0 && t < 1.0)) throw InvalidConfig("p must lie strictly between 0 and 1 (as a fraction)");
  if (n_expert < 1 || n_random < 1) throw InvalidConfig("n_expert and n_random must be at least 1");
  if (goal_recency_x < 0) throw InvalidConfig("goal recency x must be non-negative");
  if (threads < 1) throw InvalidConfig("threads must be at least 1");
}

IdentifierVerdict verify_identifier(const dsl::Program& p, const Frame& initial, std::optional<int> expected_count) {
  IdentifierVerdict v;
  if (p.kind != dsl::ProgramKind::Identify) {
    v.reason = "not an Identify program";
    return v;
  }
  dsl::EvalContext ctx;
  auto f = std::make_shared<const Frame>(initial);
  ctx.frame = f;
  ctx.begin_episode(f);
  try {
    v.detection = dsl::eval_identify(p, ctx);
  } catch (const dsl::EvalError& e) {
    v.reason = std::string("runtime error: ") + e.what();
    return v;
  }
  if (!v.detection.found) {
    v.reason = "found=false on the initial frame";
    return v;
  }
  if (expected_count && static_cast<int>(v.detection.locations.size()) != *expected_count) {
    v.reason = "found " + std::to_string(v.detection.locations.size()) + " instances, expected " +
               std::to_string(*expected_count);
    return v;
  }
  v.pass = true;
  return v;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers; results are indexed,
// so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct GatedResult {
  std::vector<int> completion_frames;  // per checker, -1 if never
  std::vector<int> errors;             // per checker
};

// Mirrors the rewarder: frame 0 is the initial frame; frames 1..last are
// stepped, consulting only the first incomplete checker on each.
GatedResult run_gated(const std::vector<dsl::Program>& checkers, const Trajectory& t, std::size_t last,
                      std::uint64_t fuel) {
  GatedResult r;
  r.completion_frames.assign(checkers.size(), -1);
  r.errors.assign(checkers.size(), 0);
  dsl::EvalContext ctx;
  ctx.begin_episode(std::make_shared<const Frame>(t.frames.front()));
  std::size_t active = 0;
  for (std::size_t k = 1; k <= last && active < checkers.size(); ++k) {
    ctx.frame = std::make_shared<const Frame>(t.frames[k]);
    ctx.fuel = fuel;
    bool fired = false;
    try {
      fired = dsl::eval_check(checkers[active], ctx);
    } catch (const dsl::EvalError&) {
      ++r.errors[active];
    }
    if (fired) {
      r.completion_frames[active] = static_cast<int>(k);
      ++active;
    }
  }
  return r;
}

void check_frames(const std::vector<Trajectory>& expert, const std::vector<Trajectory>& random) {
  if (expert.empty()) throw TrajectoryMismatch("no expert trajectories");
  const Frame& ref = expert.front().frames.front();
  for (const auto* set : {&expert, &random}) {
    for (const Trajectory& t : *set) {
      if (t.frames.empty()) throw TrajectoryMismatch("trajectory without frames");
      for (const Frame& f : t.frames) {
        if (f.width() != ref.width() || f.height() != ref.height()) {
          throw TrajectoryMismatch("frame size " + std::to_string(f.width()) + "x" + std::to_string(f.height()) +
                                   " differs from " + std::to_string(ref.width()) + "x" +
                                   std::to_string(ref.height()));
        }
      }
    }
  }
}

std::size_t horizon_for(const std::vector<Trajectory>& expert, int random_horizon) {
  if (random_horizon > 0) return static_cast<std::size_t>(random_horizon);
  if (random_horizon < 0) return std::numeric_limits<std::size_t>::max();
  std::size_t h = 0;
  for (const Trajectory& t : expert) h = std::max(h, t.frames.size() - 1);
  return h;
}

}  // namespace

VerificationReport verify_subtasks(const std::vector<dsl::Program>& checkers, const std::vector<Trajectory>& expert,
                                   const std::vector<Trajectory>& random, const VerifierConfig& cfg) {
  cfg.validate();
  if (checkers.empty()) throw InvalidArtifacts("no sub-task checkers to verify");
  for (const dsl::Program& c : checkers) {
    if (c.kind != dsl::ProgramKind::Check) throw InvalidArtifacts("sub-task checkers must be Check programs");
  }
  check_frames(expert, random);
  const std::size_t horizon = horizon_for(expert, cfg.random_horizon);

  std::vector<GatedResult> ex(expert.size());
  std::vector<GatedResult> rn(random.size());
  parallel_for(expert.size(), cfg.threads,
               [&](std::size_t i) { ex[i] = run_gated(checkers, expert[i], expert[i].frames.size() - 1, cfg.fuel); });
  parallel_for(random.size(), cfg.threads, [&](std::size_t i) {
    rn[i] = run_gated(checkers, random[i], std::min(random[i].frames.size() - 1, horizon), cfg.fuel);
  });

  VerificationReport report;
  report.p = cfg.threshold();
  report.goal_recency_x = cfg.goal_recency_x;
  report.random_horizon = horizon == std::numeric_limits<std::size_t>::max() ? -1 : static_cast<int>(horizon);
  report.overall_pass = true;
  for (std::size_t j = 0; j < checkers.size(); ++j) {
    SubTaskReport s;
    s.index = static_cast<int>(j);
    for (const GatedResult& g : ex) {
      s.expert_completed.push_back(g.completion_frames[j] >= 0);
      s.expert_completion_frames.push_back(g.completion_frames[j]);
      s.expert_errors += g.errors[j];
    }
    for (const GatedResult& g : rn) {
      s.random_completion_frames.push_back(g.completion_frames[j]);
      if (g.completion_frames[j] >= 0) ++s.random_completions;
      s.random_errors += g.errors[j];
    }
    s.random_trajectories = static_cast<int>(random.size());
    s.random_rate = random.empty() ? 0.0 : static_cast<double>(s.random_completions) / static_cast<double>(random.size());
    const bool all_expert = std::all_of(s.expert_completed.begin(), s.expert_completed.end(), [](bool b) { return b; });
    if (!all_expert) {
      s.reason = "not completed on every expert trajectory";
    } else if (s.expert_errors > 0) {
      s.reason = std::to_string(s.expert_errors) + " runtime errors on expert trajectories";
    } else if (!(s.random_rate < report.p)) {
      s.reason = "completed on " + std::to_string(s.random_completions) + "/" + std::to_string(random.size()) +
                 " random trajectories, not below p";
    } else {
      s.pass = true;
      s.reason = "ok";
    }
    report.overall_pass = report.overall_pass && s.pass;
    report.subtasks.push_back(std::move(s));
  }
  return report;
}

namespace {

// First frame (from 0, ungated) on which the check returns true; -1 if none.
int first_true(const dsl::Program& p, const Trajectory& t, std::uint64_t fuel, int* errors) {
  dsl::EvalContext ctx;
  ctx.begin_episode(std::make_shared<const Frame>(t.frames.front()));
  for (std::size_t k = 0; k < t.frames.size(); ++k) {
    ctx.frame = std::make_shared<const Frame>(t.frames[k]);
    ctx.fuel = fuel;
    try {
      if (dsl::eval_check(p, ctx)) return static_cast<int>(k);
    } catch (const dsl::EvalError&) {
      if (errors != nullptr) ++*errors;
    }
  }
  return -1;
}

}  // namespace

bool verify_goal_recency(const dsl::Program& goal, const std::vector<Trajectory>& expert, int x,
                         std::vector<int>* first_true_frames, std::uint64_t fuel) {
  bool pass = true;
  for (const Trajectory& t : expert) {
    const int len = static_cast<int>(t.frames.size());
    const int first = first_true(goal, t, fuel, nullptr);
    if (first_true_frames != nullptr) first_true_frames->push_back(first);
    if (x >= len) continue;  // the window covers the whole trajectory
    if (first < 0 || first < len - x) pass = false;
  }
  return pass;
}

double terminal_value(const dsl::Program& p, const Trajectory& t, std::uint64_t fuel) {
  dsl::EvalContext ctx;
  ctx.begin_episode(std::make_shared<const Frame>(t.frames.front()));
  double v = 0.0;
  for (std::size_t k = 0; k < t.frames.size(); ++k) {
    ctx.frame = std::make_shared<const Frame>(t.frames[k]);
    ctx.fuel = fuel;
    try {
      v = p.kind == dsl::ProgramKind::Reward ? dsl::eval_reward(p, ctx) : (dsl::eval_check(p, ctx) ? 1.0 : 0.0);
    } catch (const dsl::EvalError&) {
      v = 0.0;
    }
  }
  return v;
}

GoalReport verify_goal(const dsl::Program& goal, const std::vector<Trajectory>& expert,
                       const std::vector<Trajectory>& random, const VerifierConfig& cfg) {
  cfg.validate();
  check_frames(expert, random);
  GoalReport g;
  g.kind = goal.kind;
  if (goal.kind == dsl::ProgramKind::Check) {
    for (const Trajectory& t : expert) {
      g.first_true_frames.push_back(first_true(goal, t, cfg.fuel, &g.expert_errors));
    }
    g.recency_pass = verify_goal_recency(goal, expert, cfg.goal_recency_x, nullptr, cfg.fuel);
    if (g.expert_errors > 0) {
      g.reason = std::to_string(g.expert_errors) + " runtime errors on expert trajectories";
    } else if (!g.recency_pass) {
      g.reason = "goal check does not first fire within the final " + std::to_string(cfg.goal_recency_x) +
                 " frames of every expert trajectory";
    } else {
      g.pass = true;
      g.reason = "ok";
    }
    return g;
  }
  if (goal.kind != dsl::ProgramKind::Reward) throw InvalidArtifacts("goal must be a Check or Reward program");
  // Reward goals: evaluate online over each trajectory, counting expert errors.
  for (const Trajectory& t : expert) {
    dsl::EvalContext ctx;
    ctx.begin_episode(std::make_shared<const Frame>(t.frames.front()));
    double v = 0.0;
    for (const Frame& f : t.frames) {
      ctx.frame = std::make_shared<const Frame>(f);
      ctx.fuel = cfg.fuel;
      try {
        v = dsl::eval_reward(goal, ctx);
      } catch (const dsl::EvalError&) {
        ++g.expert_errors;
        v = 0.0;
      }
    }
    g.expert_terminal_mean += v / static_cast<double>(expert.size());
  }
  const std::size_t horizon = horizon_for(expert, cfg.random_horizon);
  for (const Trajectory& t : random) {
    Trajectory cut = t;
    if (cut.frames.size() - 1 > horizon) cut.frames.resize(horizon + 1);
    g.random_terminal_mean += terminal_value(goal, cut, cfg.fuel) / static_cast<double>(random.size());
  }
  if (g.expert_errors > 0) {
    g.reason = std::to_string(g.expert_errors) + " runtime errors on expert trajectories";
  } else if (!(g.expert_terminal_mean > g.random_terminal_mean)) {
    g.reason = "expert terminal reward does not exceed the random one";
  } else {
    g.pass = true;
    g.reason = "ok";
  }
  return g;
}

VerificationReport verify_artifacts(const GeneratedArtifacts& artifacts, const std::vector<Trajectory>& expert,
                                    const std::vector<Trajectory>& random, const VerifierConfig& cfg) {
  cfg.validate();
  VerificationReport report;
  if (!artifacts.checkers.empty()) {
    report = verify_subtasks(artifacts.checkers, expert, random, cfg);
  } else {
    check_frames(expert, random);
    const std::size_t h = horizon_for(expert, cfg.random_horizon);
    report.p = cfg.threshold();
    report.goal_recency_x = cfg.goal_recency_x;
    report.random_horizon = h == std::numeric_limits<std::size_t>::max() ? -1 : static_cast<int>(h);
    report.overall_pass = true;
  }
  if (artifacts.goal) {
    report.goal = verify_goal(*artifacts.goal, expert, random, cfg);
    report.overall_pass = report.overall_pass && report.goal->pass;
  }
  if (artifacts.reward) {
    report.reward = verify_goal(*artifacts.reward, expert, random, cfg);
    report.overall_pass = report.overall_pass && report.reward->pass;
  }
  if (artifacts.checkers.empty() && !artifacts.goal && !artifacts.reward) {
    throw InvalidArtifacts("nothing to verify");
  }
  return report;
}

// ---- separation ----

const PolicyStats& SeparationReport::stats(PolicyKind kind) const {
  for (const PolicyStats& s : policies) {
    if (s.kind == kind) return s;
  }
  throw InvalidArtifacts("no statistics for policy " + std::string(to_string(kind)));
}

SeparationReport separation_from_values(std::vector<PolicyStats> stats) {
  SeparationReport r;
  for (PolicyStats& s : stats) {
    const double n = static_cast<double>(s.values.size());
    s.mean = n > 0 ? std::accumulate(s.values.begin(), s.values.end(), 0.0) / n : 0.0;
    double ss = 0.0;
    for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  }
  r.policies = std::move(stats);
  std::sort(r.policies.begin(), r.policies.end(), [](const PolicyStats& a, const PolicyStats& b) {
    return std::find(kPolicyKinds.begin(), kPolicyKinds.end(), a.kind) <
           std::find(kPolicyKinds.begin(), kPolicyKinds.end(), b.kind);
  });
  r.k = r.policies.empty() ? 0 : static_cast<int>(r.policies.front().values.size());
  for (const PolicyStats& s : r.policies) {
    if (static_cast<int>(s.values.size()) != r.k) throw InvalidArtifacts("policies have different episode counts");
  }
  const PolicyStats& rnd = r.stats(PolicyKind::Random);
  const PolicyStats& nov = r.stats(PolicyKind::Novice);
  const PolicyStats& sub = r.stats(PolicyKind::Suboptimal);
  const PolicyStats& exp = r.stats(PolicyKind::Expert);
  const double k = static_cast<double>(r.k);
  auto pooled_se = [&](const PolicyStats& a, const PolicyStats& b) {
    return std::sqrt(a.stddev * a.stddev / k + b.stddev * b.stddev / k);
  };
  if (!(rnd.mean < nov.mean && nov.mean < sub.mean && sub.mean <= exp.mean)) {
    r.reason = "means are not ordered random < novice < suboptimal <= expert";
  } else if (exp.mean - rnd.mean < 2.0 * pooled_se(exp, rnd)) {
    r.reason = "expert and random are less than 2 pooled standard errors apart";
  } else if (exp.mean - nov.mean < 2.0 * pooled_se(exp, nov)) {
    r.reason = "expert and novice are less than 2 pooled standard errors apart";
  } else {
    r.ordering_pass = true;
    r.reason = "ok";
  }
  return r;
}

SeparationReport evaluate_separation(const dsl::Program& reward, const PushConfig& cfg, int k,
                                     std::uint64_t seed_base) {
  if (k < 2) throw InvalidConfig("separation needs at least 2 episodes per policy");
  std::vector<PolicyStats> stats;
  for (PolicyKind kind : kPolicyKinds) {
    PolicyStats s;
    s.kind = kind;
    for (int i = 0; i < k; ++i) {
      const PushRollout ro = rollout_push(cfg, kind, seed_base + static_cast<std::uint64_t>(i));
      s.values.push_back(terminal_value(reward, ro.traj));
    }
    stats.push_back(std::move(s));
  }
  return separation_from_values(std::move(stats));
}

// ---- JSON ----

namespace {

json subtask_json(const SubTaskReport& s) {
  return json{{"index", s.index},
              {"expert_completed", s.expert_completed},
              {"expert_completion_frames", s.expert_completion_frames},
              {"random_completions", s.random_completions},
              {"random_trajectories", s.random_trajectories},
              {"random_rate", s.random_rate},
              {"random_completion_frames", s.random_completion_frames},
              {"expert_errors", s.expert_errors},
              {"random_errors", s.random_errors},
              {"pass", s.pass},
              {"reason", s.reason}};
}

json goal_json(const GoalReport& g) {
  return json{{"kind", std::string(dsl::to_string(g.kind))},
              {"first_true_frames", g.first_true_frames},
              {"recency_pass", g.recency_pass},
              {"expert_terminal_mean", g.expert_terminal_mean},
              {"random_terminal_mean", g.random_terminal_mean},
              {"expert_errors", g.expert_errors},
              {"pass", g.pass},
              {"reason", g.reason}};
}

GoalReport goal_from(const json& j) {
  GoalReport g;
  const auto kind = dsl::kind_from_string(j.at("kind").get<std::string>());
  if (!kind) throw SchemaError("unknown goal kind");
  g.kind = *kind;
  g.first_true_frames = j.at("first_true_frames").get<std::vector<int>>();
  g.recency_pass = j.at("recency_pass").get<bool>();
  g.expert_terminal_mean = j.at("expert_terminal_mean").get<double>();
  g.random_terminal_mean = j.at("random_terminal_mean").get<double>();
  g.expert_errors = j.at("expert_errors").get<int>();
  g.pass = j.at("pass").get<bool>();
  g.reason = j.at("reason").get<std::string>();
  return g;
}

}  // namespace

std::string VerificationReport::to_json() const {
  json j;
  j["format"] = "verification-report/v1";
  j["p"] = p;
  j["goal_recency_x"] = goal_recency_x;
  j["random_horizon"] = random_horizon;
  j["overall_pass"] = overall_pass;
  j["subtasks"] = json::array();
  for (const SubTaskReport& s : subtasks) j["subtasks"].push_back(subtask_json(s));
  j["goal"] = goal ? goal_json(*goal) : json(nullptr);
  j["reward"] = reward ? goal_json(*reward) : json(nullptr);
  return j.dump(2) + "\n";
}

VerificationReport VerificationReport::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != "verification-report/v1") throw SchemaError("unsupported report format");
    VerificationReport r;
    r.p = j.at("p").get<double>();
    r.goal_recency_x = j.at("goal_recency_x").get<int>();
    r.random_horizon = j.at("random_horizon").get<int>();
    r.overall_pass = j.at("overall_pass").get<bool>();
    for (const json& s : j.at("subtasks")) {
      SubTaskReport t;
      t.index = s.at("index").get<int>();
      t.expert_completed = s.at("expert_completed").get<std::vector<bool>>();
      t.expert_completion_frames = s.at("expert_completion_frames").get<std::vector<int>>();
      t.random_completions = s.at("random_completions").get<int>();
      t.random_trajectories = s.at("random_trajectories").get<int>();
      t.random_rate = s.at("random_rate").get<double>();
      t.random_completion_frames = s.at("random_completion_frames").get<std::vector<int>>();
      t.expert_errors = s.at("expert_errors").get<int>();
      t.random_errors = s.at("random_errors").get<int>();
      t.pass = s.at("pass").get<bool>();
      t.reason = s.at("reason").get<std::string>();
      r.subtasks.push_back(std::move(t));
    }
    if (!j.at("goal").is_null()) r.goal = goal_from(j.at("goal"));
    if (!j.at("reward").is_null()) r.reward = goal_from(j.at("reward"));
    return r;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed verification report: ") + e.what());
  }
}

std::string SeparationReport::to_json() const {
  json j;
  j["format"] = "separation-report/v1";
  j["k"] = k;
  j["ordering_pass"] = ordering_pass;
  j["reason"] = reason;
  j["policies"] = json::array();
  for (const PolicyStats& s : policies) {
    j["policies"].push_back(
        {{"policy", std::string(to_string(s.kind))}, {"mean", s.mean}, {"stddev", s.stddev}, {"values", s.values}});
  }
  return j.dump(2) + "\n";
}

}  // namespace car
