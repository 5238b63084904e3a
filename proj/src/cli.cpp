#include "car/cli.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "car/datastore.hpp"
#include "car/oracle_programs.hpp"
#include "car/policy.hpp"
#include "car/rewarder.hpp"
#include "car/trainer.hpp"
#include "car/verifier.hpp"
#include "car/vlm.hpp"

namespace car::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::array<SettingInfo, 39> kSettings = {{
    {"env", "doorkey-8x8", "environment: doorkey-WxH, unlock-WxH, empty-WxH or blockpush"},
    {"tile", "16", "gridworld tile size in pixels"},
    {"layout_seed", "3", "gridworld layout seed (walls, door, key, goal)"},
    {"seed", "0", "first episode and policy seed"},
    {"out", "", "output directory"},
    {"policy", "expert", "expert, suboptimal, novice or random"},
    {"count", "1", "trajectories to record"},
    {"expert", "", "expert trajectory corpus directory"},
    {"random", "", "random trajectory corpus directory"},
    {"artifacts", "", "generated artifacts directory"},
    {"program", "", "reward program file (.rwd)"},
    {"backend", "oracle", "model backend: oracle, replay or live"},
    {"session", "", "session transcript for the replay backend"},
    {"flawed", "0", "oracle backend: wrong answers before each correct program"},
    {"n", "3", "number of sub-tasks"},
    {"agent", "", "agent description (empty: chosen per environment)"},
    {"max_attempts", "12", "attempts per program before giving up"},
    {"simplify_after", "5", "failures before the simplify retry message"},
    {"vlm.endpoint", "https://api.openai.com/v1/chat/completions", "live backend chat-completions URL"},
    {"vlm.model", "gpt-4o", "live backend model id"},
    {"vlm.timeout", "120", "live backend request timeout in seconds"},
    {"p", "0.1", "random completion threshold"},
    {"p_units", "fraction", "fraction or percent"},
    {"x", "3", "goal recency window in frames"},
    {"n_expert", "2", "expert trajectories to record (demo)"},
    {"n_random", "100", "random trajectories to record (demo)"},
    {"random_seed_base", "1000", "seed of the first random trajectory (demo)"},
    {"random_horizon", "0", "random trajectory steps judged; 0 = longest expert, -1 = all"},
    {"threads", "1", "worker threads"},
    {"reward", "both", "training reward: dense, sparse or both"},
    {"budget", "120000", "environment steps per training run"},
    {"seeds", "5", "training seeds"},
    {"alpha", "0.5", "Q-learning step size"},
    {"gamma", "0.99", "discount"},
    {"eval_every", "1000", "steps between learning-curve evaluations"},
    {"eval_episodes", "5", "greedy episodes per evaluation"},
    {"final_episodes", "20", "greedy episodes in the final evaluation"},
    {"k", "20", "episodes per policy for eval-policies"},
    {"steps", "0", "render: steps to render (0 = whole episode)"},
}};

std::string dashed(std::string_view key) {
  std::string s(key);
  std::replace(s.begin(), s.end(), '_', '-');
  std::replace(s.begin(), s.end(), '.', '-');
  return s;
}

std::string trim(std::string_view s) {
  const std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const std::size_t b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

template <class T>
T parse_number(std::string_view key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw UsageError("setting " + std::string(key) + " expects a number, got '" + v + "'");
  }
  return out;
}

}  // namespace

std::span<const SettingInfo> setting_table() { return kSettings; }

const SettingInfo* find_setting(std::string_view key) {
  for (const SettingInfo& s : kSettings) {
    if (s.key == key) return &s;
  }
  return nullptr;
}

std::string env_var_name(std::string_view key) {
  std::string s = "CAR_";
  for (char c : key) s += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::map<std::string, std::string> parse_config_text(std::string_view text) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (find_setting(key) == nullptr) {
      throw UsageError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    out[key] = trim(std::string_view(line).substr(eq + 1));
  }
  return out;
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

const std::string& Settings::get(std::string_view key) const {
  const auto it = values_.find(std::string(key));
  if (it == values_.end()) throw UsageError("unknown setting " + std::string(key));
  return it->second;
}

int Settings::get_int(std::string_view key) const { return parse_number<int>(key, get(key)); }
std::int64_t Settings::get_int64(std::string_view key) const { return parse_number<std::int64_t>(key, get(key)); }
std::uint64_t Settings::get_u64(std::string_view key) const { return parse_number<std::uint64_t>(key, get(key)); }
double Settings::get_double(std::string_view key) const { return parse_number<double>(key, get(key)); }

const std::string& Settings::origin(std::string_view key) const {
  const auto it = origins_.find(std::string(key));
  if (it == origins_.end()) throw UsageError("unknown setting " + std::string(key));
  return it->second;
}

void Settings::set(const std::string& key, std::string value, std::string origin) {
  if (find_setting(key) == nullptr) throw UsageError("unknown setting '" + key + "'");
  values_[key] = std::move(value);
  origins_[key] = std::move(origin);
}

std::string Settings::echo() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << "  # " << origins_.at(k) << '\n';
  return os.str();
}

Settings resolve_settings(const std::optional<fs::path>& config_file, const EnvLookup& env,
                          const std::vector<std::pair<std::string, std::string>>& flags) {
  Settings s;
  for (const SettingInfo& info : kSettings) s.set(std::string(info.key), std::string(info.default_value), "default");
  if (config_file) {
    for (auto& [k, v] : parse_config_text(read_text(*config_file))) s.set(k, v, "file");
  }
  for (const SettingInfo& info : kSettings) {
    if (auto v = env(env_var_name(info.key))) s.set(std::string(info.key), *v, "env");
  }
  for (const auto& [k, v] : flags) s.set(k, v, "flag");
  return s;
}

// ---- subcommands ----

namespace {

struct EnvChoice {
  bool push = false;
  GridSpec grid;
  PushConfig push_cfg;
  std::string id;
  std::string spec_text;
};

EnvChoice env_from(const Settings& s) {
  EnvChoice e;
  e.id = s.get("env");
  if (e.id == kPushEnvId) {
    e.push = true;
    e.spec_text = canonical_spec(e.push_cfg);
    return e;
  }
  const std::optional<GridSpec> g = parse_grid_env_id(e.id);
  if (!g) throw UsageError("unknown environment '" + e.id + "'");
  e.grid = *g;
  e.grid.tile_px = s.get_int("tile");
  e.grid.seed = s.get_u64("layout_seed");
  e.grid.validate();
  e.spec_text = canonical_spec(e.grid);
  return e;
}

PolicyKind policy_from(const Settings& s) {
  const std::optional<PolicyKind> k = policy_from_string(s.get("policy"));
  if (!k) throw UsageError("unknown policy '" + s.get("policy") + "'");
  return *k;
}

fs::path required_path(const Settings& s, std::string_view key) {
  const std::string& v = s.get(key);
  if (v.empty()) throw UsageError("--" + dashed(key) + " is required");
  return v;
}

VerifierConfig verifier_config(const Settings& s) {
  VerifierConfig c;
  c.p = s.get_double("p");
  const std::string& units = s.get("p_units");
  if (units == "fraction") {
    c.p_units = ThresholdUnits::Fraction;
  } else if (units == "percent") {
    c.p_units = ThresholdUnits::Percent;
  } else {
    throw UsageError("p_units must be fraction or percent");
  }
  c.goal_recency_x = s.get_int("x");
  c.n_expert = s.get_int("n_expert");
  c.n_random = s.get_int("n_random");
  c.random_seed_base = s.get_u64("random_seed_base");
  c.random_horizon = s.get_int("random_horizon");
  c.threads = s.get_int("threads");
  c.validate();
  return c;
}

void echo_config(const Settings& s, const fs::path& dir) { write_text(dir / "config.resolved", s.echo()); }

Trajectory record_one(const EnvChoice& e, PolicyKind kind, std::uint64_t seed) {
  if (e.push) return rollout_push(e.push_cfg, kind, seed).traj;
  const GridEnv env(e.grid);
  return rollout_grid(env, kind, seed).traj;
}

int cmd_record(const Settings& s, std::ostream& out) {
  const EnvChoice e = env_from(s);
  const PolicyKind kind = policy_from(s);
  const int count = s.get_int("count");
  if (count < 1) throw UsageError("count must be at least 1");
  const fs::path dir = required_path(s, "out");
  const std::uint64_t seed = s.get_u64("seed");
  double total = 0.0;
  for (int i = 0; i < count; ++i) {
    const Trajectory t = record_one(e, kind, seed + static_cast<std::uint64_t>(i));
    total += t.env_return();
    save_trajectory(t, corpus_entry(dir, static_cast<std::size_t>(i)), e.spec_text);
  }
  echo_config(s, dir);
  out << "recorded " << count << ' ' << to_string(kind) << " trajectories of " << e.id << " in " << dir.string()
      << " (mean env return " << total / count << ")\n";
  return kExitOk;
}

vlm::Corpus load_corpus_for(const Settings& s, std::string_view key, const EnvChoice& e) {
  auto c = std::make_shared<std::vector<Trajectory>>(load_corpus(required_path(s, key)));
  for (const Trajectory& t : *c) {
    if (t.env_id != e.id) {
      throw TrajectoryMismatch(std::string(key) + " corpus was recorded on " + t.env_id + ", not " + e.id);
    }
  }
  return c;
}

void print_report(const VerificationReport& r, std::ostream& out) {
  for (const SubTaskReport& t : r.subtasks) {
    out << "  sub-task " << t.index + 1 << ": " << (t.pass ? "pass" : "FAIL") << "  random rate "
        << std::setprecision(3) << t.random_rate << (t.reason.empty() || t.reason == "ok" ? "" : "  (" + t.reason + ")") << '\n';
  }
  if (r.goal) out << "  goal: " << (r.goal->pass ? "pass" : "FAIL") << (r.goal->reason.empty() || r.goal->reason == "ok" ? "" : "  (" + r.goal->reason + ")") << '\n';
  if (r.reward) out << "  reward: " << (r.reward->pass ? "pass" : "FAIL") << (r.reward->reason.empty() || r.reward->reason == "ok" ? "" : "  (" + r.reward->reason + ")") << '\n';
  out << "  overall: " << (r.overall_pass ? "pass" : "FAIL") << '\n';
}

std::unique_ptr<vlm::ChatBackend> backend_from(const Settings& s, const EnvChoice& e) {
  const std::string& b = s.get("backend");
  if (b == "oracle") {
    vlm::OracleScript script =
        e.push ? vlm::blockpush_oracle_script() : vlm::doorkey_oracle_script(e.grid.tile_px, s.get_int("n"));
    return std::make_unique<vlm::OracleBackend>(std::move(script), s.get_int("flawed"));
  }
  if (b == "replay") return std::make_unique<vlm::ReplayBackend>(load_session(required_path(s, "session")));
  if (b == "live") {
    vlm::LiveConfig c;
    c.endpoint = s.get("vlm.endpoint");
    c.model = s.get("vlm.model");
    c.timeout_seconds = s.get_int("vlm.timeout");
    return std::make_unique<vlm::LiveBackend>(std::move(c));
  }
  throw UsageError("unknown backend '" + b + "'");
}

int cmd_generate(const Settings& s, std::ostream& out, std::ostream& err) {
  const EnvChoice e = env_from(s);
  const fs::path dir = required_path(s, "out");
  const VerifierConfig vc = verifier_config(s);
  vlm::PipelineConfig pc;
  pc.n = s.get_int("n");
  pc.agent_description = s.get("agent").empty() ? (e.push ? "robotic arm" : "red triangle") : s.get("agent");
  pc.max_attempts = s.get_int("max_attempts");
  pc.simplify_after = s.get_int("simplify_after");
  pc.backend = s.get("backend");
  pc.validate();
  const vlm::Corpus expert = load_corpus_for(s, "expert", e);
  const vlm::Corpus random = load_corpus_for(s, "random", e);
  std::unique_ptr<vlm::ChatBackend> backend = backend_from(s, e);

  const Frame& initial = expert->front().frames.front();
  const Frame& goal = expert->front().frames.back();
  const vlm::VerifyCallback verify = vlm::trajectory_verifier(expert, random, vc);
  vlm::SessionLog log;
  GeneratedArtifacts art;
  try {
    art = e.push ? vlm::run_robotic_pipeline(initial, goal, pc, *backend, verify, &log)
                 : vlm::run_task_pipeline(initial, goal, pc, *backend, verify, &log);
  } catch (const vlm::MaxAttemptsExceeded& x) {
    save_session(dir / "session.jsonl", log.records);
    echo_config(s, dir);
    err << "generate: " << x.what() << '\n';
    return kExitFailed;
  }
  art.session_log = "session.jsonl";
  save_artifacts(dir, art);
  save_session(dir / "session.jsonl", log.records);
  const VerificationReport report = verify_artifacts(art, *expert, *random, vc);
  save_report(dir / "report.json", report);
  echo_config(s, dir);
  out << "generated " << art.checkers.size() << " checkers" << (art.goal ? ", a goal check" : "")
      << (art.reward ? ", a reward" : "") << " with the " << backend->name() << " backend in " << dir.string()
      << '\n';
  for (const auto& [slot, n] : art.failed_attempts) {
    if (n > 0) out << "  " << slot << ": " << n << " failed attempts\n";
  }
  print_report(report, out);
  return report.overall_pass ? kExitOk : kExitFailed;
}

int cmd_verify(const Settings& s, std::ostream& out) {
  const EnvChoice e = env_from(s);
  const VerifierConfig vc = verifier_config(s);
  const fs::path adir = required_path(s, "artifacts");
  const GeneratedArtifacts art = load_artifacts(adir);
  const vlm::Corpus expert = load_corpus_for(s, "expert", e);
  const vlm::Corpus random = load_corpus_for(s, "random", e);
  const VerificationReport report = verify_artifacts(art, *expert, *random, vc);
  const fs::path dir = s.get("out").empty() ? adir : fs::path(s.get("out"));
  save_report(dir / "report.json", report);
  echo_config(s, dir);
  out << "verification of " << adir.string() << '\n';
  print_report(report, out);
  return report.overall_pass ? kExitOk : kExitFailed;
}

RewardAssembly dense_reward(const Settings& s, const EnvChoice& e) {
  if (!s.get("artifacts").empty()) {
    const fs::path adir = s.get("artifacts");
    const GeneratedArtifacts art = load_artifacts(adir);
    return assemble(art, load_report(adir / "report.json"));
  }
  const vlm::OracleScript script = vlm::doorkey_oracle_script(e.grid.tile_px, s.get_int("n"));
  std::vector<SubTaskProgram> subtasks;
  for (std::size_t i = 0; i < script.checkers.size(); ++i) {
    subtasks.push_back({script.tasks[i], {}, dsl::parse(script.checkers[i], dsl::ProgramKind::Check), true});
  }
  return RewardAssembly(std::move(subtasks), dsl::parse(script.goal_check, dsl::ProgramKind::Check));
}

std::string aggregate_csv(const std::vector<TrainResult>& runs) {
  std::ostringstream os;
  os << "step,mean_return,success_rate\n";
  if (runs.empty()) return os.str();
  for (std::size_t i = 0; i < runs.front().curve.size(); ++i) {
    double ret = 0.0;
    double succ = 0.0;
    for (const TrainResult& r : runs) {
      ret += r.curve[i].mean_return;
      succ += r.curve[i].success_rate;
    }
    os << runs.front().curve[i].step << ',' << ret / runs.size() << ',' << succ / runs.size() << '\n';
  }
  return os.str();
}

int cmd_train(const Settings& s, std::ostream& out) {
  const EnvChoice e = env_from(s);
  if (e.push) throw UsageError("train supports gridworld environments only");
  const std::string& mode = s.get("reward");
  std::vector<std::string> modes;
  if (mode == "both") {
    modes = {"dense", "sparse"};
  } else if (mode == "dense" || mode == "sparse") {
    modes = {mode};
  } else {
    throw UsageError("reward must be dense, sparse or both");
  }
  const int seeds = s.get_int("seeds");
  if (seeds < 1) throw UsageError("seeds must be at least 1");
  const int final_episodes = s.get_int("final_episodes");
  TrainConfig base;
  base.alpha = s.get_double("alpha");
  base.gamma = s.get_double("gamma");
  base.total_steps = s.get_int64("budget");
  base.eval_every = s.get_int("eval_every");
  base.eval_episodes = s.get_int("eval_episodes");
  base.validate();
  if (final_episodes < 1) throw UsageError("final_episodes must be at least 1");
  const int threads = std::max(1, s.get_int("threads"));
  const fs::path dir = required_path(s, "out");

  std::optional<RewardAssembly> dense;
  if (std::find(modes.begin(), modes.end(), "dense") != modes.end()) dense.emplace(dense_reward(s, e));

  json summary = json::object();
  for (const std::string& m : modes) {
    std::vector<TrainResult> runs(static_cast<std::size_t>(seeds));
    std::vector<double> final(static_cast<std::size_t>(seeds));
    auto job = [&](int i) {
      TrainConfig cfg = base;
      cfg.seed = s.get_u64("seed") + static_cast<std::uint64_t>(i);
      std::optional<RewardAssembly> a;
      if (m == "dense") a.emplace(*dense);
      runs[static_cast<std::size_t>(i)] = train(e.grid, a ? &*a : nullptr, cfg);
      final[static_cast<std::size_t>(i)] =
          evaluate(runs[static_cast<std::size_t>(i)].q, e.grid, final_episodes, 99, a ? &*a : nullptr).success_rate;
    };
    for (int start = 0; start < seeds; start += threads) {
      std::vector<std::thread> pool;
      for (int i = start; i < std::min(seeds, start + threads); ++i) pool.emplace_back(job, i);
      for (std::thread& t : pool) t.join();
    }
    json per_seed = json::array();
    for (int i = 0; i < seeds; ++i) {
      const TrainResult& r = runs[static_cast<std::size_t>(i)];
      const std::string stem = m + "_seed" + std::to_string(i);
      write_text(dir / (stem + ".csv"), curve_csv(r.curve));
      write_text(dir / (stem + ".json"), curve_json(r.curve));
      per_seed.push_back({{"seed", s.get_u64("seed") + static_cast<std::uint64_t>(i)},
                          {"final_success", final[static_cast<std::size_t>(i)]},
                          {"episodes", r.episodes}});
      out << m << " seed " << i << ": final success " << std::fixed << std::setprecision(2)
          << final[static_cast<std::size_t>(i)] << " after " << r.episodes << " episodes\n";
    }
    write_text(dir / (m + "_aggregate.csv"), aggregate_csv(runs));
    summary[m] = per_seed;
  }
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  if (dense) {
    std::optional<VerificationReport> report;
    if (!s.get("artifacts").empty()) report = load_report(fs::path(s.get("artifacts")) / "report.json");
    write_text(dir / "assembly.json", assembly_manifest(*dense, report ? &*report : nullptr));
  }
  echo_config(s, dir);
  return kExitOk;
}

int cmd_eval_policies(const Settings& s, std::ostream& out) {
  const EnvChoice e = env_from(s);
  if (!e.push) throw UsageError("eval-policies supports blockpush only");
  const int k = s.get_int("k");
  if (k < 1) throw UsageError("k must be at least 1");
  const dsl::Program program = s.get("program").empty()
                                   ? dsl::parse(oracle::push_programs().incremental_reward, dsl::ProgramKind::Reward)
                                   : load_program(s.get("program"));
  if (program.kind == dsl::ProgramKind::Identify) throw UsageError("eval-policies needs a check or reward program");
  const SeparationReport r = evaluate_separation(program, e.push_cfg, k, s.get_u64("seed"));
  if (!s.get("out").empty()) {
    write_text(fs::path(s.get("out")) / "separation.json", r.to_json());
    echo_config(s, s.get("out"));
  }
  out << r.to_json();
  return r.ordering_pass ? kExitOk : kExitFailed;
}

int cmd_render(const Settings& s, std::ostream& out) {
  const EnvChoice e = env_from(s);
  const Trajectory t = record_one(e, policy_from(s), s.get_u64("seed"));
  const int steps = s.get_int("steps");
  if (steps < 0) throw UsageError("steps must be non-negative");
  const fs::path dir = required_path(s, "out");
  std::error_code ec;
  fs::create_directories(dir, ec);
  const std::size_t n = steps == 0 ? t.frames.size() : std::min(t.frames.size(), static_cast<std::size_t>(steps) + 1);
  for (std::size_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06zu.png", i);
    write_png(dir / name, t.frames[i]);
  }
  out << "rendered " << n << " frames of " << e.id << " to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_demo(const Settings& base, std::ostream& out, std::ostream& err) {
  const fs::path dir = base.get("out").empty() ? fs::path("car-demo") : fs::path(base.get("out"));
  const EnvChoice e = env_from(base);
  Settings s = base;
  auto step = [&](std::string_view title, auto&& fn) {
    out << "== " << title << '\n';
    return fn();
  };
  s.set("out", (dir / "corpora" / "expert").string(), "demo");
  s.set("policy", "expert", "demo");
  s.set("count", base.get("n_expert"), "demo");
  int rc = step("record expert", [&] { return cmd_record(s, out); });
  if (rc != kExitOk) return rc;
  s.set("out", (dir / "corpora" / "random").string(), "demo");
  s.set("policy", "random", "demo");
  s.set("count", base.get("n_random"), "demo");
  s.set("seed", base.get("random_seed_base"), "demo");
  rc = step("record random", [&] { return cmd_record(s, out); });
  if (rc != kExitOk) return rc;
  s.set("seed", base.get("seed"), "demo");
  s.set("expert", (dir / "corpora" / "expert").string(), "demo");
  s.set("random", (dir / "corpora" / "random").string(), "demo");
  s.set("out", (dir / "artifacts").string(), "demo");
  s.set("backend", "oracle", "demo");
  rc = step("generate", [&] { return cmd_generate(s, out, err); });
  if (rc != kExitOk) return rc;
  s.set("artifacts", (dir / "artifacts").string(), "demo");
  s.set("out", "", "demo");
  rc = step("verify", [&] { return cmd_verify(s, out); });
  if (rc != kExitOk) return rc;
  if (e.push) {
    s.set("out", (dir / "separation").string(), "demo");
    return step("eval-policies", [&] { return cmd_eval_policies(s, out); });
  }
  s.set("out", (dir / "train").string(), "demo");
  return step("train", [&] { return cmd_train(s, out); });
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
  CLI::App app{"Reward programs from images: record, generate, verify, train."};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_file;
  std::vector<std::string> overrides;
  app.add_option("--config", config_file, "settings file of key = value lines");
  app.add_option("--set", overrides, "override a setting: key=value (repeatable)");

  struct Sub {
    const char* name;
    const char* help;
  };
  const std::array<Sub, 7> subs = {{
      {"record", "roll out a policy and store the trajectories"},
      {"generate", "run the prompting pipeline and verify its programs"},
      {"verify", "verify stored programs against trajectory corpora"},
      {"train", "tabular Q-learning with dense and/or sparse reward"},
      {"eval-policies", "inferred reward of four graded policies (blockpush)"},
      {"render", "write the frames of one rollout as PNG files"},
      {"demo", "record, generate with the oracle, verify and train"},
  }};
  std::map<std::string, std::map<std::string, std::string>> flag_values;
  std::map<std::string, CLI::App*> apps;
  for (const Sub& sub : subs) {
    CLI::App* a = app.add_subcommand(sub.name, sub.help);
    auto& values = flag_values[sub.name];
    for (const SettingInfo& info : kSettings) {
      a->add_option("--" + dashed(info.key), values[std::string(info.key)], std::string(info.help));
    }
    apps[sub.name] = a;
  }

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  std::string chosen;
  for (const auto& [name, a] : apps) {
    if (a->parsed()) chosen = name;
  }
  try {
    std::vector<std::pair<std::string, std::string>> flags;
    for (const std::string& o : overrides) {
      const std::size_t eq = o.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + o + "'");
      flags.emplace_back(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
    }
    for (const SettingInfo& info : kSettings) {
      const CLI::Option* opt = apps[chosen]->get_option("--" + dashed(info.key));
      if (opt->count() > 0) flags.emplace_back(std::string(info.key), flag_values[chosen][std::string(info.key)]);
    }
    const Settings s = resolve_settings(
        config_file.empty() ? std::nullopt : std::optional<fs::path>(config_file), env, flags);
    if (chosen == "record") return cmd_record(s, out);
    if (chosen == "generate") return cmd_generate(s, out, err);
    if (chosen == "verify") return cmd_verify(s, out);
    if (chosen == "train") return cmd_train(s, out);
    if (chosen == "eval-policies") return cmd_eval_policies(s, out);
    if (chosen == "render") return cmd_render(s, out);
    return cmd_demo(s, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidConfig& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidSpec& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UnverifiedArtifacts& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailed;
  } catch (const Error& e) {
    // IoError, SchemaError, IntegrityError, TrajectoryMismatch, BackendError
    err << "input error: " << e.what() << '\n';
    return kExitMissingInput;
  }
}

}  // namespace car::cli
