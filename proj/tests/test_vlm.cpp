#include <gtest/gtest.h>

#include <cstdlib>

#include "car/datastore.hpp"
#include "car/oracle_programs.hpp"
#include "car/vlm.hpp"
#include "fixtures.hpp"
#include "json.hpp"

using namespace car;
using namespace car::vlm;
using car::test::shared_doorkey_corpora;

namespace {

struct Frames {
  Frame initial, goal;
};

Frames doorkey_frames() {
  const Trajectory& t = shared_doorkey_corpora().expert->front();
  return {t.frames.front(), t.frames.back()};
}

Frames push_frames() {
  const PushRollout r = rollout_push(PushConfig{}, PolicyKind::Expert, 0);
  return {r.traj.frames.front(), r.traj.frames.back()};
}

VerifyCallback grid_verifier() {
  const auto& c = shared_doorkey_corpora();
  return trajectory_verifier(c.expert, c.random, {});
}

PipelineConfig robotic_cfg() {
  PipelineConfig cfg;
  cfg.n = 1;
  cfg.robotic = true;
  cfg.agent_description = "robotic arm";
  return cfg;
}

SessionLog pinned_log() {
  SessionLog log;
  log.clock = [] { return std::string("2026-01-01T00:00:00.000Z"); };
  return log;
}

std::vector<const SessionRecord*> users(const SessionLog& log) {
  std::vector<const SessionRecord*> out;
  for (const SessionRecord& r : log.records)
    if (r.role == "user") out.push_back(&r);
  return out;
}

// Canonical text of every program, in slot order, for artifact comparison.
std::string fingerprint(const GeneratedArtifacts& a) {
  std::string s = a.task_description + "\n";
  for (const auto& d : a.subtask_descriptions) s += d + "\n";
  if (a.agent_identifier) s += dsl::format(*a.agent_identifier);
  for (const auto& row : a.identifiers)
    for (const auto& p : row) s += dsl::format(p);
  for (const auto& p : a.checkers) s += dsl::format(p);
  for (const auto& p : a.goal_identifiers) s += dsl::format(p);
  if (a.goal) s += dsl::format(*a.goal);
  if (a.reward) s += dsl::format(*a.reward);
  for (const auto& [slot, n] : a.failed_attempts) s += slot + "=" + std::to_string(n) + "\n";
  return s;
}

bool starts(const std::string& s, std::string_view prefix) { return s.rfind(prefix, 0) == 0; }

class EnvGuard {
 public:
  EnvGuard() {
    if (const char* v = std::getenv(std::string(kApiKeyEnv).c_str())) saved_ = v;
    unsetenv(std::string(kApiKeyEnv).c_str());
  }
  ~EnvGuard() {
    if (saved_) setenv(std::string(kApiKeyEnv).c_str(), saved_->c_str(), 1);
  }

 private:
  std::optional<std::string> saved_;
};

}  // namespace

TEST(Extract, FencedBlocks) {
  EXPECT_EQ(extract_program("Here:\n```\nfn check() { return true; }\n```\nDone."), "fn check() { return true; }\n");
  EXPECT_EQ(extract_program("```rust\nfirst\n```\ntext\n```\nsecond\nline\n```"), "second\nline\n");
  EXPECT_THROW(extract_program("Just prose, no code."), NoCodeBlock);
  EXPECT_THROW(extract_program("```\nnever closed"), NoCodeBlock);
  EXPECT_EQ(extract_program("  ```\n  indented\n  ```"), "  indented\n");
}

TEST(Pipeline, ConfigValidation) {
  PipelineConfig c;
  EXPECT_NO_THROW(c.validate());
  c.n = 0;
  EXPECT_THROW(c.validate(), InvalidConfig);
  c = {};
  c.simplify_after = c.max_attempts;
  EXPECT_THROW(c.validate(), InvalidConfig);
  c = {};
  c.max_attempts = 0;
  EXPECT_THROW(c.validate(), InvalidConfig);
}

TEST(Pipeline, TaskMessageOrderIsGolden) {
  const Frames f = doorkey_frames();
  OracleBackend backend(doorkey_oracle_script(8, 3));
  SessionLog log = pinned_log();
  PipelineConfig cfg;
  run_task_pipeline(f.initial, f.goal, cfg, backend, accept_all(), &log);

  ASSERT_EQ(log.records.front().role, "system");
  std::vector<std::pair<std::string, std::size_t>> golden = {
      {"In this image, there is an agent that can move throughout the environment.", 1},
      {"Can you write a script to identify the agent object from the image?", 0},
      {"This is the correct script to identify the agent.", 0},
      {"Can you give a list of the most important objects in this image?", 0},
      {"I am now going to show you an image of the game when the final goal was completed.", 1},
      {"What do you think the final goal is?", 0},
      {"Now, from this image, can you infer 3 sequential tasks", 0},
  };
  for (int t = 1; t <= 3; ++t) {
    const std::string k = std::to_string(t);
    golden.push_back({"Now for Task " + k + ", what is the most relevant object", 0});
    golden.push_back({"Can you write a script to identify this object(s) from the image?", 0});
    golden.push_back({"This is the correct script to identify the Task " + k + " item.", 0});
    golden.push_back({"How would you know if Task " + k + " is done?", 0});
    golden.push_back({"Are there any other objects that are absolutely essential", 0});
    golden.push_back({"Please implement this technique", 0});
  }
  golden.push_back({"How would you know if the goal is done?", 0});
  golden.push_back({"Are there any objects that you have not identified so far", 0});
  golden.push_back({"Please implement this technique", 2});

  const auto u = users(log);
  ASSERT_EQ(u.size(), golden.size());
  for (std::size_t i = 0; i < golden.size(); ++i) {
    EXPECT_TRUE(starts(u[i]->text, golden[i].first)) << i << ": " << u[i]->text.substr(0, 80);
    EXPECT_EQ(u[i]->image_hashes.size(), golden[i].second) << i;
  }
  EXPECT_NE(u[0]->text.find("The agent is a red triangle"), std::string::npos);
  EXPECT_NE(u[2]->text.find("\"agent_ID_script\""), std::string::npos);
  EXPECT_NE(u[9]->text.find("task_1_o1_ID_script"), std::string::npos);
  // Users and assistants alternate after the system message.
  for (std::size_t i = 1; i < log.records.size(); ++i)
    EXPECT_EQ(log.records[i].role, i % 2 ? "user" : "assistant") << i;
}

TEST(Pipeline, RoboticMessageOrderIsGolden) {
  const Frames f = push_frames();
  OracleBackend backend(blockpush_oracle_script());
  SessionLog log = pinned_log();
  const GeneratedArtifacts a = run_robotic_pipeline(f.initial, f.goal, robotic_cfg(), backend, accept_all(), &log);

  const std::vector<std::pair<std::string, std::size_t>> golden = {
      {"In this image, there is an agent that can move throughout the environment.", 1},
      {"What is the part of the agent that would most likely interact with objects?", 0},
      {"Can you give a list of the most important objects in this image?", 0},
      {"I am now going to show you an image of the game when the final goal was completed.", 1},
      {"What do you think the final goal is?", 0},
      {"How would you know if the goal is done?", 0},
      {"Give me the list of essential objects that must be identified", 0},
      {"Can you write a script to identify this object(s) from the image?", 0},
      {"This is the correct script to identify", 0},
      {"Are there any objects that you have not identified so far", 0},
      {"Can you write a script to identify this object(s) from the image?", 0},
      {"This is the correct script to identify", 0},
      {"How would you know if the goal is done?", 0},
      {"Please implement this technique", 2},
      {"Could you also propose a real valued reward function that is incremental if possible?", 0},
  };
  const auto u = users(log);
  ASSERT_EQ(u.size(), golden.size());
  for (std::size_t i = 0; i < golden.size(); ++i) {
    EXPECT_TRUE(starts(u[i]->text, golden[i].first)) << i << ": " << u[i]->text.substr(0, 80);
    EXPECT_EQ(u[i]->image_hashes.size(), golden[i].second) << i;
  }
  EXPECT_NE(u[0]->text.find("The agent is a robotic arm."), std::string::npos);
  EXPECT_NE(u[12]->text.find("expected to be stationary"), std::string::npos);
  EXPECT_NE(u[13]->text.find("You must return False on the first image and true on the 2nd."), std::string::npos);
  EXPECT_EQ(u[13]->text.find("agent_ID_script"), std::string::npos);
  EXPECT_TRUE(a.checkers.empty());
  ASSERT_TRUE(a.goal);
  ASSERT_TRUE(a.reward);
  EXPECT_TRUE(dsl::same_structure(*a.reward, dsl::parse_any(oracle::push_programs().incremental_reward)));
}

TEST(Pipeline, RoboticGoalCheckSeparatesTheTwoImages) {
  const Frames f = push_frames();
  OracleBackend backend(blockpush_oracle_script());
  const GeneratedArtifacts a = run_robotic_pipeline(f.initial, f.goal, robotic_cfg(), backend, accept_all());
  dsl::EvalContext ctx;
  ctx.begin_episode(std::make_shared<const Frame>(f.initial));
  ctx.frame = ctx.initial;
  EXPECT_FALSE(dsl::eval_check(*a.goal, ctx));
  ctx.frame = std::make_shared<const Frame>(f.goal);
  EXPECT_TRUE(dsl::eval_check(*a.goal, ctx));
}

TEST(Pipeline, SystemMessageCarriesReferenceCard) {
  const std::string s = system_prompt();
  EXPECT_NE(s.find(reference_card()), std::string::npos);
  for (const dsl::BuiltinInfo& b : dsl::builtins()) EXPECT_NE(s.find(b.signature), std::string::npos) << b.name;
}

TEST(Pipeline, OracleRunPassesVerificationFirstTime) {
  const Frames f = doorkey_frames();
  OracleBackend backend(doorkey_oracle_script(8, 3));
  PipelineConfig cfg;
  const GeneratedArtifacts a = run_task_pipeline(f.initial, f.goal, cfg, backend, grid_verifier());
  const OracleScript script = doorkey_oracle_script(8, 3);
  ASSERT_EQ(a.checkers.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_TRUE(dsl::same_structure(a.checkers[i], dsl::parse_any(script.checkers[i]))) << i;
  ASSERT_TRUE(a.goal);
  EXPECT_EQ(a.subtask_descriptions.size(), 3u);
  EXPECT_FALSE(a.task_description.empty());
  for (const auto& [slot, n] : a.failed_attempts) EXPECT_EQ(n, 0) << slot;
  EXPECT_GE(a.failed_attempts.size(), 8u);
}

TEST(Pipeline, FlawedAnswersAreCountedPerSlot) {
  const Frames f = doorkey_frames();
  OracleBackend backend(doorkey_oracle_script(8, 2), 2);
  PipelineConfig cfg;
  cfg.n = 2;
  SessionLog log = pinned_log();
  const GeneratedArtifacts a = run_task_pipeline(f.initial, f.goal, cfg, backend, grid_verifier(), &log);
  ASSERT_FALSE(a.failed_attempts.empty());
  for (const auto& [slot, n] : a.failed_attempts) EXPECT_EQ(n, 2) << slot;
  EXPECT_EQ(a.failed_attempts.front().first, "agent_ID_script");
  int identify_retries = 0, plain_retries = 0;
  for (const SessionRecord* r : users(log)) {
    if (starts(r->text, "Please try again and refine you approach. Please remember")) ++identify_retries;
    if (r->text == "Please try again and refine you approach.") ++plain_retries;
  }
  // Identifier slots: agent, task 1, task 2. Program slots: 2 checkers and the goal.
  EXPECT_EQ(identify_retries, 3 * 2);
  EXPECT_EQ(plain_retries, 3 * 2);
}

TEST(Pipeline, SimplifyFromTheFifthFailure) {
  const Frames f = doorkey_frames();
  OracleBackend backend(doorkey_oracle_script(8, 1), 6);
  PipelineConfig cfg;
  cfg.n = 1;
  SessionLog log = pinned_log();
  run_task_pipeline(f.initial, f.goal, cfg, backend, grid_verifier(), &log);
  // The agent slot is asked first; its six failures are answered in order.
  std::vector<std::string> retries;
  for (const SessionRecord* r : users(log)) {
    if (starts(r->text, "This is the correct script to identify the agent")) break;
    if (starts(r->text, "Please try again")) retries.push_back(r->text);
  }
  ASSERT_EQ(retries.size(), 6u);
  for (int i = 0; i < 4; ++i) EXPECT_NE(retries[i].find("Please remember"), std::string::npos) << i;
  for (int i = 4; i < 6; ++i)
    EXPECT_EQ(retries[i],
              "Please try again and refine you approach. Please try to simplify your approach by only checking color "
              "or simple shapes.")
        << i;
}

TEST(Pipeline, MaxAttemptsCarriesDiagnostics) {
  const Frames f = doorkey_frames();
  OracleBackend backend(doorkey_oracle_script(8, 1), 4);
  PipelineConfig cfg;
  cfg.n = 1;
  cfg.max_attempts = 3;
  cfg.simplify_after = 2;
  try {
    run_task_pipeline(f.initial, f.goal, cfg, backend, grid_verifier());
    FAIL() << "expected MaxAttemptsExceeded";
  } catch (const MaxAttemptsExceeded& e) {
    EXPECT_EQ(e.slot(), "agent_ID_script");
    ASSERT_EQ(e.diagnostics().size(), 3u);
    EXPECT_NE(e.diagnostics()[0].find("no fenced code block"), std::string::npos) << e.diagnostics()[0];
    EXPECT_NE(e.diagnostics()[1].find("found=false"), std::string::npos) << e.diagnostics()[1];
  }
}

TEST(Replay, ReproducesArtifactsWithoutTheOracle) {
  const Frames f = doorkey_frames();
  OracleBackend oracle(doorkey_oracle_script(8, 2), 2);
  PipelineConfig cfg;
  cfg.n = 2;
  SessionLog first = pinned_log();
  const GeneratedArtifacts a = run_task_pipeline(f.initial, f.goal, cfg, oracle, grid_verifier(), &first);

  // Through the on-disk format, as the CLI does it.
  const auto transcript = session_from_jsonl(session_to_jsonl(first.records));
  for (int run = 0; run < 2; ++run) {
    ReplayBackend replay(transcript);
    SessionLog again = pinned_log();
    const GeneratedArtifacts b = run_task_pipeline(f.initial, f.goal, cfg, replay, grid_verifier(), &again);
    EXPECT_EQ(fingerprint(b), fingerprint(a));
    EXPECT_EQ(session_to_jsonl(again.records), session_to_jsonl(first.records));
  }
}

TEST(Replay, RoboticReplayIsDeterministic) {
  const Frames f = push_frames();
  OracleBackend oracle(blockpush_oracle_script());
  SessionLog first = pinned_log();
  const GeneratedArtifacts a = run_robotic_pipeline(f.initial, f.goal, robotic_cfg(), oracle, accept_all(), &first);
  ReplayBackend replay(first.records);
  EXPECT_EQ(fingerprint(run_robotic_pipeline(f.initial, f.goal, robotic_cfg(), replay, accept_all())), fingerprint(a));
}

TEST(Replay, DivergenceIsReported) {
  const Frames f = doorkey_frames();
  OracleBackend oracle(doorkey_oracle_script(8, 1));
  PipelineConfig cfg;
  cfg.n = 1;
  SessionLog log = pinned_log();
  run_task_pipeline(f.initial, f.goal, cfg, oracle, accept_all(), &log);

  // A different goal image.
  {
    ReplayBackend replay(log.records);
    EXPECT_THROW(run_task_pipeline(f.initial, f.initial, cfg, replay, accept_all()), ReplayDivergence);
  }
  // A different agent description changes the first user message.
  {
    ReplayBackend replay(log.records);
    PipelineConfig other = cfg;
    other.agent_description = "blue circle";
    EXPECT_THROW(run_task_pipeline(f.initial, f.goal, other, replay, accept_all()), ReplayDivergence);
  }
  // A truncated transcript.
  {
    auto cut = log.records;
    cut.resize(cut.size() / 2);
    ReplayBackend replay(cut);
    EXPECT_THROW(run_task_pipeline(f.initial, f.goal, cfg, replay, accept_all()), ReplayDivergence);
  }
}

TEST(Live, MissingKeyFailsBeforeSending) {
  EnvGuard guard;
  int sends = 0;
  EXPECT_THROW(LiveBackend(LiveConfig{}, [&](const std::string&) {
                 ++sends;
                 return HttpReply{200, "{}"};
               }),
               BackendError);
  EXPECT_EQ(sends, 0);
}

TEST(Live, KeyFromEnvironment) {
  EnvGuard guard;
  setenv(std::string(kApiKeyEnv).c_str(), "sk-test", 1);
  EXPECT_NO_THROW(LiveBackend(LiveConfig{}, [](const std::string&) { return HttpReply{200, "{}"}; }));
}

TEST(Live, RequestBodyShape) {
  LiveConfig cfg;
  cfg.api_key = "k";
  cfg.model = "some-model";
  const LiveBackend b(cfg, [](const std::string&) { return HttpReply{}; });
  const Frame img(4, 3, rgb_of(Color::Red));
  const std::vector<ChatMessage> conv = {{Role::System, "sys", {}},
                                         {Role::User, "look", {std::make_shared<const Frame>(img)}},
                                         {Role::Assistant, "ok", {}}};
  const auto j = nlohmann::json::parse(b.request_body(conv));
  EXPECT_EQ(j["model"], "some-model");
  ASSERT_EQ(j["messages"].size(), 3u);
  EXPECT_EQ(j["messages"][0]["role"], "system");
  EXPECT_EQ(j["messages"][0]["content"], "sys");
  EXPECT_EQ(j["messages"][2]["role"], "assistant");
  const auto& parts = j["messages"][1]["content"];
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0]["text"], "look");
  const std::string url = parts[1]["image_url"]["url"];
  // Base64 of the PNG signature.
  EXPECT_TRUE(starts(url, "data:image/png;base64,iVBORw0KGgo")) << url.substr(0, 40);

  const std::vector<ChatMessage> bad = {{Role::Assistant, "x", {std::make_shared<const Frame>(img)}}};
  EXPECT_THROW(b.request_body(bad), BackendError);
}

TEST(Live, ParseReply) {
  EXPECT_EQ(LiveBackend::parse_reply(R"({"choices":[{"message":{"role":"assistant","content":"hi"}}]})"), "hi");
  EXPECT_EQ(LiveBackend::parse_reply(
                R"({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]})"),
            "ab");
  EXPECT_THROW(LiveBackend::parse_reply("not json"), BackendError);
  EXPECT_THROW(LiveBackend::parse_reply(R"({"error":{"message":"quota"}})"), BackendError);
}

TEST(Live, TransportRetries) {
  LiveConfig cfg;
  cfg.api_key = "k";
  cfg.max_transport_retries = 3;
  const std::string ok = R"({"choices":[{"message":{"content":"done"}}]})";
  std::vector<std::string> bodies;
  int calls = 0;
  LiveBackend flaky(cfg, [&](const std::string& body) -> HttpReply {
    bodies.push_back(body);
    if (++calls == 1) throw BackendError("timeout");
    if (calls == 2) return {503, "busy"};
    return {200, ok};
  });
  const std::vector<ChatMessage> conv = {{Role::User, "q", {}}};
  EXPECT_EQ(flaky.complete(conv), "done");
  EXPECT_EQ(calls, 3);
  EXPECT_EQ(bodies[0], bodies[2]);  // identical resend

  calls = 0;
  LiveBackend down(cfg, [&](const std::string&) -> HttpReply {
    ++calls;
    return {500, "boom"};
  });
  EXPECT_THROW(down.complete(conv), BackendError);
  EXPECT_EQ(calls, 4);

  calls = 0;
  LiveBackend denied(cfg, [&](const std::string&) -> HttpReply {
    ++calls;
    return {401, "bad key"};
  });
  EXPECT_THROW(denied.complete(conv), BackendError);
  EXPECT_EQ(calls, 1);
}

TEST(Session, LogUsesClockAndHashesImages) {
  SessionLog log = pinned_log();
  const Frame img(2, 2, rgb_of(Color::Green));
  log.add({Role::User, "look", {std::make_shared<const Frame>(img)}});
  log.add({Role::Assistant, "seen", {}});
  ASSERT_EQ(log.records.size(), 2u);
  EXPECT_EQ(log.records[0].timestamp, "2026-01-01T00:00:00.000Z");
  ASSERT_EQ(log.records[0].image_hashes.size(), 1u);
  EXPECT_EQ(log.records[0].image_hashes[0].size(), 64u);
  EXPECT_TRUE(log.records[1].image_hashes.empty());
  EXPECT_EQ(iso_timestamp(std::chrono::system_clock::time_point{}), "1970-01-01T00:00:00.000Z");
  EXPECT_EQ(iso_timestamp(std::chrono::system_clock::time_point{std::chrono::milliseconds(1'700'000'000'123)}),
            "2023-11-14T22:13:20.123Z");
}
