#pragma once

// Vision-language-model client and the two prompting pipelines that turn a
// pair of frames (initial, goal reached) into reward programs.
//
// Backends answer a whole conversation with one assistant message:
//   LiveBackend    chat-completions JSON over HTTP(S), PNG images inlined
//   ReplayBackend  answers from a recorded session transcript
//   OracleBackend  built-in answers with known-correct programs
//
// The pipelines send the fixed prompt sequence, pull the last fenced code
// block out of every program answer, parse it and hand it to a verify
// callback; failures are answered with the fixed retry messages.

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "car/artifacts.hpp"
#include "car/error.hpp"
#include "car/rewardlang.hpp"
#include "car/session.hpp"
#include "car/verifier.hpp"

namespace car::vlm {

class BackendError : public Error {
 public:
  using Error::Error;
};

// The replayed conversation no longer matches the transcript.
class ReplayDivergence : public BackendError {
 public:
  using BackendError::BackendError;
};

class NoCodeBlock : public Error {
 public:
  using Error::Error;
};

class MaxAttemptsExceeded : public Error {
 public:
  MaxAttemptsExceeded(std::string slot, std::vector<std::string> diagnostics);
  const std::string& slot() const { return slot_; }
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  std::string slot_;
  std::vector<std::string> diagnostics_;
};

enum class Role : std::uint8_t { System, User, Assistant };

std::string_view to_string(Role r);

struct ChatMessage {
  Role role = Role::User;
  std::string text;
  std::vector<dsl::FramePtr> images;  // never set on assistant messages
};

// Thread-safe implementations may serve several sessions at once.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  // Returns the assistant reply to the conversation so far. Throws BackendError.
  virtual std::string complete(const std::vector<ChatMessage>& conversation) = 0;
  virtual std::string_view name() const = 0;
};

// ---- live ----

inline constexpr std::string_view kApiKeyEnv = "CAR_VLM_API_KEY";

struct LiveConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o";
  int timeout_seconds = 120;
  int max_transport_retries = 3;  // extra sends of the identical request
  std::string api_key;            // empty: read kApiKeyEnv
};

struct HttpReply {
  int status = 0;
  std::string body;
};

// Sends one request body; throws BackendError on transport failure. The
// default goes through cpp-httplib; tests substitute their own.
using Transport = std::function<HttpReply(const std::string& body)>;

class LiveBackend : public ChatBackend {
 public:
  // Throws BackendError when no API key is configured, before anything is sent.
  explicit LiveBackend(LiveConfig cfg, Transport transport = {});
  std::string complete(const std::vector<ChatMessage>& conversation) override;
  std::string_view name() const override { return "live"; }

  // The JSON request body for a conversation.
  std::string request_body(const std::vector<ChatMessage>& conversation) const;
  // Pulls choices[0].message.content out of a response. Throws BackendError.
  static std::string parse_reply(const std::string& body);

 private:
  LiveConfig cfg_;
  Transport transport_;
};

// ---- replay ----

class ReplayBackend : public ChatBackend {
 public:
  explicit ReplayBackend(std::vector<SessionRecord> transcript);
  std::string complete(const std::vector<ChatMessage>& conversation) override;
  std::string_view name() const override { return "replay"; }

 private:
  std::vector<SessionRecord> transcript_;
  std::size_t cursor_ = 0;      // next transcript record to match
  std::size_t conv_seen_ = 0;   // conversation messages already matched
};

// ---- oracle ----

// Canned answers for one environment family. Programs are listed in the
// order the pipeline asks for them.
struct OracleScript {
  std::string objects;       // answer to the object-list question
  std::string goal;          // inferred final goal
  std::vector<std::string> tasks;
  std::string agent_part;    // robotic pipelines only
  std::string agent_id;      // agent identifier source (task pipeline)
  // Object identifiers per task; the first answers "identify this object",
  // any further ones follow a "yes" to the extra-objects question.
  std::vector<std::vector<std::string>> task_identifiers;
  std::vector<std::string> checkers;
  std::vector<std::string> goal_identifiers;
  std::string goal_check;
  std::string reward;  // empty when no incremental reward is offered
};

OracleScript doorkey_oracle_script(int tile_px, int n);
OracleScript blockpush_oracle_script();

class OracleBackend : public ChatBackend {
 public:
  // The first `flawed_attempts` answers for every program slot are wrong,
  // alternating between prose without code and a program that fails
  // verification.
  explicit OracleBackend(OracleScript script, int flawed_attempts = 0);
  std::string complete(const std::vector<ChatMessage>& conversation) override;
  std::string_view name() const override { return "oracle"; }

 private:
  std::string program_answer(const std::string& correct, dsl::ProgramKind kind);

  OracleScript script_;
  int flawed_attempts_;
  int flaws_left_ = 0;
  std::string slot_;  // source of the program currently being asked for
  dsl::ProgramKind slot_kind_ = dsl::ProgramKind::Check;
  int task_ = 0;      // 1-based task of the last "Now for Task" prompt
  bool goal_phase_ = false;  // past the goal-done question
  std::size_t task_object_ = 0;
  std::size_t goal_object_ = 0;
};

// ---- pipelines ----

struct PipelineConfig {
  int n = 3;
  std::string agent_description = "red triangle";
  int max_attempts = 12;
  int simplify_after = 5;
  // Adds the robotic-agent questions to the task pipeline.
  bool robotic = false;
  std::string backend = "oracle";  // informational, echoed in configs

  // Throws InvalidConfig.
  void validate() const;
};

enum class SlotKind : std::uint8_t { AgentIdentifier, TaskIdentifier, Checker, GoalIdentifier, Goal, Reward };

struct ProgramSlot {
  SlotKind kind = SlotKind::Checker;
  int task = 0;    // 1-based, for task slots
  int object = 0;  // 1-based, for identifier slots
  std::string name;
};

struct Verdict {
  bool pass = false;
  std::string diagnostics;
};

// Judges one parsed program given everything accepted so far.
using VerifyCallback = std::function<Verdict(const ProgramSlot&, const dsl::Program&, const GeneratedArtifacts&)>;

// Identifiers must find something on the initial frame (the agent exactly
// once); checkers are verified in order with their predecessors; goals by
// recency; rewards by expert/random separation.
// Corpora are shared, not copied; they can be large.
using Corpus = std::shared_ptr<const std::vector<Trajectory>>;
VerifyCallback trajectory_verifier(Corpus expert, Corpus random, VerifierConfig cfg);

// Accepts every program that parses.
VerifyCallback accept_all();

// Receives every message as it is sent or received.
struct SessionLog {
  std::vector<SessionRecord> records;
  // Defaults to the system clock; tests pin it.
  std::function<std::string()> clock;

  void add(const ChatMessage& m);
};

std::string iso_timestamp(std::chrono::system_clock::time_point t);

// Last fenced block, without the fence lines. Throws NoCodeBlock.
std::string extract_program(std::string_view text);

// The system message: role preamble plus the DSL reference card.
std::string system_prompt();
std::string reference_card();

GeneratedArtifacts run_task_pipeline(const Frame& initial, const Frame& goal, const PipelineConfig& cfg,
                                     ChatBackend& backend, const VerifyCallback& verify, SessionLog* log = nullptr);

GeneratedArtifacts run_robotic_pipeline(const Frame& initial, const Frame& goal, const PipelineConfig& cfg,
                                        ChatBackend& backend, const VerifyCallback& verify,
                                        SessionLog* log = nullptr);

// ---- fixed prompt text ----

namespace prompts {

std::string intro(std::string_view agent_description);  // task pipeline
std::string robotic_intro(std::string_view agent_description);
extern const std::string_view kAgentPart;
extern const std::string_view kIdentifyAgent;
extern const std::string_view kAgentAccepted;
extern const std::string_view kObjectList;
extern const std::string_view kShowGoal;
extern const std::string_view kFinalGoal;
std::string infer_tasks(int n);
std::string task_object(int task);
extern const std::string_view kIdentifyObject;
// `item` is e.g. "Task 1" or "goal"; `script` the name the program is given.
std::string object_accepted(std::string_view item, std::string_view script);
std::string task_done(int task);
extern const std::string_view kTaskExtraObjects;
std::string implement_task(const std::vector<std::string>& script_names);
extern const std::string_view kGoalDone;
extern const std::string_view kGoalExtraObjects;
// The robotic wording drops the agent_ID_script hint.
std::string implement_goal(const std::vector<std::string>& script_names, bool robotic);
extern const std::string_view kIncrementalReward;
extern const std::string_view kRoboticGoalDone;
extern const std::string_view kRoboticEssentialObjects;
extern const std::string_view kRoboticGoalDoneStationary;

extern const std::string_view kFailIdentify;
extern const std::string_view kFailSimplify;
extern const std::string_view kFail;

}  // namespace prompts

}  // namespace car::vlm
