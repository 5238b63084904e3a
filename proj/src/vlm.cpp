#include "car/vlm.hpp"

#include <algorithm>
#include <cctype>
#include <ctime>
#include <sstream>

#include "car/datastore.hpp"
#include "car/oracle_programs.hpp"

namespace car::vlm {

MaxAttemptsExceeded::MaxAttemptsExceeded(std::string slot, std::vector<std::string> diagnostics)
    : Error("no acceptable program for " + slot + " after " + std::to_string(diagnostics.size()) + " attempts" +
            (diagnostics.empty() ? std::string() : "; last: " + diagnostics.back())),
      slot_(std::move(slot)),
      diagnostics_(std::move(diagnostics)) {}

std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

// ---- prompts ----

namespace prompts {

std::string intro(std::string_view agent_description) {
  return "In this image, there is an agent that can move throughout the environment.  There may also be other "
         "relevant objects that the agent can interact with.  The agent is a " +
         std::string(agent_description) + ".";
}

std::string robotic_intro(std::string_view agent_description) {
  return "In this image, there is an agent that can move throughout the environment.  there may also be other "
         "relevant objects that the agent can interact with.  The agent is a " +
         std::string(agent_description) + ".";
}

const std::string_view kAgentPart =
    "What is the part of the agent that would most likely interact with objects? Give me only one object.";

const std::string_view kIdentifyAgent =
    "Can you write a script to identify the agent object from the image?  You should use the shape, edges, and "
    "color of the object to identify it as its possible other objects in the image may have the same color.  This "
    "should return the location of the agent along with {True, False} if it is found.  This script should not "
    "require input from me.";

const std::string_view kAgentAccepted =
    "This is the correct script to identify the agent.  Please remember this script.  I will refer to it as the "
    "\"agent_ID_script\".";

const std::string_view kObjectList =
    "Can you give a list of the most important objects in this image?  Do not give general objects like the walls "
    "or the grid.  Give me a list of objects and concise names with description.";

const std::string_view kShowGoal =
    "I am now going to show you an image of the game when the final goal was completed.";

const std::string_view kFinalGoal = "What do you think the final goal is?  Give me only one goal.";

std::string infer_tasks(int n) {
  const std::string k = std::to_string(n);
  return "Now, from this image, can you infer " + k +
         " sequential tasks that the agent must do before it reaches the final goal.  Give me the list of " + k +
         " tasks with descriptions of each task.  This list should be concise and should not contain general "
         "behaviors like: navigate the maze, or avoid walls.  The items you have identified in the image may help "
         "you come up with this list of tasks.   The tasks should be actionable and concise and must complete the "
         "final goal.";
}

std::string task_object(int task) {
  return "Now for Task " + std::to_string(task) +
         ", what is the most relevant object or objects in this task to reach or interact with.  This item should "
         "not be the agent.";
}

const std::string_view kIdentifyObject =
    "Can you write a script to identify this object(s) from the image?  You should use the shape, edges and color "
    "of the object to identify it as its possible other objects in the image may have the same color. You can only "
    "use the first image I gave you as input to this script.  This script should return the location of the "
    "object(s) and {True, False} if it is found.  Test by verifying the number of instances of the object found is "
    "correct. This script should not require input from me.";

std::string object_accepted(std::string_view item, std::string_view script) {
  return "This is the correct script to identify the " + std::string(item) +
         " item.  Please remember this script.  I will refer to it as the \"" + std::string(script) + "\".";
}

std::string task_done(int task) {
  return "How would you know if Task " + std::to_string(task) +
         " is done?  Please propose one best guess of the check for completion.  The type of check for completion "
         "you use should be implementable using a python script.  Please describe this check. The script can only "
         "use the first image I gave you.  You are allowed to compare this to the image from the initial frame.";
}

const std::string_view kTaskExtraObjects =
    "Are there any other objects that are absolutely essential to interact with or must be identified to check if "
    "this task has been completed.  Only list absolutely essential objects.";

namespace {

std::string quoted(const std::string& name) { return "“" + name + "”"; }

constexpr std::string_view kImplementHead =
    "Please implement this technique, you will only have access to a single frame at a time. If you would like to "
    "access the initial state and compare it to the current state or store information from the initial state, "
    "this is allowed. Please use the same ";

constexpr std::string_view kTechniques =
    "You must return False on the first image and true on the 2nd. A few useful techniques: Use the contours to "
    "determine if an object is inside of another, don’t approximate rectangles or radii.  Try to approximate "
    "shapes in contours as they may not be exact (or incomplete). You can do this by finding a convex hull of every "
    "contour which would always be closed and then approximating it down. Checking the shape of objects is useful "
    "once you have identified them by color.";

}  // namespace

std::string implement_task(const std::vector<std::string>& script_names) {
  std::string names;
  for (const std::string& n : script_names) names += quoted(n) + ", ";
  return std::string(kImplementHead) + names +
         "as part of your implementation.  The “agent_ID_script” may also help you. You can only use the "
         "first image I gave you as input to this script.  This script must return {True, False}. It may be useful "
         "to store the location of expected static objects from the initial image. This script should not require "
         "input from me.";
}

const std::string_view kGoalDone =
    "How would you know if the goal is done?  Please propose one best guess of the check for completion.  The type "
    "of check for completion you use should be implementable using a python script.  Please describe this check. "
    "The script can only use the first image I gave you.  You are allowed to compare this to the image from the "
    "initial frame.  Can you please tell me first if you must identify any new objects for this task.";

const std::string_view kGoalExtraObjects =
    "Are there any objects that you have not identified so far that must be identified to check the completion of "
    "the goal.";

std::string implement_goal(const std::vector<std::string>& script_names, bool robotic) {
  std::string names;
  for (std::size_t i = 0; i < script_names.size(); ++i) {
    names += quoted(script_names[i]);
    names += i == 0 ? " or, " : ", ";
  }
  std::string s = std::string(kImplementHead) + names + "as part of your implementation.";
  if (robotic) {
    s += " You can only use the first image I gave you as input to this script.  This script must return {True, "
         "False}. It may be useful to store the location of expected static objects from the initial image.  I will "
         "show you two images, the first image is of the initial state and the 2nd image is after the goal "
         "completion.  ";
    s += kTechniques;
    s += " This script should not require input from me.";
  } else {
    s += "  The “agent_ID_script” may also help you. You can only use the first image I gave you as input "
         "to this script.  This script must return {True, False}. It may be useful to store the location of expected "
         "static objects from the initial image.  I will show you two images, the first image is of the initial "
         "state and the 2nd image is after the goal completion.  ";
    s += kTechniques;
    s += "  This script should not require input from me.";
  }
  return s;
}

const std::string_view kIncrementalReward =
    "Could you also propose a real valued reward function that is incremental if possible?";

const std::string_view kRoboticGoalDone =
    "How would you know if the goal is done?  Please propose one best guess of the check for completion.  The type "
    "of check for completion you use should be implementable using a python script.  Please describe this check. "
    "The script can only use the first image I gave you.  You are allowed to compare this to the image from the "
    "initial frame.";

const std::string_view kRoboticEssentialObjects =
    "Give me the list of essential objects that must be identified to know if the goal has been completed.  Do not "
    "include the agent in this list.  Only give objects that are absolutely essential.";

const std::string_view kRoboticGoalDoneStationary =
    "How would you know if the goal is done?  Please propose one best guess of the check for completion.  The type "
    "of check for completion you use should be implementable using a python script.  Please describe this check. "
    "The script can only use the first image I gave you.  You are allowed to compare this to the image from the "
    "initial frame.  You can store the location of objects expected to be stationary.";

const std::string_view kFailIdentify =
    "Please try again and refine you approach. Please remember to identify objects using edges, shape and colour.  "
    "Please examine the shape and colour of this object from the image again.";

const std::string_view kFailSimplify =
    "Please try again and refine you approach. Please try to simplify your approach by only checking color or "
    "simple shapes.";

const std::string_view kFail = "Please try again and refine you approach.";

}  // namespace prompts

// ---- reference card ----

std::string reference_card() {
  std::ostringstream os;
  os << "REWARD PROGRAM LANGUAGE\n"
        "Scripts are not Python. Write every script as one program in this language, inside a single fenced\n"
        "code block (```). There are no loops, no imports and no I/O.\n\n"
        "program   := one or more  fn NAME() { statements }\n"
        "statement := let NAME = expr;  |  store \"key\" = expr;  |  if expr { ... } else { ... }  |  return expr;\n"
        "expr      := literals (true, 3, 2.5, \"red\"), names, calls, ! - * / % + - < <= > >= == != && ||\n"
        "Comments start with //. Helper functions take no arguments and must not recurse.\n\n"
        "Entry points, exactly one per program:\n"
        "  fn identify()  returns a detection   (object identification)\n"
        "  fn check()     returns true/false    (task or goal completion)\n"
        "  fn reward()    returns a number      (incremental reward)\n\n"
        "frame() is the image being judged; initial() is the first image of the episode. Values saved with\n"
        "store persist for the episode and are read back with recall(key); has(key) tests for them.\n"
        "Pixel coordinates: x to the right, y down. Colors:";
  for (Color c : kPalette) os << ' ' << color_name(c);
  os << ".\n\nBuiltins:\n";
  for (const dsl::BuiltinInfo& b : dsl::builtins()) os << "  " << b.signature << '\n';
  os << "\nExample identifier:\n"
        "```\n"
        "fn identify() {\n"
        "  let blobs = filter_area(contours(mask(frame(), \"blue\")), 20, 100000);\n"
        "  return detection(count(blobs) > 0, blobs);\n"
        "}\n"
        "```\n\n"
        "Example check:\n"
        "```\n"
        "fn check() {\n"
        "  if !has(\"start\") {\n"
        "    store \"start\" = centroid(largest(contours(mask(initial(), \"purple\"))));\n"
        "  }\n"
        "  let now = contours(mask(frame(), \"purple\"));\n"
        "  if count(now) == 0 {\n"
        "    return false;\n"
        "  }\n"
        "  return dist(centroid(largest(now)), recall(\"start\")) > 10.0;\n"
        "}\n"
        "```\n";
  return os.str();
}

std::string system_prompt() {
  return "You write programs that judge rendered images of a reinforcement-learning environment. Whenever a "
         "script is requested, answer with a program in the language below.\n\n" +
         reference_card();
}

// ---- code extraction ----

std::string extract_program(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  bool open = false;
  std::string body;
  std::optional<std::string> last;
  while (std::getline(in, line)) {
    const std::size_t first = line.find_first_not_of(" \t");
    const bool fence = first != std::string::npos && line.compare(first, 3, "```") == 0;
    if (fence) {
      if (open) last = body;
      open = !open;
      body.clear();
    } else if (open) {
      body += line;
      body += '\n';
    }
  }
  if (!last) throw NoCodeBlock("no fenced code block in the reply");
  return *last;
}

// ---- session log ----

std::string iso_timestamp(std::chrono::system_clock::time_point t) {
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
  const std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms % 1000));
  return out;
}

void SessionLog::add(const ChatMessage& m) {
  SessionRecord r;
  r.role = std::string(to_string(m.role));
  r.text = m.text;
  for (const dsl::FramePtr& f : m.images) r.image_hashes.push_back(frame_hash(*f));
  r.timestamp = clock ? clock() : iso_timestamp(std::chrono::system_clock::now());
  records.push_back(std::move(r));
}

// ---- replay ----

ReplayBackend::ReplayBackend(std::vector<SessionRecord> transcript) : transcript_(std::move(transcript)) {}

std::string ReplayBackend::complete(const std::vector<ChatMessage>& conversation) {
  for (std::size_t i = conv_seen_; i < conversation.size(); ++i) {
    const ChatMessage& m = conversation[i];
    if (cursor_ >= transcript_.size()) {
      throw ReplayDivergence("transcript ended before message " + std::to_string(i + 1));
    }
    const SessionRecord& r = transcript_[cursor_];
    std::vector<std::string> hashes;
    for (const dsl::FramePtr& f : m.images) hashes.push_back(frame_hash(*f));
    if (r.role != to_string(m.role) || r.text != m.text || r.image_hashes != hashes) {
      throw ReplayDivergence("message " + std::to_string(i + 1) + " differs from transcript line " +
                             std::to_string(cursor_ + 1));
    }
    ++cursor_;
  }
  conv_seen_ = conversation.size();
  if (cursor_ >= transcript_.size() || transcript_[cursor_].role != "assistant") {
    throw ReplayDivergence("transcript has no reply at line " + std::to_string(cursor_ + 1));
  }
  // The reply itself is matched on the next call, once the caller appends it.
  return transcript_[cursor_].text;
}

// ---- oracle ----

namespace {

std::string numbered(const std::vector<std::string>& items) {
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) s += std::to_string(i + 1) + ". " + items[i] + "\n";
  return s;
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

}  // namespace

OracleScript doorkey_oracle_script(int tile_px, int n) {
  if (n < 1 || n > 3) throw InvalidConfig("the DoorKey oracle knows 1 to 3 sub-tasks");
  const oracle::GridPrograms g = oracle::grid_programs(tile_px);
  OracleScript s;
  s.objects = numbered({"Agent: red triangle.", "Key: small yellow key in the left room.",
                        "Door: yellow square in the dividing wall.", "Goal: green square in the right room."});
  s.goal = "The agent reaches the green goal square.";
  s.agent_id = g.agent_id;
  const std::vector<std::string> tasks = {"Pick up the yellow key.", "Open the yellow door with the key.",
                                          "Walk through the door to the green goal square."};
  const std::vector<std::string> ids = {g.key_id, g.door_id, g.goal_id};
  const std::vector<std::string> checks = {g.key_check, g.door_check, g.goal_check};
  for (int i = 0; i < n; ++i) {
    s.tasks.push_back(tasks[static_cast<std::size_t>(i)]);
    s.task_identifiers.push_back({ids[static_cast<std::size_t>(i)]});
    s.checkers.push_back(checks[static_cast<std::size_t>(i)]);
  }
  s.goal_check = g.goal_check;
  return s;
}

OracleScript blockpush_oracle_script() {
  const oracle::PushPrograms p = oracle::push_programs();
  OracleScript s;
  s.objects = numbered({"Pusher: red disc.", "Block: blue square.", "Target: green square region."});
  s.goal = "Push the blue block into the green target square.";
  s.agent_part = "The red disc at the tip of the arm.";
  s.goal_identifiers = {p.block_id, p.target_id};
  s.goal_check = p.goal_check;
  s.reward = p.incremental_reward;
  return s;
}

OracleBackend::OracleBackend(OracleScript script, int flawed_attempts)
    : script_(std::move(script)), flawed_attempts_(flawed_attempts) {
  if (flawed_attempts < 0) throw InvalidConfig("flawed_attempts must be non-negative");
}

std::string OracleBackend::program_answer(const std::string& correct, dsl::ProgramKind kind) {
  if (flaws_left_ > 0) {
    const int k = flawed_attempts_ - flaws_left_;
    --flaws_left_;
    if (k % 2 == 0) return "I would look for the object by its color and then check its shape.";
    switch (kind) {
      case dsl::ProgramKind::Identify: return "```\nfn identify() {\n  return detection(false);\n}\n```\n";
      case dsl::ProgramKind::Check: return "```\nfn check() {\n  return false;\n}\n```\n";
      case dsl::ProgramKind::Reward: return "```\nfn reward() {\n  return 0.0;\n}\n```\n";
    }
  }
  std::string src = correct;
  if (!src.empty() && src.back() != '\n') src += '\n';
  return "Here is the program.\n\n```\n" + src + "```\n";
}

std::string OracleBackend::complete(const std::vector<ChatMessage>& conversation) {
  if (conversation.empty() || conversation.back().role != Role::User) throw BackendError("nothing to answer");
  const std::string& q = conversation.back().text;
  namespace P = prompts;
  auto ask_program = [&](const std::string& src, dsl::ProgramKind kind) {
    slot_ = src;
    slot_kind_ = kind;
    flaws_left_ = flawed_attempts_;
    return program_answer(slot_, kind);
  };
  auto at = [](const auto& v, std::size_t i, std::string_view what) -> const auto& {
    if (i >= v.size()) throw BackendError("oracle script has no " + std::string(what));
    return v[i];
  };

  if (q == P::kFail || q == P::kFailIdentify || q == P::kFailSimplify) {
    if (slot_.empty()) throw BackendError("retry before any program was requested");
    return program_answer(slot_, slot_kind_);
  }
  if (q == P::kAgentPart) return script_.agent_part;
  if (q == P::kIdentifyAgent) return ask_program(script_.agent_id, dsl::ProgramKind::Identify);
  if (q == P::kObjectList) return script_.objects;
  if (q == P::kFinalGoal) return script_.goal;
  if (starts_with(q, "Now, from this image, can you infer")) return numbered(script_.tasks);
  if (starts_with(q, "Now for Task ")) {
    task_ = std::stoi(q.substr(13));
    task_object_ = 0;
    goal_phase_ = false;
    return "The most relevant object is described in the task list.";
  }
  if (q == P::kIdentifyObject) {
    if (goal_phase_) return ask_program(at(script_.goal_identifiers, goal_object_++, "goal identifier"), dsl::ProgramKind::Identify);
    const auto& ids = at(script_.task_identifiers, static_cast<std::size_t>(task_ - 1), "task identifiers");
    return ask_program(at(ids, task_object_++, "task identifier"), dsl::ProgramKind::Identify);
  }
  if (q == P::kTaskExtraObjects) {
    const auto& ids = at(script_.task_identifiers, static_cast<std::size_t>(task_ - 1), "task identifiers");
    return task_object_ < ids.size() ? "Yes, one more object must be identified." : "No, no other objects are needed.";
  }
  if (q == P::kGoalDone || q == P::kRoboticGoalDone) {
    goal_phase_ = true;
    return "The goal is done when the final condition is visible in the image.";
  }
  if (q == P::kRoboticEssentialObjects) return numbered({"The block.", "The target region."});
  if (q == P::kGoalExtraObjects) {
    return goal_object_ < script_.goal_identifiers.size() ? "Yes, one more object must be identified."
                                                          : "No, every needed object is identified.";
  }
  if (starts_with(q, "Please implement this technique")) {
    if (q.find("I will show you two images") != std::string::npos) {
      return ask_program(script_.goal_check, dsl::ProgramKind::Check);
    }
    return ask_program(at(script_.checkers, static_cast<std::size_t>(task_ - 1), "checker"), dsl::ProgramKind::Check);
  }
  if (q == P::kIncrementalReward) {
    if (script_.reward.empty()) return "No incremental reward is available.";
    return ask_program(script_.reward, dsl::ProgramKind::Reward);
  }
  return "Understood.";
}

// ---- pipelines ----

void PipelineConfig::validate() const {
  if (n < 1) throw InvalidConfig("n must be at least 1");
  if (max_attempts < 1) throw InvalidConfig("max attempts must be at least 1");
  if (simplify_after < 1 || simplify_after >= max_attempts) {
    throw InvalidConfig("simplify-after must lie in [1, max attempts)");
  }
  if (agent_description.empty()) throw InvalidConfig("agent description must not be empty");
}

namespace {

std::string trim(std::string_view s) {
  const std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string_view::npos) return {};
  const std::size_t b = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(a, b - a + 1));
}

// "no", "No other objects", "None." all read as a negative answer.
bool negative(std::string_view reply) {
  const std::string t = trim(reply);
  return t.size() >= 2 && std::tolower(static_cast<unsigned char>(t[0])) == 'n' &&
         std::tolower(static_cast<unsigned char>(t[1])) == 'o';
}

// Items of a numbered or bulleted list; short of n, the rest are named by number.
std::vector<std::string> list_items(std::string_view reply, int n) {
  std::vector<std::string> out;
  std::istringstream in{std::string(reply)};
  std::string line;
  while (std::getline(in, line) && static_cast<int>(out.size()) < n) {
    std::string t = trim(line);
    std::size_t i = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
    if (i > 0 && i < t.size() && (t[i] == '.' || t[i] == ')')) {
      t = trim(std::string_view(t).substr(i + 1));
    } else if (!t.empty() && (t[0] == '-' || t[0] == '*') && t.size() > 1 && t[1] == ' ') {
      t = trim(std::string_view(t).substr(1));
    } else {
      continue;
    }
    t.erase(std::remove(t.begin(), t.end(), '*'), t.end());
    if (!t.empty()) out.push_back(t);
  }
  while (static_cast<int>(out.size()) < n) out.push_back("Task " + std::to_string(out.size() + 1));
  return out;
}

class Session {
 public:
  Session(const PipelineConfig& cfg, ChatBackend& backend, const VerifyCallback& verify, SessionLog* log)
      : cfg_(cfg), backend_(backend), verify_(verify), log_(log) {
    cfg.validate();
    push({Role::System, system_prompt(), {}});
  }

  std::string ask(std::string text, std::vector<dsl::FramePtr> images = {}) {
    push({Role::User, std::move(text), std::move(images)});
    std::string reply = backend_.complete(conversation_);
    push({Role::Assistant, reply, {}});
    return reply;
  }

  dsl::Program obtain(const ProgramSlot& slot, std::string prompt, dsl::ProgramKind kind, std::string_view fail,
                      std::vector<dsl::FramePtr> images = {}) {
    std::string reply = ask(std::move(prompt), std::move(images));
    std::vector<std::string> diagnostics;
    while (true) {
      std::string why;
      try {
        dsl::Program p = dsl::parse(extract_program(reply), kind);
        Verdict v;
        try {
          v = verify_(slot, p, artifacts);
        } catch (const dsl::EvalError& e) {
          v = {false, std::string("runtime error: ") + e.what()};
        }
        if (v.pass) {
          artifacts.failed_attempts.emplace_back(slot.name, static_cast<int>(diagnostics.size()));
          return p;
        }
        why = v.diagnostics.empty() ? "verification failed" : v.diagnostics;
      } catch (const NoCodeBlock& e) {
        why = e.what();
      } catch (const dsl::ParseError& e) {
        why = "parse error at " + to_string(e.pos()) + ": " + e.what();
      } catch (const dsl::WrongEntrypoint& e) {
        why = e.what();
      }
      diagnostics.push_back(why);
      const int failures = static_cast<int>(diagnostics.size());
      if (failures >= cfg_.max_attempts) throw MaxAttemptsExceeded(slot.name, diagnostics);
      reply = ask(std::string(failures >= cfg_.simplify_after ? prompts::kFailSimplify : fail));
    }
  }

  GeneratedArtifacts artifacts;

 private:
  void push(ChatMessage m) {
    if (log_ != nullptr) log_->add(m);
    conversation_.push_back(std::move(m));
  }

  const PipelineConfig& cfg_;
  ChatBackend& backend_;
  const VerifyCallback& verify_;
  SessionLog* log_;
  std::vector<ChatMessage> conversation_;
};

std::string id_script(int task, int object) {
  return "task_" + std::to_string(task) + "_o" + std::to_string(object) + "_ID_script";
}

}  // namespace

GeneratedArtifacts run_task_pipeline(const Frame& initial, const Frame& goal, const PipelineConfig& cfg,
                                     ChatBackend& backend, const VerifyCallback& verify, SessionLog* log) {
  namespace P = prompts;
  using dsl::ProgramKind;
  Session s(cfg, backend, verify, log);
  GeneratedArtifacts& art = s.artifacts;
  const auto first = std::make_shared<const Frame>(initial);
  const auto last = std::make_shared<const Frame>(goal);

  s.ask(P::intro(cfg.agent_description), {first});
  if (cfg.robotic) s.ask(std::string(P::kAgentPart));
  art.agent_identifier = s.obtain({SlotKind::AgentIdentifier, 0, 1, "agent_ID_script"}, std::string(P::kIdentifyAgent),
                                  ProgramKind::Identify, P::kFailIdentify);
  s.ask(std::string(P::kAgentAccepted));
  s.ask(std::string(P::kObjectList));
  s.ask(std::string(P::kShowGoal), {last});
  art.task_description = trim(s.ask(std::string(P::kFinalGoal)));
  art.subtask_descriptions = list_items(s.ask(P::infer_tasks(cfg.n)), cfg.n);

  std::vector<std::string> all_names;
  for (int task = 1; task <= cfg.n; ++task) {
    s.ask(P::task_object(task));
    art.identifiers.emplace_back();
    std::vector<std::string> names;
    auto identify = [&](int object) {
      const std::string name = id_script(task, object);
      art.identifiers.back().push_back(s.obtain({SlotKind::TaskIdentifier, task, object, name},
                                                std::string(P::kIdentifyObject), ProgramKind::Identify,
                                                P::kFailIdentify));
      s.ask(P::object_accepted("Task " + std::to_string(task), name));
      names.push_back(name);
    };
    identify(1);
    s.ask(P::task_done(task));
    if (!negative(s.ask(std::string(P::kTaskExtraObjects)))) identify(2);
    art.checkers.push_back(s.obtain({SlotKind::Checker, task, 0, "task_" + std::to_string(task) + "_check"},
                                    P::implement_task(names), ProgramKind::Check, P::kFail));
    all_names.insert(all_names.end(), names.begin(), names.end());
  }

  s.ask(std::string(P::kGoalDone));
  if (!negative(s.ask(std::string(P::kGoalExtraObjects)))) {
    const std::string name = "goal_o1_ID_script";
    art.goal_identifiers.push_back(s.obtain({SlotKind::GoalIdentifier, 0, 1, name}, std::string(P::kIdentifyObject),
                                            ProgramKind::Identify, P::kFailIdentify));
    s.ask(P::object_accepted("goal", name));
    all_names.push_back(name);
  }
  art.goal = s.obtain({SlotKind::Goal, 0, 0, "goal_check"}, P::implement_goal(all_names, false), ProgramKind::Check,
                      P::kFail, {first, last});
  if (cfg.robotic) {
    art.reward = s.obtain({SlotKind::Reward, 0, 0, "goal_reward"}, std::string(P::kIncrementalReward),
                          ProgramKind::Reward, P::kFail);
  }
  return std::move(s.artifacts);
}

GeneratedArtifacts run_robotic_pipeline(const Frame& initial, const Frame& goal, const PipelineConfig& cfg,
                                        ChatBackend& backend, const VerifyCallback& verify, SessionLog* log) {
  namespace P = prompts;
  using dsl::ProgramKind;
  Session s(cfg, backend, verify, log);
  GeneratedArtifacts& art = s.artifacts;
  const auto first = std::make_shared<const Frame>(initial);
  const auto last = std::make_shared<const Frame>(goal);

  s.ask(P::robotic_intro(cfg.agent_description), {first});
  s.ask(std::string(P::kAgentPart));
  s.ask(std::string(P::kObjectList));
  s.ask(std::string(P::kShowGoal), {last});
  art.task_description = trim(s.ask(std::string(P::kFinalGoal)));
  s.ask(std::string(P::kRoboticGoalDone));
  s.ask(std::string(P::kRoboticEssentialObjects));

  std::vector<std::string> names;
  auto identify = [&](int object) {
    const std::string name = id_script(1, object);
    art.goal_identifiers.push_back(s.obtain({SlotKind::GoalIdentifier, 0, object, name},
                                            std::string(P::kIdentifyObject), ProgramKind::Identify,
                                            P::kFailIdentify));
    s.ask(P::object_accepted("Task 1", name));
    names.push_back(name);
  };
  identify(1);
  if (!negative(s.ask(std::string(P::kGoalExtraObjects)))) identify(2);
  s.ask(std::string(P::kRoboticGoalDoneStationary));
  art.goal = s.obtain({SlotKind::Goal, 0, 0, "goal_check"}, P::implement_goal(names, true), ProgramKind::Check,
                      P::kFail, {first, last});
  art.reward = s.obtain({SlotKind::Reward, 0, 0, "goal_reward"}, std::string(P::kIncrementalReward),
                        ProgramKind::Reward, P::kFail);
  return std::move(s.artifacts);
}

// ---- verify callbacks ----

VerifyCallback trajectory_verifier(Corpus ex, Corpus rn, VerifierConfig cfg) {
  cfg.validate();
  if (!ex || ex->empty()) throw TrajectoryMismatch("verification needs at least one expert trajectory");
  if (!rn) throw TrajectoryMismatch("verification needs a random corpus");
  return [ex, rn, cfg](const ProgramSlot& slot, const dsl::Program& p, const GeneratedArtifacts& art) -> Verdict {
    const Frame& initial = ex->front().frames.front();
    switch (slot.kind) {
      case SlotKind::AgentIdentifier: {
        const IdentifierVerdict v = verify_identifier(p, initial, 1);
        return {v.pass, v.reason};
      }
      case SlotKind::TaskIdentifier:
      case SlotKind::GoalIdentifier: {
        const IdentifierVerdict v = verify_identifier(p, initial);
        return {v.pass, v.reason};
      }
      case SlotKind::Checker: {
        std::vector<dsl::Program> checkers = art.checkers;
        checkers.push_back(p);
        const VerificationReport r = verify_subtasks(checkers, *ex, *rn, cfg);
        return {r.subtasks.back().pass, r.subtasks.back().reason};
      }
      case SlotKind::Goal:
      case SlotKind::Reward: {
        const GoalReport g = verify_goal(p, *ex, *rn, cfg);
        return {g.pass, g.reason};
      }
    }
    return {};
  };
}

VerifyCallback accept_all() {
  return [](const ProgramSlot&, const dsl::Program&, const GeneratedArtifacts&) { return Verdict{true, {}}; };
}

}  // namespace car::vlm
