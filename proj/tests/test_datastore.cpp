#include <gtest/gtest.h>

#include <fstream>

#include "car/datastore.hpp"
#include "car/oracle_programs.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace car;
using car::test::TempDir;

namespace {

// Small fixed trajectory whose manifest hash is pinned below.
Trajectory tiny() {
  Trajectory t;
  t.env_id = "doorkey-8x8";
  t.policy = "expert";
  t.seed = 7;
  for (int i = 0; i < 3; ++i) {
    Frame f(4, 4, rgb_of(Color::Black));
    f.set(i, i, rgb_of(Color::Red));
    t.frames.push_back(f);
  }
  t.actions = {{2.0}, {0.0}};
  t.rewards = {0.0, 1.0};
  return t;
}

Trajectory rollout(int frames_wanted) {
  GridSpec spec;
  spec.tile_px = 8;
  const GridEnv env(spec);
  Trajectory t = rollout_grid(env, PolicyKind::Random, 5).traj;
  t.frames.resize(static_cast<std::size_t>(frames_wanted));
  t.actions.resize(static_cast<std::size_t>(frames_wanted - 1));
  t.rewards.resize(static_cast<std::size_t>(frames_wanted - 1));
  return t;
}

void edit_manifest(const fs::path& dir, const std::function<void(nlohmann::json&)>& edit) {
  nlohmann::json j = nlohmann::json::parse(read_text(dir / "manifest.json"));
  edit(j);
  write_text(dir / "manifest.json", j.dump(2));
}

}  // namespace

TEST(Hash, KnownVectors) {
  EXPECT_EQ(sha256_hex(std::string_view("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(std::string_view("")), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Png, RoundTripIsExact) {
  GridSpec spec;
  const Frame f = grid_render(grid_reset(spec, 3), spec);
  const auto bytes = encode_png(f);
  EXPECT_EQ(decode_png(bytes), f);
  EXPECT_EQ(bytes[1], 'P');
  EXPECT_THROW(decode_png(std::vector<std::uint8_t>{1, 2, 3}), IntegrityError);
}

TEST(Trajectory, RoundTripTenFrames) {
  TempDir dir("traj");
  const Trajectory t = rollout(10);
  const TrajectoryManifest m = save_trajectory(t, dir.path(), "spec text");
  EXPECT_EQ(m.frame_count, 10);
  EXPECT_EQ(m.frames.front().file, "frame_000000.png");
  EXPECT_EQ(m.spec_hash, sha256_hex(std::string_view("spec text")));
  TrajectoryManifest loaded;
  const Trajectory back = load_trajectory(dir.path(), &loaded);
  EXPECT_EQ(back, t);
  EXPECT_EQ(loaded.content_hash, m.content_hash);
}

TEST(Trajectory, ManifestHashIsStableAndPinned) {
  TempDir a("a"), b("b");
  const auto ma = save_trajectory(tiny(), a.path(), "fixture");
  const auto mb = save_trajectory(tiny(), b.path(), "fixture");
  EXPECT_EQ(ma.content_hash, mb.content_hash);
  EXPECT_EQ(read_text(a / "manifest.json"), read_text(b / "manifest.json"));
  // Computed once from this fixture; covers PNG bytes, frame hashes and manifest layout.
  EXPECT_EQ(ma.content_hash, "8166e30bf505d15f8319ec4e94168825f59f177a1803bc7a6b669a5532fc0193");
}

TEST(Trajectory, WrongFrameCountIsIntegrityError) {
  TempDir dir("count");
  save_trajectory(rollout(10), dir.path());
  edit_manifest(dir.path(), [](nlohmann::json& j) { j["frame_count"] = 9; });
  EXPECT_THROW(load_trajectory(dir.path()), IntegrityError);
}

TEST(Trajectory, TamperingIsDetected) {
  TempDir dir("tamper");
  const Trajectory t = rollout(5);
  save_trajectory(t, dir.path());
  // A frame replaced on disk.
  write_png(dir / "frame_000002.png", Frame(t.frames[0].width(), t.frames[0].height(), rgb_of(Color::Blue)));
  EXPECT_THROW(load_trajectory(dir.path()), IntegrityError);
  save_trajectory(t, dir.path());
  EXPECT_NO_THROW(load_trajectory(dir.path()));
  // A reward edited in the manifest breaks the content hash.
  edit_manifest(dir.path(), [](nlohmann::json& j) { j["rewards"][0] = 0.5; });
  EXPECT_THROW(load_trajectory(dir.path()), IntegrityError);
  save_trajectory(t, dir.path());
  fs::remove(dir / "frame_000004.png");
  EXPECT_ANY_THROW(load_trajectory(dir.path()));
}

TEST(Trajectory, SchemaAndIoErrors) {
  TempDir dir("schema");
  EXPECT_THROW(load_trajectory(dir / "missing"), IoError);
  write_text(dir / "manifest.json", "{not json");
  EXPECT_THROW(load_trajectory(dir.path()), SchemaError);
  write_text(dir / "manifest.json", R"({"version":"v9"})");
  EXPECT_THROW(load_trajectory(dir.path()), SchemaError);
}

TEST(Trajectory, LoadDoesNotWrite) {
  TempDir dir("ro");
  save_trajectory(rollout(4), dir.path());
  std::map<std::string, fs::file_time_type> before;
  for (const auto& e : fs::directory_iterator(dir.path())) before[e.path().filename()] = e.last_write_time();
  load_trajectory(dir.path());
  std::map<std::string, fs::file_time_type> after;
  for (const auto& e : fs::directory_iterator(dir.path())) after[e.path().filename()] = e.last_write_time();
  EXPECT_EQ(before, after);
}

TEST(Trajectory, WriterLockIsExclusive) {
  TempDir dir("lock");
  DirLock held(dir.path());
  EXPECT_THROW(save_trajectory(rollout(3), dir.path()), IoError);
}

TEST(Corpus, RoundTripInOrder) {
  TempDir dir("corpus");
  std::vector<Trajectory> ts;
  for (int i = 0; i < 3; ++i) {
    Trajectory t = tiny();
    t.seed = static_cast<std::uint64_t>(i);
    ts.push_back(t);
  }
  save_corpus(ts, dir.path());
  EXPECT_TRUE(fs::exists(corpus_entry(dir.path(), 2) / "manifest.json"));
  EXPECT_EQ(corpus_entry(dir.path(), 2).filename(), "traj_000002");
  EXPECT_EQ(load_corpus(dir.path()), ts);
  TempDir empty("empty");
  EXPECT_THROW(load_corpus(empty.path()), IoError);
  EXPECT_THROW(load_corpus(empty / "nope"), IoError);
}

TEST(Session, RoundTrip) {
  const std::vector<SessionRecord> records = {
      {"system", "be terse", {}, "2026-01-01T00:00:00.000Z"},
      {"user", "look\nat \"this\"", {"ab12", "cd34"}, "2026-01-01T00:00:01.250Z"},
      {"assistant", "```\nfn check() { return true; }\n```", {}, "2026-01-01T00:00:02.000Z"},
  };
  EXPECT_EQ(session_from_jsonl(session_to_jsonl(records)), records);
  TempDir dir("session");
  save_session(dir / "s.jsonl", records);
  EXPECT_EQ(load_session(dir / "s.jsonl"), records);
}

TEST(Session, MalformedLineNamesTheLine) {
  const std::string good = session_to_jsonl({{"user", "hi", {}, "2026-01-01T00:00:00.000Z"}});
  try {
    session_from_jsonl(good + good + "{broken\n");
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  try {
    session_from_jsonl(good + R"({"role":"user","text":5,"image_hashes":[],"timestamp":"x"})" "\n");
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Report, RoundTrip) {
  VerificationReport r;
  SubTaskReport s;
  s.index = 0;
  s.expert_completed = {true, true};
  s.expert_completion_frames = {4, 7};
  s.random_completions = 3;
  s.random_trajectories = 100;
  s.random_rate = 0.03;
  s.random_completion_frames = {5, 9, 12};
  s.pass = true;
  s.reason = "ok";
  r.subtasks.push_back(s);
  GoalReport g;
  g.first_true_frames = {20, 22};
  g.recency_pass = true;
  g.pass = true;
  r.goal = g;
  r.overall_pass = true;
  TempDir dir("report");
  save_report(dir / "report.json", r);
  const VerificationReport back = load_report(dir / "report.json");
  EXPECT_EQ(back.to_json(), r.to_json());
  write_text(dir / "bad.json", "[1,2]");
  EXPECT_THROW(load_report(dir / "bad.json"), SchemaError);
}

TEST(Program, ReparseEqualsSavedAst) {
  TempDir dir("prog");
  const dsl::Program p = dsl::parse_any(oracle::grid_programs(16).goal_check);
  save_program(dir / "goal.rwd", p);
  EXPECT_TRUE(dsl::same_structure(load_program(dir / "goal.rwd"), p));
  write_text(dir / "broken.rwd", "fn check( {");
  EXPECT_THROW(load_program(dir / "broken.rwd"), SchemaError);
}

TEST(Artifacts, RoundTripAndIntegrity) {
  const oracle::GridPrograms g = oracle::grid_programs(16);
  GeneratedArtifacts a;
  a.task_description = "reach the goal";
  a.subtask_descriptions = {"get the key", "open the door"};
  a.agent_identifier = dsl::parse_any(g.agent_id);
  a.identifiers = {{dsl::parse_any(g.key_id)}, {dsl::parse_any(g.door_id)}};
  a.checkers = {dsl::parse_any(g.key_check), dsl::parse_any(g.door_check)};
  a.goal_identifiers = {dsl::parse_any(g.goal_id)};
  a.goal = dsl::parse_any(g.goal_check);
  a.failed_attempts = {{"task_1_check", 2}};
  a.session_log = "session.jsonl";
  TempDir dir("art");
  save_artifacts(dir.path(), a);
  EXPECT_TRUE(fs::exists(dir / "programs/task_1_check.rwd"));
  EXPECT_TRUE(fs::exists(dir / "programs/agent_ID_script.rwd"));
  const GeneratedArtifacts b = load_artifacts(dir.path());
  EXPECT_EQ(b.task_description, a.task_description);
  EXPECT_EQ(b.subtask_descriptions, a.subtask_descriptions);
  ASSERT_EQ(b.checkers.size(), 2u);
  EXPECT_TRUE(dsl::same_structure(b.checkers[1], a.checkers[1]));
  EXPECT_EQ(b.checkers[1].source, a.checkers[1].source);
  ASSERT_TRUE(b.goal);
  EXPECT_FALSE(b.reward);
  EXPECT_EQ(b.failed_attempts, a.failed_attempts);
  EXPECT_EQ(b.identifiers.size(), 2u);
  EXPECT_EQ(b.goal_identifiers.size(), 1u);

  std::ofstream(dir / "programs/task_1_check.rwd", std::ios::app) << "// edited\n";
  EXPECT_THROW(load_artifacts(dir.path()), IntegrityError);
  EXPECT_THROW(load_artifacts(dir / "nowhere"), IoError);
}

TEST(SpecText, Canonical) {
  GridSpec s;
  s.seed = 3;
  EXPECT_EQ(canonical_spec(s), "doorkey-8x8 tile=16 seed=3 max_steps=256");
  EXPECT_EQ(canonical_spec(PushConfig{}).rfind("blockpush {", 0), 0u);
}
