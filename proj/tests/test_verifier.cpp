#include <gtest/gtest.h>

#include <algorithm>

#include "car/oracle_programs.hpp"
#include "car/verifier.hpp"
#include "fixtures.hpp"

using namespace car;
using car::test::doorkey_spec;
using car::test::shared_doorkey_corpora;

namespace {

const oracle::GridPrograms& progs() {
  static const oracle::GridPrograms g = oracle::grid_programs(8);
  return g;
}

std::vector<dsl::Program> oracle_checkers() {
  return {dsl::parse_any(progs().key_check), dsl::parse_any(progs().door_check)};
}

dsl::Program proximity() { return dsl::parse_any(progs().proximity_key_check); }

// Checker that divides by zero on any frame holding a purple pixel and
// otherwise behaves like `inner`.
dsl::Program error_on_purple(const std::string& inner_source) {
  std::string src = inner_source;
  const auto at = src.find("fn check()");
  src.replace(at, 10, "fn inner()");
  src +=
      "\nfn check() {\n"
      "  if count(mask(frame(), \"purple\")) > 0 {\n"
      "    return 1 / 0;\n"
      "  }\n"
      "  return inner();\n"
      "}\n";
  return dsl::parse(src, dsl::ProgramKind::Check);
}

Frame blue_blocks(int gap) {
  Frame f(200, 40, rgb_of(Color::Black));
  for (int i = 0; i < 6; ++i) f.fill_rect(4 + i * (20 + gap), 10, 20, 20, rgb_of(Color::Blue));
  return f;
}

}  // namespace

TEST(VerifyIdentifier, OracleAgentPasses) {
  const GridSpec spec = doorkey_spec();
  const Frame f = grid_render(grid_reset(spec, 0), spec);
  const IdentifierVerdict v = verify_identifier(dsl::parse_any(progs().agent_id), f);
  EXPECT_TRUE(v.pass) << v.reason;
  ASSERT_EQ(v.detection.locations.size(), 1u);
  EXPECT_TRUE(verify_identifier(dsl::parse_any(progs().agent_id), f, 1).pass);
}

TEST(VerifyIdentifier, ErasedAgentFails) {
  GridSpec spec = doorkey_spec();
  spec.layout = Layout::Empty;
  Frame f = grid_render(grid_reset(spec, 0), spec);
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x)
      if (f.at(x, y) == rgb_of(Color::Red)) f.set(x, y, rgb_of(Color::Black));
  const IdentifierVerdict v = verify_identifier(dsl::parse_any(progs().agent_id), f);
  EXPECT_FALSE(v.pass);
  EXPECT_NE(v.reason.find("found=false"), std::string::npos) << v.reason;
}

TEST(VerifyIdentifier, MergedBlocksFailInstanceCount) {
  const dsl::Program p = dsl::parse_any("fn identify() { return detection(contours(mask(frame(), \"blue\"))); }");
  const IdentifierVerdict merged = verify_identifier(p, blue_blocks(0), 6);
  EXPECT_FALSE(merged.pass);
  EXPECT_EQ(merged.detection.locations.size(), 1u);
  EXPECT_NE(merged.reason.find("expected 6"), std::string::npos) << merged.reason;
  EXPECT_TRUE(verify_identifier(p, blue_blocks(0)).pass);  // no count given
  EXPECT_TRUE(verify_identifier(p, blue_blocks(6), 6).pass);
}

TEST(VerifyIdentifier, RuntimeErrorAndWrongKindFail) {
  const Frame f(16, 16);
  EXPECT_FALSE(verify_identifier(dsl::parse_any("fn identify() { return detection(1 / 0 > 0); }"), f).pass);
  EXPECT_FALSE(verify_identifier(dsl::parse_any(progs().key_check), f).pass);
}

TEST(VerifySubtasks, OracleCheckersPass) {
  const auto& c = shared_doorkey_corpora();
  const VerificationReport r = verify_subtasks(oracle_checkers(), *c.expert, *c.random, {});
  EXPECT_TRUE(r.overall_pass);
  ASSERT_EQ(r.subtasks.size(), 2u);
  for (const SubTaskReport& s : r.subtasks) {
    EXPECT_TRUE(s.pass) << s.reason;
    EXPECT_LT(s.random_rate, 0.1);
    EXPECT_EQ(s.random_trajectories, 100);
    EXPECT_EQ(s.expert_errors, 0);
  }
}

TEST(VerifySubtasks, ExpertCompletionFramesMatchGroundTruth) {
  const GridSpec spec = doorkey_spec();
  const GridEnv env(spec);
  const auto& c = shared_doorkey_corpora();
  const VerificationReport r = verify_subtasks(oracle_checkers(), *c.expert, *c.random, {});
  for (int i = 0; i < 2; ++i) {
    const GridRollout ro = rollout_grid(env, PolicyKind::Expert, static_cast<std::uint64_t>(i));
    int key = -1, door = -1;
    for (std::size_t k = 0; k < ro.states.size(); ++k) {
      if (key < 0 && ro.states[k].has_key) key = static_cast<int>(k);
      if (door < 0 && ro.states[k].door_open) door = static_cast<int>(k);
    }
    EXPECT_EQ(r.subtasks[0].expert_completion_frames[i], key);
    EXPECT_EQ(r.subtasks[1].expert_completion_frames[i], door);
    EXPECT_LT(key, door);
  }
}

TEST(VerifySubtasks, ProximityCheckerIsCaught) {
  const auto& c = shared_doorkey_corpora();
  const VerificationReport r = verify_subtasks({proximity()}, *c.expert, *c.random, {});
  EXPECT_FALSE(r.overall_pass);
  EXPECT_TRUE(std::all_of(r.subtasks[0].expert_completed.begin(), r.subtasks[0].expert_completed.end(),
                          [](bool b) { return b; }));
  EXPECT_GT(r.subtasks[0].random_rate, 0.1);
  EXPECT_NE(r.subtasks[0].reason.find("not below p"), std::string::npos);
}

TEST(VerifySubtasks, InputErrors) {
  const auto& c = shared_doorkey_corpora();
  EXPECT_THROW(verify_subtasks({}, *c.expert, *c.random, {}), InvalidArtifacts);
  EXPECT_THROW(verify_subtasks({dsl::parse_any(progs().key_id)}, *c.expert, *c.random, {}), InvalidArtifacts);
  EXPECT_THROW(verify_subtasks(oracle_checkers(), {}, *c.random, {}), TrajectoryMismatch);
  const GridSpec big = doorkey_spec(16);
  const std::vector<Trajectory> other = {rollout_grid(GridEnv(big), PolicyKind::Random, 1).traj};
  EXPECT_THROW(verify_subtasks(oracle_checkers(), *c.expert, other, {}), TrajectoryMismatch);
  VerifierConfig bad;
  bad.p = 1.0;
  EXPECT_THROW(verify_subtasks(oracle_checkers(), *c.expert, *c.random, bad), InvalidConfig);
}

TEST(VerifySubtasks, PercentUnits) {
  VerifierConfig cfg;
  cfg.p = 10;
  cfg.p_units = ThresholdUnits::Percent;
  EXPECT_DOUBLE_EQ(cfg.threshold(), 0.1);
  const auto& c = shared_doorkey_corpora();
  const VerificationReport r = verify_subtasks(oracle_checkers(), *c.expert, *c.random, cfg);
  EXPECT_TRUE(r.overall_pass);
  EXPECT_DOUBLE_EQ(r.p, 0.1);
}

TEST(VerifySubtasks, ThreadCountDoesNotChangeReport) {
  const auto& c = shared_doorkey_corpora();
  VerifierConfig one, four;
  four.threads = 4;
  const std::vector<dsl::Program> checkers = {proximity(), dsl::parse_any(progs().door_check)};
  EXPECT_EQ(verify_subtasks(checkers, *c.expert, *c.random, one).to_json(),
            verify_subtasks(checkers, *c.expert, *c.random, four).to_json());
}

TEST(VerifySubtasks, LoweringPNeverTurnsFailIntoPass) {
  const auto& c = shared_doorkey_corpora();
  const std::vector<double> ps = {0.9, 0.5, 0.3, 0.2, 0.1, 0.05, 0.02, 0.01};
  for (const auto& checkers : {oracle_checkers(), std::vector<dsl::Program>{proximity()}}) {
    bool failed = false;
    for (double p : ps) {
      VerifierConfig cfg;
      cfg.p = p;
      const bool pass = verify_subtasks(checkers, *c.expert, *c.random, cfg).overall_pass;
      if (failed) EXPECT_FALSE(pass) << "p=" << p;
      failed = failed || !pass;
    }
  }
}

TEST(VerifySubtasks, CompletionIsLatched) {
  // The proximity check goes false again once the agent walks away, yet the
  // sub-task stays complete and the next checker takes over.
  const auto& c = shared_doorkey_corpora();
  const VerificationReport r =
      verify_subtasks({proximity(), dsl::parse_any(progs().door_check)}, *c.expert, *c.random, {});
  for (std::size_t i = 0; i < c.expert->size(); ++i) {
    const int a = r.subtasks[0].expert_completion_frames[i];
    const int b = r.subtasks[1].expert_completion_frames[i];
    ASSERT_GE(a, 0);
    ASSERT_GT(b, a);
  }
  for (std::size_t i = 0; i < c.random->size(); ++i) {
    const int b = r.subtasks[1].random_completion_frames[i];
    if (b >= 0) EXPECT_GT(b, r.subtasks[0].random_completion_frames[i]);
  }
}

TEST(VerifySubtasks, InjectedErrorsOnlyDecreaseCompletion) {
  const auto& c = shared_doorkey_corpora();
  const dsl::Program wrapped = error_on_purple(progs().proximity_key_check);
  const VerificationReport base = verify_subtasks({wrapped}, *c.expert, *c.random, {});
  ASSERT_FALSE(base.overall_pass);

  // Purple pixel on the completion frame of every random trajectory that completed.
  std::vector<Trajectory> poisoned = *c.random;
  for (std::size_t i = 0; i < poisoned.size(); ++i) {
    const int k = base.subtasks[0].random_completion_frames[i];
    if (k >= 0) poisoned[i].frames[static_cast<std::size_t>(k)].set(0, 0, rgb_of(Color::Purple));
  }
  const VerificationReport hit = verify_subtasks({wrapped}, *c.expert, poisoned, {});
  EXPECT_GT(hit.subtasks[0].random_errors, 0);
  EXPECT_LE(hit.subtasks[0].random_rate, base.subtasks[0].random_rate);
  for (std::size_t i = 0; i < poisoned.size(); ++i) {
    const int before = base.subtasks[0].random_completion_frames[i];
    const int after = hit.subtasks[0].random_completion_frames[i];
    if (before < 0) {
      EXPECT_EQ(after, -1);
    } else if (after >= 0) {
      EXPECT_GT(after, before);
    }
  }

  // Errors on expert frames fail the sub-task outright.
  std::vector<Trajectory> expert = *c.expert;
  expert[0].frames[1].set(0, 0, rgb_of(Color::Purple));
  const VerificationReport ex = verify_subtasks({error_on_purple(progs().key_check)}, expert, *c.random, {});
  EXPECT_FALSE(ex.overall_pass);
  EXPECT_GT(ex.subtasks[0].expert_errors, 0);
}

TEST(GoalRecency, OracleGoalPasses) {
  const auto& c = shared_doorkey_corpora();
  std::vector<int> first;
  EXPECT_TRUE(verify_goal_recency(dsl::parse_any(progs().goal_check), *c.expert, 3, &first));
  ASSERT_EQ(first.size(), c.expert->size());
  for (std::size_t i = 0; i < first.size(); ++i)
    EXPECT_EQ(first[i], static_cast<int>((*c.expert)[i].frames.size()) - 1);
}

TEST(GoalRecency, AlwaysTrueFailsUnlessVacuous) {
  const auto& c = shared_doorkey_corpora();
  const dsl::Program always = dsl::parse_any("fn check() { return true; }");
  EXPECT_FALSE(verify_goal_recency(always, *c.expert, 3));
  std::size_t longest = 0;
  for (const Trajectory& t : *c.expert) longest = std::max(longest, t.frames.size());
  EXPECT_TRUE(verify_goal_recency(always, *c.expert, static_cast<int>(longest)));
}

TEST(GoalRecency, VerifyGoalReportsCheckKind) {
  const auto& c = shared_doorkey_corpora();
  const GoalReport g = verify_goal(dsl::parse_any(progs().goal_check), *c.expert, *c.random, {});
  EXPECT_TRUE(g.pass) << g.reason;
  EXPECT_TRUE(g.recency_pass);
  EXPECT_EQ(g.kind, dsl::ProgramKind::Check);
}

TEST(VerifyArtifacts, OracleArtifactsPassAndReportRoundTrips) {
  const auto& c = shared_doorkey_corpora();
  GeneratedArtifacts a;
  a.checkers = oracle_checkers();
  a.goal = dsl::parse_any(progs().goal_check);
  const VerificationReport r = verify_artifacts(a, *c.expert, *c.random, {});
  EXPECT_TRUE(r.overall_pass);
  ASSERT_TRUE(r.goal);
  EXPECT_EQ(VerificationReport::from_json(r.to_json()).to_json(), r.to_json());
  a.goal = dsl::parse_any("fn check() { return true; }");
  EXPECT_FALSE(verify_artifacts(a, *c.expert, *c.random, {}).overall_pass);
}

TEST(Separation, OraclePushRewardOrdersPolicies) {
  const SeparationReport r =
      evaluate_separation(dsl::parse_any(oracle::push_programs().incremental_reward), PushConfig{}, 20, 0);
  EXPECT_TRUE(r.ordering_pass) << r.reason;
  EXPECT_EQ(r.k, 20);
  for (const PolicyStats& s : r.policies) EXPECT_EQ(s.values.size(), 20u);
  const double expert = r.stats(PolicyKind::Expert).mean;
  EXPECT_GE(expert, 0.95);
  EXPECT_LE(expert, 1.0);
  EXPECT_LE(std::abs(r.stats(PolicyKind::Random).mean), 0.15);
}

TEST(Separation, VerdictNeedsOrderAndGap) {
  auto stats = [](PolicyKind k, std::vector<double> v) {
    PolicyStats s;
    s.kind = k;
    s.values = std::move(v);
    return s;
  };
  const SeparationReport good = separation_from_values({stats(PolicyKind::Random, {0.0, 0.1, 0.0, 0.1}),
                                                        stats(PolicyKind::Novice, {0.3, 0.4, 0.3, 0.4}),
                                                        stats(PolicyKind::Suboptimal, {0.7, 0.8, 0.7, 0.8}),
                                                        stats(PolicyKind::Expert, {1.0, 1.0, 1.0, 1.0})});
  EXPECT_TRUE(good.ordering_pass) << good.reason;
  EXPECT_NEAR(good.stats(PolicyKind::Novice).mean, 0.35, 1e-12);
  const SeparationReport swapped = separation_from_values({stats(PolicyKind::Random, {0.5, 0.5}),
                                                           stats(PolicyKind::Novice, {0.3, 0.3}),
                                                           stats(PolicyKind::Suboptimal, {0.7, 0.7}),
                                                           stats(PolicyKind::Expert, {1.0, 1.0})});
  EXPECT_FALSE(swapped.ordering_pass);
  const SeparationReport noisy = separation_from_values({stats(PolicyKind::Random, {0.0, 1.0, 0.0, 1.0}),
                                                         stats(PolicyKind::Novice, {0.0, 1.0, 0.1, 1.0}),
                                                         stats(PolicyKind::Suboptimal, {0.1, 1.0, 0.1, 1.0}),
                                                         stats(PolicyKind::Expert, {0.2, 1.0, 0.2, 1.0})});
  EXPECT_FALSE(noisy.ordering_pass);
}
