#include <gtest/gtest.h>

#include "car/datastore.hpp"
#include "car/oracle_programs.hpp"

using namespace car;

namespace {

fs::path shipped(const std::string& name) { return fs::path(CAR_SOURCE_DIR) / "programs" / (name + ".rwd"); }

void expect_same(const std::string& name, const std::string& source, dsl::ProgramKind kind) {
  SCOPED_TRACE(name);
  const dsl::Program on_disk = load_program(shipped(name));
  EXPECT_EQ(on_disk.kind, kind);
  EXPECT_TRUE(dsl::same_structure(on_disk, dsl::parse(source, kind)));
}

}  // namespace

// The files under programs/ are the 16 px oracle programs; keep them in sync.
TEST(ShippedPrograms, MatchOracleSources) {
  using K = dsl::ProgramKind;
  const oracle::GridPrograms g = oracle::grid_programs(16);
  expect_same("doorkey_agent_id", g.agent_id, K::Identify);
  expect_same("doorkey_key_id", g.key_id, K::Identify);
  expect_same("doorkey_door_id", g.door_id, K::Identify);
  expect_same("doorkey_goal_id", g.goal_id, K::Identify);
  expect_same("doorkey_key_check", g.key_check, K::Check);
  expect_same("doorkey_door_check", g.door_check, K::Check);
  expect_same("doorkey_goal_check", g.goal_check, K::Check);
  const oracle::PushPrograms p = oracle::push_programs();
  expect_same("blockpush_block_id", p.block_id, K::Identify);
  expect_same("blockpush_target_id", p.target_id, K::Identify);
  expect_same("blockpush_goal_check", p.goal_check, K::Check);
  expect_same("blockpush_reward", p.incremental_reward, K::Reward);
}

TEST(ShippedPrograms, NoStrayFiles) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(fs::path(CAR_SOURCE_DIR) / "programs")) {
    EXPECT_EQ(e.path().extension(), ".rwd") << e.path();
    ++n;
  }
  EXPECT_EQ(n, 11);
}
