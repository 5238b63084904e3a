#include <gtest/gtest.h>

#include <cmath>

#include "car/oracle_programs.hpp"
#include "car/trainer.hpp"
#include "fixtures.hpp"

using namespace car;

namespace {

GridSpec empty5() {
  GridSpec s;
  s.width = 5;
  s.height = 5;
  s.layout = Layout::Empty;
  s.tile_px = 8;
  return s;
}

// Two states, two actions, deterministic. next[s][a], reward[s][a].
struct TinyMdp {
  int next[2][2] = {{0, 1}, {0, 1}};
  double reward[2][2] = {{0.0, 1.0}, {2.0, 0.5}};
};

using Q2 = std::array<std::array<double, 2>, 2>;

Q2 value_iteration(const TinyMdp& m, double gamma) {
  Q2 q{};
  for (int it = 0; it < 5000; ++it) {
    Q2 n{};
    for (int s = 0; s < 2; ++s)
      for (int a = 0; a < 2; ++a) {
        const int t = m.next[s][a];
        n[s][a] = m.reward[s][a] + gamma * std::max(q[t][0], q[t][1]);
      }
    q = n;
  }
  return q;
}

// Sweeps every (s, a) pair with the library backup.
Q2 q_learning(const TinyMdp& m, double gamma, double alpha, int sweeps) {
  Q2 q{};
  for (int it = 0; it < sweeps; ++it)
    for (int s = 0; s < 2; ++s)
      for (int a = 0; a < 2; ++a) {
        const int t = m.next[s][a];
        q[s][a] = q_update(q[s][a], m.reward[s][a], std::max(q[t][0], q[t][1]), alpha, gamma, false);
      }
  return q;
}

RewardAssembly oracle_assembly(int tile) {
  const oracle::GridPrograms g = oracle::grid_programs(tile);
  return RewardAssembly({{"key", {}, dsl::parse_any(g.key_check), true}, {"door", {}, dsl::parse_any(g.door_check), true}},
                        dsl::parse_any(g.goal_check));
}

}  // namespace

TEST(Trainer, QUpdateBackup) {
  EXPECT_DOUBLE_EQ(q_update(1.0, 0.5, 2.0, 0.5, 0.9, false), 1.0 + 0.5 * (0.5 + 0.9 * 2.0 - 1.0));
  EXPECT_DOUBLE_EQ(q_update(1.0, 0.5, 2.0, 0.5, 0.9, true), 1.0 + 0.5 * (0.5 - 1.0));
}

TEST(Trainer, TinyMdpConvergesToValueIteration) {
  const TinyMdp m;
  const Q2 star = value_iteration(m, 0.9);
  const Q2 q = q_learning(m, 0.9, 0.5, 2000);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) EXPECT_NEAR(q[s][a], star[s][a], 1e-3) << s << "," << a;
}

TEST(Trainer, ArgmaxInvariantUnderRewardScaling) {
  TinyMdp m;
  const Q2 base = q_learning(m, 0.9, 0.5, 2000);
  for (double c : {0.01, 3.0, 250.0}) {
    TinyMdp scaled = m;
    for (auto& row : scaled.reward)
      for (double& r : row) r *= c;
    const Q2 q = q_learning(scaled, 0.9, 0.5, 2000);
    for (int s = 0; s < 2; ++s) EXPECT_EQ(q[s][0] < q[s][1], base[s][0] < base[s][1]) << "c=" << c;
  }
}

TEST(Trainer, ConfigValidation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  for (auto bad : std::vector<std::function<void(TrainConfig&)>>{
           [](TrainConfig& x) { x.gamma = 1.0; }, [](TrainConfig& x) { x.gamma = 0.0; },
           [](TrainConfig& x) { x.alpha = 0.0; }, [](TrainConfig& x) { x.epsilon_start = 1.5; },
           [](TrainConfig& x) { x.epsilon_end = -0.1; }, [](TrainConfig& x) { x.total_steps = 0; },
           [](TrainConfig& x) { x.eval_every = 0; }, [](TrainConfig& x) { x.eval_episodes = 0; }}) {
    TrainConfig x;
    bad(x);
    EXPECT_THROW(x.validate(), InvalidConfig);
    EXPECT_THROW(train(empty5(), nullptr, x), InvalidConfig);
  }
}

TEST(Trainer, EpsilonSchedule) {
  TrainConfig c;
  c.total_steps = 1000;
  EXPECT_DOUBLE_EQ(c.epsilon_at(0), 1.0);
  EXPECT_NEAR(c.epsilon_at(250), 0.525, 1e-12);
  EXPECT_DOUBLE_EQ(c.epsilon_at(500), 0.05);
  EXPECT_DOUBLE_EQ(c.epsilon_at(999), 0.05);
}

TEST(Trainer, GreedyTiesAndUnseenRows) {
  QTable q;
  const GridState s = grid_reset(empty5(), 0);
  EXPECT_EQ(q.greedy(s), kActions.front());
  EXPECT_EQ(q.max_value(s), 0.0);
  q.row(s)[3] = 1.0;
  q.row(s)[4] = 1.0;
  EXPECT_EQ(q.greedy(s), Action::Pickup);
  EXPECT_NE(QTable::key(s, 0), QTable::key(s, 1));
}

TEST(Trainer, EmptyFiveSparseSolves) {
  TrainConfig c;
  c.total_steps = 50'000;
  const TrainResult r = train(empty5(), nullptr, c);
  EXPECT_DOUBLE_EQ(evaluate(r.q, empty5(), 20, 99).success_rate, 1.0);
  ASSERT_FALSE(r.curve.empty());
  EXPECT_DOUBLE_EQ(r.curve.back().success_rate, 1.0);
  EXPECT_GT(r.curve.back().mean_return, 0.0);
  for (std::size_t i = 0; i < r.curve.size(); ++i) EXPECT_EQ(r.curve[i].step, static_cast<std::int64_t>(i + 1) * 250);
}

TEST(Trainer, EvaluateIsDeterministic) {
  const QTable empty;
  const EvalResult a = evaluate(empty, empty5(), 5, 3);
  const EvalResult b = evaluate(empty, empty5(), 5, 3);
  EXPECT_EQ(a.mean_return, b.mean_return);
  EXPECT_EQ(a.success_rate, b.success_rate);
  EXPECT_GE(a.success_rate, 0.0);
  EXPECT_LE(a.success_rate, 1.0);
}

TEST(Trainer, SeedDeterminism) {
  TrainConfig c;
  c.total_steps = 5000;
  c.seed = 17;
  const GridSpec spec = car::test::doorkey_spec();
  RewardAssembly a1 = oracle_assembly(8), a2 = oracle_assembly(8);
  const TrainResult x = train(spec, &a1, c);
  const TrainResult y = train(spec, &a2, c);
  EXPECT_EQ(curve_csv(x.curve), curve_csv(y.curve));
  EXPECT_EQ(curve_json(x.curve), curve_json(y.curve));
  EXPECT_EQ(x.episodes, y.episodes);
  EXPECT_EQ(x.q.size(), y.q.size());
}

TEST(Trainer, DenseEpisodeRewardIsBounded) {
  TrainConfig c;
  c.total_steps = 20'000;
  const GridSpec spec = car::test::doorkey_spec();
  RewardAssembly a = oracle_assembly(8);
  const TrainResult r = train(spec, &a, c);
  EXPECT_GT(r.max_episode_reward, 0.0);
  EXPECT_LE(r.max_episode_reward, 1.0 + a.n() * a.r_aux() + 1e-9);
}

TEST(Trainer, CurveExport) {
  const std::vector<CurvePoint> c = {{250, 0.5, 0.4}, {500, 0.75, 1.0}};
  EXPECT_EQ(curve_csv(c).substr(0, 31), "step,mean_return,success_rate\n2");
  EXPECT_NE(curve_json(c).find("500"), std::string::npos);
}
