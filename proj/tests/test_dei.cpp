#include <gtest/gtest.h>

#include "fake_env.hpp"
#include "ttllab/simulation.hpp"

using namespace ttllab;
using ttllab::testing::FakeEnv;

TEST(Reward, InvalidationInsideWindow) {
  const RewardConfig r;
  EXPECT_DOUBLE_EQ(compute_reward(40.0, 0.0, 50.0, 0.5, 0.8, r), -10.0);
}

TEST(Reward, BelowThresholdScalesWithLoad) {
  const RewardConfig r;
  EXPECT_DOUBLE_EQ(compute_reward(std::nullopt, 0, 50, 0.5, 0.8, r), 1.5);
  EXPECT_DOUBLE_EQ(compute_reward(std::nullopt, 0, 50, 0.8, 0.8, r), 1.8);
}

TEST(Reward, AboveThresholdPenalty) {
  const RewardConfig r;
  EXPECT_DOUBLE_EQ(compute_reward(std::nullopt, 0, 50, 0.9, 0.8, r), -0.9);
}

TEST(Reward, AboveThresholdLiteralForm) {
  RewardConfig r;
  r.above_threshold = LoadRewardForm::Literal;
  EXPECT_NEAR(compute_reward(std::nullopt, 0, 50, 0.9, 0.8, r), 0.1, 1e-12);
}

TEST(Reward, InvalidationOutsideWindowIgnored) {
  const RewardConfig r;
  EXPECT_DOUBLE_EQ(compute_reward(50.0, 0.0, 50.0, 0.5, 0.8, r), 1.5);
  EXPECT_DOUBLE_EQ(compute_reward(-1.0, 0.0, 50.0, 0.5, 0.8, r), 1.5);
}

TEST(Reward, WorkloadAdjustedThreshold) {
  RewardConfig r;
  r.adjust_threshold_to_workload = true;
  EXPECT_DOUBLE_EQ(r.effective_threshold(0.3), 0.7);
  r.r0 = 0;
  EXPECT_THROW(r.validate(), std::invalid_argument);
}

TEST(ExpirationQueueTest, TakeOnce) {
  ExpirationQueue q;
  const auto tok = q.enqueue({1, 2, {0.1}, {30}, 5, 35});
  EXPECT_EQ(q.waiting(), 1u);
  EXPECT_TRUE(q.take(tok));
  EXPECT_FALSE(q.take(tok));
  EXPECT_THROW(q.enqueue({1, 2, {}, {}, 5, 5}), std::invalid_argument);
}

namespace {

NafConfig small_naf() {
  NafConfig c;
  c.initial_random_decisions = 0;
  c.noise_sigma_start = c.noise_sigma_end = 0;
  return c;
}

}  // namespace

TEST(DeiMode, DecisionScheduledAtDecisionPlusTtl) {
  FakeEnv env;
  env.t = 10;
  NafEstimator est(small_naf(), RewardConfig{}, NafMode::Dei, 3);
  const std::vector<std::size_t> keys{1, 2};
  const double ttl = est.decide({5, keys, 0}, env);
  ASSERT_EQ(env.due.size(), 1u);
  EXPECT_DOUBLE_EQ(env.due[0].first, 10 + ttl);
  EXPECT_TRUE(env.injected.empty());
  EXPECT_EQ(est.expiration_queue().waiting(), 1u);
}

TEST(DeiMode, CompletionAtDueTimeUsesInvalidation) {
  FakeEnv env;
  env.t = 10;
  NafEstimator est(small_naf(), RewardConfig{}, NafMode::Dei, 3);
  const std::vector<std::size_t> keys{1};
  env.keys[5] = keys;
  const double ttl = est.decide({5, keys, 7}, env);
  env.invalidated[7] = 12;
  env.t = env.due[0].first;
  est.on_due(env.due[0].second, env);
  ASSERT_EQ(env.injected.size(), 1u);
  const Transition& t = env.injected[0];
  EXPECT_DOUBLE_EQ(t.r, 12 - (10 + ttl));
  EXPECT_DOUBLE_EQ(t.injected_at, 10 + ttl);
  EXPECT_EQ(t.serve_id, 7u);
  EXPECT_EQ(est.agent()->replay().size(), 1u);
  EXPECT_EQ(env.train_requests, 1u);
  est.on_due(env.due[0].second, env);  // a token completes once
  EXPECT_EQ(env.injected.size(), 1u);
}

TEST(NaiveMode, FirstDecisionProducesNothing) {
  FakeEnv env;
  NafEstimator est(small_naf(), RewardConfig{}, NafMode::Naive, 3);
  const std::vector<std::size_t> keys{1};
  est.decide({5, keys, 0}, env);
  EXPECT_TRUE(env.injected.empty());
  EXPECT_TRUE(env.due.empty());
}

TEST(NaiveMode, SecondDecisionCompletesImmediately) {
  FakeEnv env;
  NafEstimator est(small_naf(), RewardConfig{}, NafMode::Naive, 3);
  const std::vector<std::size_t> keys{1};
  est.decide({5, keys, 0}, env);
  env.t = 2;
  env.invalidated[0] = 1;
  est.decide({5, keys, 1}, env);
  ASSERT_EQ(env.injected.size(), 1u);
  EXPECT_EQ(env.injected[0].injected_at, 2.0);
  EXPECT_EQ(env.injected[0].decided_at, 2.0);
  EXPECT_LT(env.injected[0].r, 0.0);
}

TEST(NaiveMode, PreviousPairingUsesEarlierDecision) {
  FakeEnv env;
  NafConfig c = small_naf();
  c.initial_random_decisions = 2;
  NafEstimator est(c, RewardConfig{}, NafMode::Naive, 3, NaivePairing::Previous);
  const std::vector<std::size_t> keys{1};
  const double first = est.decide({5, keys, 0}, env);
  env.t = 1;
  est.decide({5, keys, 1}, env);
  ASSERT_EQ(env.injected.size(), 1u);
  EXPECT_DOUBLE_EQ(env.injected[0].a.front(), first);
}

TEST(Modes, ReplayLogsDiffer) {
  SimConfig cfg;
  cfg.workload.duration = 60;
  cfg.record_replay = true;
  cfg.estimator.naf.initial_random_decisions = 200;
  cfg.estimator.kind = EstimatorKind::NafDei;
  const RunResult dei = run_simulation(cfg, 1);
  cfg.estimator.kind = EstimatorKind::NafNaive;
  const RunResult naive = run_simulation(cfg, 1);
  ASSERT_FALSE(dei.replay_log.empty());
  ASSERT_FALSE(naive.replay_log.empty());
  for (const auto& row : dei.replay_log) {
    EXPECT_DOUBLE_EQ(row.injected_at, row.due_at);
    EXPECT_GT(row.injected_at, row.decided_at);
  }
  for (const auto& row : naive.replay_log) EXPECT_DOUBLE_EQ(row.injected_at, row.decided_at);
}
