#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "ttllab/simcore.hpp"
#include "ttllab/simulation.hpp"

using namespace ttllab;

TEST(EventQueue, SameTimeKeepsScheduleOrder) {
  EventQueue<std::string> q;
  q.schedule(5.0, "A");
  q.schedule(5.0, "B");
  std::vector<std::string> seen;
  q.run_until(10.0, [&](const SimEvent<std::string>& e) { seen.push_back(e.payload); });
  EXPECT_EQ(seen, (std::vector<std::string>{"A", "B"}));
}

TEST(EventQueue, EarlierTimeFirst) {
  EventQueue<int> q;
  q.schedule(3.0, 3);
  q.schedule(2.0, 2);
  std::vector<int> seen;
  q.run_until(10.0, [&](const SimEvent<int>& e) { seen.push_back(e.payload); });
  EXPECT_EQ(seen, (std::vector<int>{2, 3}));
}

TEST(EventQueue, PastSchedulingRejected) {
  EventQueue<int> q;
  q.run_until(5.0, [](const SimEvent<int>&) {});
  EXPECT_THROW(q.schedule(4.0, 0), SchedulingError);
}

TEST(EventQueue, EmptyRunAdvancesClock) {
  EventQueue<int> q;
  EXPECT_EQ(q.run_until(60.0, [](const SimEvent<int>&) {}), 0u);
  EXPECT_EQ(q.now(), 60.0);
}

TEST(EventQueue, ClockMonotoneAndHandlersMayReschedule) {
  EventQueue<int> q;
  q.schedule(0.5, 0);
  double last = -1.0;
  std::size_t n = q.run_until(10.0, [&](const SimEvent<int>& e) {
    EXPECT_GE(e.time, last);
    last = e.time;
    q.schedule(e.time + 0.5, e.payload + 1);
  });
  EXPECT_EQ(n, 20u);
  EXPECT_EQ(q.pending(), 1u);
}

TEST(Latency, DefaultRoundTrips) {
  LatencyModel m;
  EXPECT_DOUBLE_EQ(m.hit_latency(), 0.004);
  EXPECT_DOUBLE_EQ(m.miss_latency(), 0.154);
  m.origin_rtt = -1;
  EXPECT_THROW(m.validate(), std::invalid_argument);
}

TEST(Clients, ArrivalCountNearTarget) {
  SimConfig cfg;
  cfg.workload.record_count = 10000;
  cfg.workload.query_count = 1000;
  cfg.workload.target_throughput = 1000;
  cfg.workload.duration = 10;
  cfg.cache_capacity = 800;
  const RunResult r = run_simulation(cfg, 3);
  EXPECT_NEAR(static_cast<double>(r.ops), 10000.0, 500.0);
}

TEST(Clients, PerConnectionMeanInterarrival) {
  WorkloadSpec spec;
  spec.target_throughput = 1000;
  EXPECT_EQ(spec.total_connections(), 60u);
  EXPECT_DOUBLE_EQ(static_cast<double>(spec.total_connections()) / spec.target_throughput, 0.06);
}

TEST(Clients, WindowThroughputWithinFivePercent) {
  SimConfig cfg;
  const RunResult r = run_simulation(cfg, 5);
  ASSERT_EQ(r.window_throughput.size(), 5u);
  for (double t : r.window_throughput) EXPECT_NEAR(t, cfg.workload.target_throughput, 0.05 * cfg.workload.target_throughput);
}

TEST(Clients, IdenticalSeedsIdenticalTraces) {
  SimConfig cfg;
  cfg.workload.duration = 30;
  cfg.record_trace = true;
  const RunResult a = run_simulation(cfg, 8);
  const RunResult b = run_simulation(cfg, 8);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(a.trace[i].time, b.trace[i].time);
    EXPECT_EQ(a.trace[i].id, b.trace[i].id);
    EXPECT_STREQ(a.trace[i].outcome, b.trace[i].outcome);
  }
}
