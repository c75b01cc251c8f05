#include <gtest/gtest.h>

#include <algorithm>

#include "ttllab/cachesys.hpp"
#include "ttllab/rng.hpp"

using namespace ttllab;

TEST(Lookup, LiveEntryHits) {
  CacheSystem c(10);
  c.insert(1, 0, 0, 10, 100, 0);
  EXPECT_EQ(c.lookup(1, 99), LookupResult::Hit);
}

TEST(Lookup, PendingInvalidationIsStaleHit) {
  CacheSystem c(10);
  c.insert(1, 0, 0, 10, 100, 0);
  ASSERT_EQ(c.origin_update(5, 50, 95).size(), 1u);
  EXPECT_EQ(c.lookup(1, 95.001), LookupResult::StaleHit);
  const CacheStats s = c.stats();
  EXPECT_EQ(s.hits, 1u);
  EXPECT_EQ(s.stale_reads, 1u);
}

TEST(Lookup, ExpiryIsHalfOpen) {
  CacheSystem c(10);
  c.insert(1, 0, 0, 10, 100, 0);
  EXPECT_EQ(c.lookup(1, 100), LookupResult::Miss);
}

TEST(Insert, EvictsEarliestExpiry) {
  CacheSystem c(2);
  c.insert(1, 0, 0, 1, 10, 0);
  c.insert(2, 1, 2, 3, 20, 0);
  const InsertResult r = c.insert(3, 2, 4, 5, 30, 5);
  EXPECT_TRUE(r.inserted);
  ASSERT_TRUE(r.evicted);
  EXPECT_EQ(*r.evicted, 1u);
  ASSERT_NE(c.edge_entry(3), nullptr);
  EXPECT_EQ(c.edge_entry(3)->expires_at, 35.0);
  EXPECT_EQ(c.index_entry(1), nullptr);
  EXPECT_TRUE(c.consistent());
}

TEST(Insert, NoEvictionBelowCapacity) {
  CacheSystem c(3);
  c.insert(1, 0, 0, 1, 10, 0);
  EXPECT_FALSE(c.insert(2, 1, 0, 1, 10, 0).evicted);
  EXPECT_EQ(c.stats().evictions, 0u);
}

TEST(Insert, NonPositiveTtlRejected) {
  CacheSystem c(3);
  EXPECT_THROW(c.insert(1, 0, 0, 1, 0, 0), std::invalid_argument);
}

TEST(OriginUpdate, OldAndNewValueBothInvalidate) {
  CacheSystem c(10);
  c.insert(1, 0, 0, 10, 100, 0);
  c.insert(2, 1, 40, 50, 100, 0);
  auto inv = c.origin_update(42, 7, 1);
  std::vector<QueryId> ids;
  for (const auto& i : inv) ids.push_back(i.query_id);
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(ids, (std::vector<QueryId>{1, 2}));
  EXPECT_TRUE(c.consistent());
}

TEST(OriginUpdate, UnrelatedUpdateInvalidatesNothing) {
  CacheSystem c(10);
  c.insert(1, 0, 0, 10, 100, 0);
  EXPECT_TRUE(c.origin_update(42, 43, 1).empty());
}

TEST(ApplyInvalidation, RemovesEntryAndCounts) {
  CacheSystem c(10);
  c.insert(1, 0, 0, 10, 100, 0);
  const auto inv = c.origin_update(5, 50, 95);
  EXPECT_TRUE(c.apply_invalidation(inv.front(), 95.002));
  EXPECT_EQ(c.lookup(1, 95.003), LookupResult::Miss);
  EXPECT_EQ(c.stats().invalidations, 1u);
}

TEST(ApplyInvalidation, ExpiredEntryIsNoOp) {
  CacheSystem c(10);
  c.insert(1, 0, 0, 10, 95.001, 0);
  const auto inv = c.origin_update(5, 50, 95);
  EXPECT_FALSE(c.apply_invalidation(inv.front(), 95.002));
  EXPECT_EQ(c.stats().invalidations, 0u);
}

TEST(ApplyInvalidation, SecondUpdateBeforeApplyCountsOnce) {
  CacheSystem c(10);
  c.insert(1, 0, 0, 10, 100, 0);
  const auto first = c.origin_update(5, 50, 95);
  const auto second = c.origin_update(6, 60, 95.001);
  EXPECT_EQ(first.size(), 1u);
  EXPECT_TRUE(second.empty());
  c.apply_invalidation(first.front(), 95.002);
  EXPECT_EQ(c.stats().invalidations, 1u);
}

TEST(ApplyInvalidation, ReinsertedEntryNotRemovedByStaleInvalidation) {
  CacheSystem c(10);
  c.insert(1, 0, 0, 10, 1, 0);
  const auto inv = c.origin_update(5, 50, 0.5);
  c.insert(1, 1, 0, 10, 100, 1.2);  // the first entry expired, a new serve took its place
  EXPECT_FALSE(c.apply_invalidation(inv.front(), 1.3));
  EXPECT_EQ(c.lookup(1, 2), LookupResult::Hit);
}

TEST(OriginUpdate, RandomizedAgainstBruteForce) {
  Rng rng(17);
  CacheSystem c(64);
  double now = 0;
  ServeId serve = 0;
  std::vector<Invalidation> in_flight;
  for (int u = 0; u < 10000; ++u) {
    now += rng.exponential(0.02);
    const double lo = rng.uniform(0, 500);
    c.insert(rng.below(100), serve++, lo, lo + rng.exponential(8), rng.uniform(0.01, 3), now);
    now += rng.exponential(0.02);
    const double a = rng.uniform(0, 500), b = rng.uniform(0, 500);
    std::vector<QueryId> expected;
    for (const auto& e : c.index_entries())
      if (e.expires_at > now && ((a >= e.lo && a < e.hi) || (b >= e.lo && b < e.hi))) expected.push_back(e.query_id);
    std::vector<QueryId> got;
    for (const auto& i : c.origin_update(a, b, now)) {
      got.push_back(i.query_id);
      in_flight.push_back(i);
    }
    std::sort(got.begin(), got.end());
    ASSERT_EQ(got, expected);
    if (rng.below(2) == 0 && !in_flight.empty()) {
      c.apply_invalidation(in_flight.front(), now);
      in_flight.erase(in_flight.begin());
    }
    ASSERT_TRUE(c.consistent());
    const CacheStats s = c.stats();
    ASSERT_LE(s.invalidations, s.inserts);
    ASSERT_LE(s.stale_reads, s.hits);
  }
}

TEST(IntervalIndex, StabMatchesScan) {
  Rng rng(3);
  IntervalIndex<std::size_t> idx;
  std::vector<std::pair<double, double>> ranges(200);
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    const double lo = rng.uniform(0, 100);
    ranges[i] = {lo, lo + rng.exponential(5)};
    idx.insert(i, ranges[i].first, ranges[i].second);
  }
  for (std::size_t i = 0; i < ranges.size(); i += 3) idx.erase(i);
  for (int t = 0; t < 1000; ++t) {
    const double x = rng.uniform(-5, 110);
    std::vector<std::size_t> expected;
    for (std::size_t i = 0; i < ranges.size(); ++i)
      if (i % 3 != 0 && x >= ranges[i].first && x < ranges[i].second) expected.push_back(i);
    std::vector<std::size_t> got = idx.stab(x);
    std::sort(got.begin(), got.end());
    ASSERT_EQ(got, expected);
  }
}
