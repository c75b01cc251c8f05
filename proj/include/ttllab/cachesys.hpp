#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ttllab {

using QueryId = std::size_t;
using ServeId = std::uint64_t;

/// Dynamic set of half-open intervals keyed by id, supporting stabbing
/// queries. Intervals are ordered by lower bound; a stab only visits
/// intervals whose lower bound lies within the widest live interval's
/// width of the point.
template <class Id>
class IntervalIndex {
public:
  struct Interval {
    double lo;
    double hi;
  };

  std::size_t size() const { return by_id_.size(); }
  bool contains(Id id) const { return by_id_.count(id) != 0; }

  const Interval* find(Id id) const {
    const auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &it->second;
  }

  void insert(Id id, double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("interval index: empty interval");
    erase(id);
    by_id_.emplace(id, Interval{lo, hi});
    by_lo_.emplace(lo, id);
    widths_.insert(hi - lo);
  }

  bool erase(Id id) {
    const auto it = by_id_.find(id);
    if (it == by_id_.end()) return false;
    by_lo_.erase({it->second.lo, id});
    widths_.erase(widths_.find(it->second.hi - it->second.lo));
    by_id_.erase(it);
    return true;
  }

  /// Appends the ids of every interval containing x.
  void stab(double x, std::vector<Id>& out) const {
    if (by_id_.empty()) return;
    const double reach = *widths_.rbegin();
    const double from = x - reach - std::abs(x) * 1e-12 - 1e-300;
    for (auto it = by_lo_.lower_bound({from, std::numeric_limits<Id>::lowest()}); it != by_lo_.end(); ++it) {
      if (it->first > x) break;
      const Interval& iv = by_id_.at(it->second);
      if (iv.lo <= x && x < iv.hi) out.push_back(it->second);
    }
  }

  std::vector<Id> stab(double x) const {
    std::vector<Id> out;
    stab(x, out);
    return out;
  }

  std::vector<Id> ids() const {
    std::vector<Id> out;
    out.reserve(by_id_.size());
    for (const auto& [id, iv] : by_id_) out.push_back(id);
    std::sort(out.begin(), out.end());
    return out;
  }

private:
  std::unordered_map<Id, Interval> by_id_;
  std::set<std::pair<double, Id>> by_lo_;
  std::multiset<double> widths_;
};

struct CacheEntry {
  QueryId query_id = 0;
  ServeId serve_id = 0;
  double cached_at = 0.0;
  double expires_at = 0.0;
  std::optional<double> invalidation_pending_since;
};

struct OriginIndexEntry {
  QueryId query_id = 0;
  ServeId serve_id = 0;
  double lo = 0.0;
  double hi = 0.0;
  double expires_at = 0.0;
  double served_at = 0.0;
};

struct CacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t stale_reads = 0;
  std::uint64_t invalidations = 0;  // applied at the edge
  std::uint64_t invalidations_issued = 0;
  std::uint64_t inserts = 0;
  std::uint64_t evictions = 0;  // capacity evictions
  std::uint64_t expirations = 0;
  double current_load = 0.0;
};

enum class LookupResult { Hit, StaleHit, Miss };

inline const char* to_string(LookupResult r) {
  switch (r) {
    case LookupResult::Hit: return "hit";
    case LookupResult::StaleHit: return "stale_hit";
    case LookupResult::Miss: return "miss";
  }
  return "?";
}

/// Issued invalidation, to be applied at the edge after propagation.
struct Invalidation {
  QueryId query_id = 0;
  ServeId serve_id = 0;
  double issued_at = 0.0;
};

struct InsertResult {
  bool inserted = false;
  std::optional<QueryId> evicted;
};

/// Single CDN edge cache plus the origin's index of cached query ranges.
class CacheSystem {
public:
  explicit CacheSystem(std::size_t capacity) : capacity_(capacity) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t live_entries() const { return edge_.size(); }
  double load() const { return capacity_ == 0 ? 0.0 : static_cast<double>(edge_.size()) / static_cast<double>(capacity_); }

  CacheStats stats() const {
    CacheStats s = stats_;
    s.current_load = load();
    return s;
  }

  const CacheEntry* edge_entry(QueryId id) const {
    const auto it = edge_.find(id);
    return it == edge_.end() ? nullptr : &it->second;
  }
  const OriginIndexEntry* index_entry(QueryId id) const {
    const auto it = index_.find(id);
    return it == index_.end() ? nullptr : &it->second;
  }

  /// Drops every entry with expires_at <= now from both the edge and the index.
  void expire(double now) {
    while (!by_expiry_.empty() && by_expiry_.begin()->first <= now) {
      const QueryId id = by_expiry_.begin()->second;
      remove(id);
      ++stats_.expirations;
    }
  }

  LookupResult lookup(QueryId id, double now) {
    expire(now);
    const auto it = edge_.find(id);
    if (it == edge_.end()) {
      ++stats_.misses;
      return LookupResult::Miss;
    }
    ++stats_.hits;
    if (it->second.invalidation_pending_since) {
      ++stats_.stale_reads;
      return LookupResult::StaleHit;
    }
    return LookupResult::Hit;
  }

  /// Caches the result of `id` (range [lo, hi)) for `ttl` seconds. At
  /// capacity the earliest-expiring entry is evicted first.
  InsertResult insert(QueryId id, ServeId serve, double lo, double hi, double ttl, double now) {
    if (!(ttl > 0.0)) throw std::invalid_argument("cache insert: ttl must be positive");
    expire(now);
    InsertResult result;
    if (capacity_ == 0) return result;
    if (edge_.count(id) != 0) remove(id);
    if (edge_.size() >= capacity_) {
      const QueryId victim = by_expiry_.begin()->second;
      remove(victim);
      ++stats_.evictions;
      result.evicted = victim;
    }
    const double expires_at = now + ttl;
    edge_.emplace(id, CacheEntry{id, serve, now, expires_at, std::nullopt});
    by_expiry_.emplace(expires_at, id);
    index_.emplace(id, OriginIndexEntry{id, serve, lo, hi, expires_at, now});
    ranges_.insert(id, lo, hi);
    ++stats_.inserts;
    result.inserted = true;
    return result;
  }

  /// Finds live cached queries whose result changes when a record moves
  /// from old_value to new_value. Each match leaves the index and is marked
  /// invalidation-pending at the edge.
  std::vector<Invalidation> origin_update(double old_value, double new_value, double now) {
    expire(now);
    scratch_.clear();
    ranges_.stab(old_value, scratch_);
    ranges_.stab(new_value, scratch_);
    std::sort(scratch_.begin(), scratch_.end());
    scratch_.erase(std::unique(scratch_.begin(), scratch_.end()), scratch_.end());

    std::vector<Invalidation> out;
    out.reserve(scratch_.size());
    for (QueryId id : scratch_) {
      const auto idx = index_.find(id);
      out.push_back({id, idx->second.serve_id, now});
      ranges_.erase(id);
      index_.erase(idx);
      edge_.at(id).invalidation_pending_since = now;
      ++stats_.invalidations_issued;
    }
    return out;
  }

  /// Removes the invalidated edge entry. A no-op if the entry already left
  /// the cache (expiry or eviction raced propagation).
  bool apply_invalidation(const Invalidation& inv, double now) {
    expire(now);
    const auto it = edge_.find(inv.query_id);
    if (it == edge_.end() || it->second.serve_id != inv.serve_id || !it->second.invalidation_pending_since) return false;
    remove(inv.query_id);
    ++stats_.invalidations;
    return true;
  }

  /// Live origin-index ids equal live edge ids minus pending invalidations.
  bool consistent() const {
    std::vector<QueryId> edge_ids;
    for (const auto& [id, e] : edge_)
      if (!e.invalidation_pending_since) edge_ids.push_back(id);
    std::sort(edge_ids.begin(), edge_ids.end());
    std::vector<QueryId> index_ids;
    for (const auto& [id, e] : index_) index_ids.push_back(id);
    std::sort(index_ids.begin(), index_ids.end());
    return edge_ids == index_ids && ranges_.ids() == index_ids;
  }

  std::vector<OriginIndexEntry> index_entries() const {
    std::vector<OriginIndexEntry> out;
    for (const auto& [id, e] : index_) out.push_back(e);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.query_id < b.query_id; });
    return out;
  }

private:
  void remove(QueryId id) {
    const auto it = edge_.find(id);
    if (it == edge_.end()) return;
    by_expiry_.erase({it->second.expires_at, id});
    edge_.erase(it);
    if (index_.erase(id) != 0) ranges_.erase(id);
  }

  std::size_t capacity_;
  std::unordered_map<QueryId, CacheEntry> edge_;
  std::set<std::pair<double, QueryId>> by_expiry_;
  std::unordered_map<QueryId, OriginIndexEntry> index_;
  IntervalIndex<QueryId> ranges_;
  CacheStats stats_;
  std::vector<QueryId> scratch_;
};

}  // namespace ttllab
