#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ttllab/cachesys.hpp"

namespace ttllab {

/// Per-key write rates over a sliding window (now - window, now].
class WriteRateTracker {
public:
  explicit WriteRateTracker(double window = 60.0) : window_(window) {}

  double window() const { return window_; }

  void record_write(std::size_t key, double now) {
    auto& ring = writes_[key];
    ring.push_back(now);
    while (!ring.empty() && ring.front() <= now - window_) ring.pop_front();
  }

  /// Writes per second, or nullopt when no write fell inside the window.
  std::optional<double> write_rate(std::size_t key, double now) const {
    const auto it = writes_.find(key);
    if (it == writes_.end()) return std::nullopt;
    const auto& ring = it->second;
    const auto first = std::upper_bound(ring.begin(), ring.end(), now - window_);
    const auto last = std::upper_bound(ring.begin(), ring.end(), now);
    const auto n = last - first;
    if (n <= 0) return std::nullopt;
    return static_cast<double>(n) / window_;
  }

private:
  double window_;
  std::unordered_map<std::size_t, std::deque<double>> writes_;
};

/// Per-query windowed miss rates and the delta against the last reported
/// value.
class MissRateTracker {
public:
  explicit MissRateTracker(double window = 60.0) : window_(window) {}

  void record_request(QueryId id, double now, bool miss) {
    auto& q = per_query_[id];
    q.requests.push_back({now, miss});
    while (!q.requests.empty() && q.requests.front().first <= now - window_) q.requests.pop_front();
  }

  /// Miss fraction over the window, or nullopt with no requests in it.
  std::optional<double> current_rate(QueryId id, double now) const {
    const auto it = per_query_.find(id);
    if (it == per_query_.end()) return std::nullopt;
    std::size_t requests = 0;
    std::size_t misses = 0;
    for (const auto& [t, miss] : it->second.requests) {
      if (t <= now - window_ || t > now) continue;
      ++requests;
      if (miss) ++misses;
    }
    if (requests == 0) return std::nullopt;
    return static_cast<double>(misses) / static_cast<double>(requests);
  }

  /// Current minus last reported rate; the first call for a query yields 0.
  /// An empty window repeats the last reported rate.
  double miss_rate_delta(QueryId id, double now) {
    auto& q = per_query_[id];
    const std::optional<double> current = current_rate(id, now);
    if (!q.last_reported) {
      q.last_reported = current.value_or(0.0);
      return 0.0;
    }
    const double value = current.value_or(*q.last_reported);
    const double delta = value - *q.last_reported;
    q.last_reported = value;
    return delta;
  }

  /// Seeds the last reported rate, mainly for tests.
  void set_last_reported(QueryId id, double rate) { per_query_[id].last_reported = rate; }

private:
  struct PerQuery {
    std::deque<std::pair<double, bool>> requests;
    std::optional<double> last_reported;
  };
  double window_;
  std::unordered_map<QueryId, PerQuery> per_query_;
};

/// Server-observable metrics fed to estimators.
struct Telemetry {
  explicit Telemetry(double window = 60.0) : writes(window), misses(window) {}
  WriteRateTracker writes;
  MissRateTracker misses;
};

struct ServeRecord {
  ServeId serve_id = 0;
  QueryId query_id = 0;
  double served_at = 0.0;
  double action_ttl = 0.0;
  std::optional<double> resolved_true_ttl;
  bool shadow = false;  // resolved after its cache lifetime had already ended
};

struct StepError {
  ServeId serve_id = 0;
  double error = 0.0;  // action_ttl - resolved_true_ttl
};

/// Evaluation-only oracle for true TTLs. Each served result stays tracked
/// until the first write that changes it, whether or not it is still cached,
/// so expired results resolve to their theoretical true TTL.
class TrueTtlOracle {
public:
  ServeId on_serve(QueryId id, double lo, double hi, double now, double action_ttl) {
    const ServeId serve = records_.size();
    records_.push_back({serve, id, now, action_ttl, std::nullopt, false});
    pending_[id].push_back(serve);
    if (!ranges_.contains(id)) ranges_.insert(id, lo, hi);
    return serve;
  }

  /// Resolves every pending serve of every query whose result is changed
  /// by a record moving from old_value to new_value.
  std::size_t on_write(double old_value, double new_value, double now) {
    scratch_.clear();
    ranges_.stab(old_value, scratch_);
    ranges_.stab(new_value, scratch_);
    std::sort(scratch_.begin(), scratch_.end());
    scratch_.erase(std::unique(scratch_.begin(), scratch_.end()), scratch_.end());
    std::size_t resolved = 0;
    for (QueryId id : scratch_) resolved += on_invalidating_write(id, now);
    return resolved;
  }

  std::size_t on_invalidating_write(QueryId id, double now) {
    const auto it = pending_.find(id);
    if (it == pending_.end()) return 0;
    for (ServeId serve : it->second) {
      ServeRecord& rec = records_[serve];
      rec.resolved_true_ttl = now - rec.served_at;
      rec.shadow = now >= rec.served_at + rec.action_ttl;
    }
    const std::size_t n = it->second.size();
    pending_.erase(it);
    ranges_.erase(id);
    return n;
  }

  const std::vector<ServeRecord>& records() const { return records_; }
  const ServeRecord& record(ServeId id) const { return records_.at(id); }
  std::size_t pending_count() const {
    std::size_t n = 0;
    for (const auto& [id, v] : pending_) n += v.size();
    return n;
  }

  /// Errors of resolved serves; censored serves are excluded.
  std::vector<StepError> per_step_errors() const {
    std::vector<StepError> out;
    for (const ServeRecord& r : records_)
      if (r.resolved_true_ttl) out.push_back({r.serve_id, r.action_ttl - *r.resolved_true_ttl});
    return out;
  }

  std::vector<double> resolved_true_ttls() const {
    std::vector<double> out;
    for (const ServeRecord& r : records_)
      if (r.resolved_true_ttl) out.push_back(*r.resolved_true_ttl);
    return out;
  }

private:
  std::vector<ServeRecord> records_;
  std::unordered_map<QueryId, std::vector<ServeId>> pending_;
  IntervalIndex<QueryId> ranges_;
  std::vector<QueryId> scratch_;
};

}  // namespace ttllab
