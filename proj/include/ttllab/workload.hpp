#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ttllab/rng.hpp"

namespace ttllab {

/// Full description of one experiment's data and operation mix.
struct WorkloadSpec {
  std::size_t record_count = 2000;
  std::size_t query_count = 200;
  double write_fraction = 0.1;
  double query_fraction = 0.9;  // remainder are single-key reads
  double zipf_s = 0.6;
  double scan_mean = 10.0;
  double scan_std = 5.0;
  std::size_t result_cap = 20;
  double target_throughput = 200.0;  // ops per second, all connections
  std::size_t client_count = 10;
  std::size_t connections_per_client = 6;
  double duration = 300.0;  // seconds
  std::uint64_t seed = 1;

  std::size_t total_connections() const { return client_count * connections_per_client; }

  void validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("workload: " + what); };
    if (record_count == 0) fail("record_count must be positive");
    if (query_count == 0) fail("query_count must be positive");
    if (write_fraction < 0.0 || write_fraction > 1.0) fail("write_fraction outside [0,1]");
    if (query_fraction < 0.0 || query_fraction > 1.0) fail("query_fraction outside [0,1]");
    if (write_fraction + query_fraction > 1.0 + 1e-12) fail("write_fraction + query_fraction exceeds 1");
    if (!(zipf_s >= 0.0)) fail("zipf_s must be non-negative");
    if (!(scan_std > 0.0)) fail("scan_std must be positive");
    if (result_cap == 0) fail("result_cap must be positive");
    if (result_cap > record_count) fail("result_cap exceeds record_count");
    if (!(target_throughput > 0.0)) fail("target_throughput must be positive");
    if (total_connections() == 0) fail("need at least one connection");
    if (!(duration > 0.0)) fail("duration must be positive");
  }
};

struct Record {
  std::size_t key = 0;
  double value = 0.0;
};

/// Half-open range predicate [lo, hi) on the record value.
struct QueryDef {
  std::size_t id = 0;
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return lo <= v && v < hi; }
};

enum class OpKind { Read, Update, Query };

struct Op {
  OpKind kind = OpKind::Read;
  std::size_t key = 0;       // Read / Update
  double new_value = 0.0;    // Update
  std::size_t query_id = 0;  // Query
};

inline const char* to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Read: return "read";
    case OpKind::Update: return "update";
    case OpKind::Query: return "query";
  }
  return "?";
}

/// Exact Zipf sampler over ranks 1..n via cumulative table and binary search.
class ZipfSampler {
public:
  ZipfSampler(std::size_t n, double s) : s_(s) {
    if (n == 0) throw std::invalid_argument("zipf: n must be at least 1");
    if (!(s >= 0.0)) throw std::invalid_argument("zipf: exponent must be non-negative");
    cdf_.resize(n);
    double acc = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
      acc += std::pow(static_cast<double>(k), -s);
      cdf_[k - 1] = acc;
    }
    for (double& c : cdf_) c /= acc;
    cdf_.back() = 1.0;
  }

  std::size_t size() const { return cdf_.size(); }
  double exponent() const { return s_; }

  /// Rank in [1, n].
  std::size_t sample(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf_.begin(), cdf_.size() - 1)) + 1;
  }

  double pmf(std::size_t rank) const {
    if (rank < 1 || rank > cdf_.size()) return 0.0;
    return rank == 1 ? cdf_[0] : cdf_[rank - 1] - cdf_[rank - 2];
  }

private:
  std::vector<double> cdf_;
  double s_;
};

inline std::size_t zipf_sample(std::size_t n, double s, Rng& rng) { return ZipfSampler(n, s).sample(rng); }

/// Record values with an ordered secondary index for range evaluation.
class RecordStore {
public:
  RecordStore() = default;
  explicit RecordStore(std::span<const Record> records) {
    values_.resize(records.size());
    for (const Record& r : records) {
      values_.at(r.key) = r.value;
      by_value_.emplace(r.value, r.key);
    }
  }

  std::size_t size() const { return values_.size(); }
  double value(std::size_t key) const { return values_.at(key); }

  /// Returns the previous value.
  double update(std::size_t key, double new_value) {
    const double old = values_.at(key);
    by_value_.erase({old, key});
    values_[key] = new_value;
    by_value_.emplace(new_value, key);
    return old;
  }

  std::vector<std::size_t> evaluate(double lo, double hi) const {
    std::vector<std::size_t> keys;
    for (auto it = by_value_.lower_bound({lo, 0}); it != by_value_.end() && it->first < hi; ++it)
      keys.push_back(it->second);
    std::sort(keys.begin(), keys.end());
    return keys;
  }

  std::vector<Record> records() const {
    std::vector<Record> out(values_.size());
    for (std::size_t k = 0; k < values_.size(); ++k) out[k] = {k, values_[k]};
    return out;
  }

private:
  std::vector<double> values_;
  std::set<std::pair<double, std::size_t>> by_value_;
};

/// Sorted keys whose value lies in [q.lo, q.hi).
inline std::vector<std::size_t> evaluate_query(const RecordStore& store, const QueryDef& q) {
  return store.evaluate(q.lo, q.hi);
}

struct World {
  std::vector<Record> records;
  std::vector<QueryDef> queries;
};

/// Domain of record values is [0, record_count).
inline double value_domain(const WorkloadSpec& spec) { return static_cast<double>(spec.record_count); }

inline std::size_t draw_result_size(const WorkloadSpec& spec, Rng& rng) {
  const double draw = std::round(rng.normal(spec.scan_mean, spec.scan_std));
  return static_cast<std::size_t>(std::clamp(draw, 1.0, static_cast<double>(spec.result_cap)));
}

/// Builds records and range queries. Each query's initial cardinality is a
/// rounded N(scan_mean, scan_std) draw clamped to [1, result_cap].
inline World generate_world(const WorkloadSpec& spec, Rng& rng) {
  spec.validate();
  World world;
  world.records.resize(spec.record_count);
  const double domain = value_domain(spec);
  for (std::size_t k = 0; k < spec.record_count; ++k) world.records[k] = {k, rng.uniform(0.0, domain)};

  std::vector<double> sorted(spec.record_count);
  for (std::size_t k = 0; k < spec.record_count; ++k) sorted[k] = world.records[k].value;
  std::sort(sorted.begin(), sorted.end());

  world.queries.resize(spec.query_count);
  for (std::size_t q = 0; q < spec.query_count; ++q) {
    const std::size_t size = draw_result_size(spec, rng);
    // Anchor the range on a sorted position and close it just before the
    // next value, so the range holds exactly `size` records.
    for (;;) {
      const std::size_t start = rng.below(spec.record_count - size + 1);
      const double lo = sorted[start];
      const double hi = start + size < sorted.size() ? sorted[start + size] : domain;
      const auto first = std::lower_bound(sorted.begin(), sorted.end(), lo);
      const auto last = std::lower_bound(sorted.begin(), sorted.end(), hi);
      if (lo < hi && static_cast<std::size_t>(last - first) == size) {
        world.queries[q] = {q, lo, hi};
        break;
      }
    }
  }
  return world;
}

/// Draws the operation stream: updates with probability write_fraction,
/// queries with probability query_fraction, single-key reads otherwise.
/// Keys and query ids are Zipf distributed, rank 1 mapping to id 0.
class OpGenerator {
public:
  explicit OpGenerator(const WorkloadSpec& spec)
      : spec_(spec), keys_(spec.record_count, spec.zipf_s), queries_(spec.query_count, spec.zipf_s) {}

  Op next(Rng& rng) const {
    const double u = rng.uniform();
    Op op;
    if (u < spec_.write_fraction) {
      op.kind = OpKind::Update;
      op.key = keys_.sample(rng) - 1;
      op.new_value = rng.uniform(0.0, value_domain(spec_));
    } else if (u < spec_.write_fraction + spec_.query_fraction) {
      op.kind = OpKind::Query;
      op.query_id = queries_.sample(rng) - 1;
    } else {
      op.kind = OpKind::Read;
      op.key = keys_.sample(rng) - 1;
    }
    return op;
  }

private:
  WorkloadSpec spec_;
  ZipfSampler keys_;
  ZipfSampler queries_;
};

inline Op next_op(const OpGenerator& gen, Rng& rng) { return gen.next(rng); }

}  // namespace ttllab
