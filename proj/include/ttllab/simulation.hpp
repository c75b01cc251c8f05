#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ttllab/cachesys.hpp"
#include "ttllab/dei.hpp"
#include "ttllab/estimators.hpp"
#include "ttllab/metrics.hpp"
#include "ttllab/naf.hpp"
#include "ttllab/rng.hpp"
#include "ttllab/simcore.hpp"
#include "ttllab/telemetry.hpp"
#include "ttllab/workload.hpp"

namespace ttllab {

enum class EstimatorKind { Poisson, Fixed, NafDei, NafNaive };

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Poisson: return "poisson";
    case EstimatorKind::Fixed: return "fixed";
    case EstimatorKind::NafDei: return "naf-dei";
    case EstimatorKind::NafNaive: return "naf-naive";
  }
  return "?";
}

inline EstimatorKind parse_estimator_kind(const std::string& s) {
  if (s == "poisson") return EstimatorKind::Poisson;
  if (s == "fixed") return EstimatorKind::Fixed;
  if (s == "naf-dei") return EstimatorKind::NafDei;
  if (s == "naf-naive") return EstimatorKind::NafNaive;
  throw std::invalid_argument("unknown estimator kind '" + s + "'");
}

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::Poisson;
  double fixed_ttl = 300.0;
  double poisson_max_ttl = 300.0;
  NafConfig naf;
  RewardConfig reward;
  NaivePairing naive_pairing = NaivePairing::Current;
};

struct SimConfig {
  WorkloadSpec workload;
  LatencyModel latency;
  std::size_t cache_capacity = 160;
  double telemetry_window = 60.0;
  EstimatorConfig estimator;
  bool record_trace = false;
  std::size_t trace_max_rows = 200000;
  bool record_replay = false;
  bool record_timing = false;  // arrival times and train-batch timing, for checks
};

struct TraceRow {
  std::uint64_t op_index = 0;
  double time = 0.0;
  OpKind kind = OpKind::Read;
  std::size_t id = 0;
  const char* outcome = "";
  double latency = 0.0;
};

/// One training step's view of the transitions it sampled.
struct TrainSample {
  double time = 0.0;
  double latest_available = 0.0;  // max over the batch of decided_at + action
  double latest_injection = 0.0;
};

struct ReplayLogRow {
  ServeId serve_id = 0;
  QueryId query_id = 0;
  double decided_at = 0.0;
  double due_at = 0.0;
  double action = 0.0;
  double reward = 0.0;
  double injected_at = 0.0;
};

struct RunResult {
  std::string estimator;
  std::uint64_t seed = 0;
  double duration = 0.0;
  CacheStats cache;
  std::uint64_t ops = 0;
  std::uint64_t updates = 0;
  std::uint64_t query_ops = 0;
  std::uint64_t dropped_transitions = 0;
  std::uint64_t train_steps = 0;
  std::vector<double> window_throughput;  // ops/s per full stats window
  std::vector<ServeRecord> serves;
  std::vector<TraceRow> trace;
  std::vector<ReplayLogRow> replay_log;
  std::vector<TrainSample> train_samples;
  std::vector<std::vector<double>> arrivals;  // per connection, with record_timing

  double hit_rate() const {
    const double n = static_cast<double>(cache.hits + cache.misses);
    return n == 0.0 ? 0.0 : static_cast<double>(cache.hits) / n;
  }
  double invalidation_rate() const {
    return cache.inserts == 0 ? 0.0 : static_cast<double>(cache.invalidations) / static_cast<double>(cache.inserts);
  }
  double throughput() const { return duration > 0.0 ? static_cast<double>(ops) / duration : 0.0; }

  std::vector<double> errors() const {
    std::vector<double> out;
    for (const ServeRecord& r : serves)
      if (r.resolved_true_ttl) out.push_back(r.action_ttl - *r.resolved_true_ttl);
    return out;
  }
  std::vector<double> true_ttls() const {
    std::vector<double> out;
    for (const ServeRecord& r : serves)
      if (r.resolved_true_ttl) out.push_back(*r.resolved_true_ttl);
    return out;
  }
  std::optional<double> rmse(double percentile = 0.99) const {
    const std::vector<double> e = errors();
    if (e.empty()) return std::nullopt;
    return truncated_rmse(e, percentile);
  }
};

inline std::unique_ptr<TtlEstimator> make_estimator(const EstimatorConfig& cfg, std::uint64_t seed) {
  switch (cfg.kind) {
    case EstimatorKind::Poisson: return std::make_unique<PoissonEstimator>(cfg.poisson_max_ttl);
    case EstimatorKind::Fixed: return std::make_unique<FixedEstimator>(cfg.fixed_ttl);
    case EstimatorKind::NafDei: return std::make_unique<NafEstimator>(cfg.naf, cfg.reward, NafMode::Dei, seed);
    case EstimatorKind::NafNaive: return std::make_unique<NafEstimator>(cfg.naf, cfg.reward, NafMode::Naive, seed, cfg.naive_pairing);
  }
  throw std::invalid_argument("unknown estimator");
}

namespace event {
struct OpArrival {
  std::size_t connection = 0;
};
struct Response {
  std::uint64_t op_index = 0;
  double arrival = 0.0;
  double latency = 0.0;
  OpKind kind = OpKind::Read;
  std::size_t id = 0;
  LookupResult outcome = LookupResult::Miss;
  bool from_origin = false;
};
struct InvalidationApply {
  Invalidation inv;
};
struct DeiDue {
  std::uint64_t token = 0;
};
struct TrainStep {};
struct StatsTick {};
}  // namespace event

using Payload = std::variant<event::OpArrival, event::Response, event::InvalidationApply, event::DeiDue,
                             event::TrainStep, event::StatsTick>;

/// Client/edge/origin simulation over virtual time. All asynchronous work
/// (responses, invalidation propagation, delayed experience, training) is
/// expressed as events on one queue, so a run is a pure function of its
/// configuration and seed.
///
/// Streams: the world, the operation mix and the arrival process use their
/// own seeds, so every estimator sees the same operations for one seed.
class Simulation final : private SimEnv {
public:
  Simulation(const SimConfig& cfg, std::uint64_t seed)
      : cfg_(cfg),
        seed_(seed),
        world_rng_(mix_seed(seed, 0)),
        op_rng_(mix_seed(seed, 1)),
        arrival_rng_(mix_seed(seed, 2)),
        gen_(cfg.workload),
        cache_(cfg.cache_capacity),
        telemetry_(cfg.telemetry_window) {
    cfg_.workload.validate();
    cfg_.latency.validate();
    world_ = generate_world(cfg_.workload, world_rng_);
    store_ = RecordStore(world_.records);
    estimator_ = make_estimator(cfg_.estimator, mix_seed(seed, 3));
    if (cfg_.record_timing) result_.arrivals.resize(cfg_.workload.total_connections());
  }

  const World& world() const { return world_; }
  const RecordStore& store() const { return store_; }
  const CacheSystem& cache() const { return cache_; }
  const TrueTtlOracle& oracle() const { return oracle_; }
  const TtlEstimator& estimator() const { return *estimator_; }
  double current_time() const { return queue_.now(); }

  /// Runs for the configured duration. Events still queued at the end
  /// (including incomplete transitions) are dropped.
  RunResult run() {
    start_clients();
    queue_.schedule(kStatsWindow, event::StatsTick{});
    queue_.run_until(cfg_.workload.duration, [this](const SimEvent<Payload>& ev) { dispatch(ev); });
    cache_.expire(queue_.now());
    if (const auto* naf = dynamic_cast<const NafEstimator*>(estimator_.get()))
      result_.dropped_transitions = naf->expiration_queue().waiting();
    queue_.drop_pending();

    result_.estimator = estimator_->name();
    result_.seed = seed_;
    result_.duration = cfg_.workload.duration;
    result_.cache = cache_.stats();
    result_.serves = oracle_.records();
    if (const NafAgent* agent = estimator_->agent()) result_.train_steps = agent->train_steps();
    return std::move(result_);
  }

  /// Range cached under a cache id: query ids map to their definitions,
  /// ids past query_count are single-key reads.
  std::pair<double, double> range_of(QueryId id) const {
    if (id < world_.queries.size()) return {world_.queries[id].lo, world_.queries[id].hi};
    const double v = store_.value(id - world_.queries.size());
    return {v, std::nextafter(v, std::numeric_limits<double>::infinity())};
  }

private:
  static constexpr double kStatsWindow = 60.0;

  void start_clients() {
    for (std::size_t c = 0; c < cfg_.workload.total_connections(); ++c) schedule_next_arrival(c, 0.0);
  }

  double mean_interarrival() const {
    return static_cast<double>(cfg_.workload.total_connections()) / cfg_.workload.target_throughput;
  }

  void schedule_next_arrival(std::size_t connection, double from) {
    queue_.schedule(from + arrival_rng_.exponential(mean_interarrival()), event::OpArrival{connection});
  }

  void dispatch(const SimEvent<Payload>& ev) {
    std::visit([&](const auto& p) { handle(p); }, ev.payload);
  }

  void handle(const event::OpArrival& p) {
    const double now = queue_.now();
    if (cfg_.record_timing) result_.arrivals[p.connection].push_back(now);
    schedule_next_arrival(p.connection, now);
    const Op op = gen_.next(op_rng_);
    const std::uint64_t index = result_.ops++;
    ++window_ops_;
    if (op.kind == OpKind::Update)
      handle_update(op, index);
    else
      handle_read(op, index);
  }

  void handle_update(const Op& op, std::uint64_t index) {
    const double now = queue_.now();
    ++result_.updates;
    const double old_value = store_.update(op.key, op.new_value);
    telemetry_.writes.record_write(op.key, now);
    for (const Invalidation& inv : cache_.origin_update(old_value, op.new_value, now)) {
      set_invalidated(inv.serve_id, now);
      queue_.schedule(now + cfg_.latency.invalidation_delay, event::InvalidationApply{inv});
    }
    oracle_.on_write(old_value, op.new_value, now);
    respond(index, op.kind, op.key, LookupResult::Miss, true);
  }

  void handle_read(const Op& op, std::uint64_t index) {
    const double now = queue_.now();
    ++result_.query_ops;
    const QueryId id = op.kind == OpKind::Query ? op.query_id : world_.queries.size() + op.key;
    const LookupResult outcome = cache_.lookup(id, now);
    telemetry_.misses.record_request(id, now, outcome == LookupResult::Miss);
    if (outcome != LookupResult::Miss) {
      respond(index, op.kind, id, outcome, false);
      return;
    }
    const auto [lo, hi] = range_of(id);
    const std::vector<std::size_t> keys = store_.evaluate(lo, hi);
    const ServeId serve = oracle_.records().size();
    const double ttl = estimator_->decide({id, keys, serve}, *this);
    if (!(ttl > 0.0) || !std::isfinite(ttl)) throw std::logic_error("estimator returned a non-positive TTL");
    oracle_.on_serve(id, lo, hi, now, ttl);
    cache_.insert(id, serve, lo, hi, ttl, now);
    respond(index, op.kind, id, outcome, true);
  }

  void respond(std::uint64_t index, OpKind kind, std::size_t id, LookupResult outcome, bool from_origin) {
    const double latency = from_origin ? cfg_.latency.miss_latency() : cfg_.latency.hit_latency();
    queue_.schedule(queue_.now() + latency, event::Response{index, queue_.now(), latency, kind, id, outcome, from_origin});
  }

  void handle(const event::Response& p) {
    if (!cfg_.record_trace || result_.trace.size() >= cfg_.trace_max_rows) return;
    const char* outcome = p.kind == OpKind::Update ? "write" : to_string(p.outcome);
    result_.trace.push_back({p.op_index, p.arrival, p.kind, p.id, outcome, p.latency});
  }

  void handle(const event::InvalidationApply& p) { cache_.apply_invalidation(p.inv, queue_.now()); }

  void handle(const event::DeiDue& p) { estimator_->on_due(p.token, *this); }

  void handle(const event::TrainStep&) {
    const std::optional<TrainResult> step = estimator_->on_train(*this);
    if (!step || !cfg_.record_timing) return;
    const NafAgent* agent = estimator_->agent();
    TrainSample sample{queue_.now(), -INFINITY, -INFINITY};
    for (std::size_t i : step->batch) {
      const Transition& t = agent->replay().at(i);
      sample.latest_available = std::max(sample.latest_available, t.decided_at + t.a.front());
      sample.latest_injection = std::max(sample.latest_injection, t.injected_at);
    }
    result_.train_samples.push_back(sample);
  }

  void handle(const event::StatsTick&) {
    result_.window_throughput.push_back(static_cast<double>(window_ops_) / kStatsWindow);
    window_ops_ = 0;
    queue_.schedule(queue_.now() + kStatsWindow, event::StatsTick{});
  }

  void set_invalidated(ServeId serve, double now) {
    if (invalidated_at_.size() <= serve) invalidated_at_.resize(serve + 1, std::nan(""));
    if (std::isnan(invalidated_at_[serve])) invalidated_at_[serve] = now;
  }

  // SimEnv
  double now() const override { return queue_.now(); }
  Telemetry& telemetry() override { return telemetry_; }
  double cache_load() const override { return cache_.load(); }
  double write_fraction() const override { return cfg_.workload.write_fraction; }
  std::optional<double> invalidation_time(ServeId serve) const override {
    if (serve >= invalidated_at_.size() || std::isnan(invalidated_at_[serve])) return std::nullopt;
    return invalidated_at_[serve];
  }
  std::vector<std::size_t> result_keys(QueryId query) const override {
    const auto [lo, hi] = range_of(query);
    return store_.evaluate(lo, hi);
  }
  void schedule_due(double at, std::uint64_t token) override { queue_.schedule(at, event::DeiDue{token}); }
  void schedule_train() override { queue_.schedule(queue_.now(), event::TrainStep{}); }
  void on_injected(const Transition& t) override {
    if (!cfg_.record_replay) return;
    result_.replay_log.push_back(
        {t.serve_id, t.query_id, t.decided_at, t.decided_at + t.a.front(), t.a.front(), t.r,
         t.injected_at});
  }

  SimConfig cfg_;
  std::uint64_t seed_;
  Rng world_rng_;
  Rng op_rng_;
  Rng arrival_rng_;
  OpGenerator gen_;
  World world_;
  RecordStore store_;
  CacheSystem cache_;
  Telemetry telemetry_;
  TrueTtlOracle oracle_;
  std::unique_ptr<TtlEstimator> estimator_;
  EventQueue<Payload> queue_;
  std::vector<double> invalidated_at_;
  std::uint64_t window_ops_ = 0;
  RunResult result_;
};

inline RunResult run_simulation(const SimConfig& cfg, std::uint64_t seed) { return Simulation(cfg, seed).run(); }

}  // namespace ttllab
