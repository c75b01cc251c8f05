#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ttllab/dei.hpp"
#include "ttllab/metrics.hpp"
#include "ttllab/naf.hpp"
#include "ttllab/telemetry.hpp"

namespace ttllab {

/// What an estimator may observe and schedule inside the simulation. Only
/// server-side signals are exposed; the true-TTL oracle is not.
class SimEnv {
public:
  virtual ~SimEnv() = default;
  virtual double now() const = 0;
  virtual Telemetry& telemetry() = 0;
  virtual double cache_load() const = 0;
  virtual double write_fraction() const = 0;
  /// When an invalidation for this serve was issued, if any.
  virtual std::optional<double> invalidation_time(ServeId serve) const = 0;
  /// Current result keys of a cached query id.
  virtual std::vector<std::size_t> result_keys(QueryId query) const = 0;
  virtual void schedule_due(double at, std::uint64_t token) = 0;
  virtual void schedule_train() = 0;
  /// Notification that a transition entered replay.
  virtual void on_injected(const Transition&) {}
};

struct DecisionContext {
  QueryId query = 0;
  std::span<const std::size_t> result_keys;
  ServeId serve = 0;
};

class TtlEstimator {
public:
  virtual ~TtlEstimator() = default;
  virtual std::string name() const = 0;
  /// TTL in seconds for a result about to be cached; always positive.
  virtual double decide(const DecisionContext& ctx, SimEnv& env) = 0;
  virtual void on_due(std::uint64_t /*token*/, SimEnv& /*env*/) {}
  virtual std::optional<TrainResult> on_train(SimEnv& /*env*/) { return std::nullopt; }
  virtual const NafAgent* agent() const { return nullptr; }
};

/// Expected time to the first write on any result key, assuming independent
/// Poisson writers: 1 / sum(lambda). Keys without a tracked rate count as
/// 1 / max_ttl. Capped at max_ttl.
inline double poisson_ttl(std::span<const std::size_t> result_keys, const WriteRateTracker& writes, double max_ttl,
                          double now) {
  if (result_keys.empty()) throw std::invalid_argument("poisson_ttl: empty result set");
  if (!(max_ttl > 0.0)) throw std::invalid_argument("poisson_ttl: max_ttl must be positive");
  double lambda_min = 0.0;
  for (std::size_t key : result_keys) lambda_min += writes.write_rate(key, now).value_or(1.0 / max_ttl);
  return std::min(1.0 / lambda_min, max_ttl);
}

class FixedEstimator final : public TtlEstimator {
public:
  explicit FixedEstimator(double ttl) : ttl_(ttl) {
    if (!(ttl > 0.0) || !std::isfinite(ttl)) throw std::invalid_argument("fixed estimator: ttl must be positive");
  }
  std::string name() const override { return "fixed"; }
  double decide(const DecisionContext&, SimEnv&) override { return ttl_; }

private:
  double ttl_;
};

class PoissonEstimator final : public TtlEstimator {
public:
  explicit PoissonEstimator(double max_ttl) : max_ttl_(max_ttl) {
    if (!(max_ttl > 0.0)) throw std::invalid_argument("poisson estimator: max_ttl must be positive");
  }
  std::string name() const override { return "poisson"; }
  double decide(const DecisionContext& ctx, SimEnv& env) override {
    // An empty result has no writer to wait for.
    if (ctx.result_keys.empty()) return max_ttl_;
    return poisson_ttl(ctx.result_keys, env.telemetry().writes, max_ttl_, env.now());
  }

private:
  double max_ttl_;
};

enum class NafMode { Dei, Naive };

/// Which decision a naive-mode reward is attached to.
enum class NaivePairing {
  Current,   // (s_t, a_t) with the reward of the query's previous episode, s_next = s_t
  Previous,  // (s_prev, a_prev) with that same reward, s_next = s_t
};

/// NAF agent deciding TTLs. In DEI mode each decision becomes an incomplete
/// transition completed when its TTL elapses; in naive mode the transition
/// is completed at decision time from the query's previous episode.
class NafEstimator final : public TtlEstimator {
public:
  NafEstimator(const NafConfig& cfg, const RewardConfig& reward, NafMode mode, std::uint64_t seed,
               NaivePairing pairing = NaivePairing::Current)
      : agent_(cfg, seed), reward_(reward), mode_(mode), pairing_(pairing) {
    reward_.validate();
  }

  std::string name() const override { return mode_ == NafMode::Dei ? "naf-dei" : "naf-naive"; }
  const NafAgent* agent() const override { return &agent_; }
  NafAgent& mutable_agent() { return agent_; }
  NafMode mode() const { return mode_; }
  NaivePairing pairing() const { return pairing_; }
  const ExpirationQueue& expiration_queue() const { return queue_; }

  double decide(const DecisionContext& ctx, SimEnv& env) override {
    const double now = env.now();
    std::vector<double> s = build_state(ctx.result_keys, env.telemetry(), ctx.query, now, agent_.config().write_inputs);
    std::vector<double> a = agent_.act(s);
    const double ttl = a.front();
    if (mode_ == NafMode::Dei) {
      const std::uint64_t token = queue_.enqueue({ctx.serve, ctx.query, std::move(s), std::move(a), now, now + ttl});
      env.schedule_due(now + ttl, token);
    } else {
      if (auto t = naive_complete(ctx.query, s, a, env)) {
        t->serve_id = ctx.serve;
        t->query_id = ctx.query;
        t->decided_at = now;
        t->injected_at = now;
        inject(std::move(*t), env);
      }
      previous_[ctx.query] = {ctx.serve, now, ttl, s, a};
    }
    return ttl;
  }

  /// Queue consumer: reward and next state are measured now, at the due time.
  void on_due(std::uint64_t token, SimEnv& env) override {
    std::optional<IncompleteTransition> it = queue_.take(token);
    if (!it) return;
    const double now = env.now();
    Transition t;
    t.r = compute_reward(env.invalidation_time(it->serve_id), it->decided_at, it->due_at, env.cache_load(),
                         reward_.effective_threshold(env.write_fraction()), reward_);
    const std::vector<std::size_t> keys = env.result_keys(it->query_id);
    t.s_next = build_state(keys, env.telemetry(), it->query_id, now, agent_.config().write_inputs);
    t.s = std::move(it->s);
    t.a = std::move(it->a);
    t.serve_id = it->serve_id;
    t.query_id = it->query_id;
    t.decided_at = it->decided_at;
    t.injected_at = now;
    inject(std::move(t), env);
  }

  /// Naive completion: the reward of the query's most recent episode,
  /// measured now, is attached to the current decision (s_next = s) or to
  /// the previous one (s_next = current s). Nothing is produced for a
  /// query's first decision.
  std::optional<Transition> naive_complete(QueryId query, const std::vector<double>& s, const std::vector<double>& a,
                                           SimEnv& env) const {
    const auto prev = previous_.find(query);
    if (prev == previous_.end()) return std::nullopt;
    const Episode& ep = prev->second;
    Transition t;
    t.s = pairing_ == NaivePairing::Current ? s : ep.s;
    t.a = pairing_ == NaivePairing::Current ? a : ep.a;
    t.s_next = s;
    t.r = compute_reward(env.invalidation_time(ep.serve), ep.decided_at, ep.decided_at + ep.ttl, env.cache_load(),
                         reward_.effective_threshold(env.write_fraction()), reward_);
    return t;
  }

  std::optional<TrainResult> on_train(SimEnv&) override { return agent_.train_step(); }

private:
  struct Episode {
    ServeId serve = 0;
    double decided_at = 0.0;
    double ttl = 0.0;
    std::vector<double> s;
    std::vector<double> a;
  };

  void inject(Transition t, SimEnv& env) {
    env.on_injected(t);
    agent_.replay().push(std::move(t));
    env.schedule_train();
  }

  NafAgent agent_;
  RewardConfig reward_;
  NafMode mode_;
  NaivePairing pairing_;
  ExpirationQueue queue_;
  std::unordered_map<QueryId, Episode> previous_;
};

struct BestDefault {
  double ttl = 0.0;
  double rmse = 0.0;
};

inline const std::vector<double>& default_ttl_grid() {
  static const std::vector<double> grid{1, 2, 5, 10, 20, 30, 60, 120, 300, 600};
  return grid;
}

/// Single constant TTL minimising truncated RMSE against the resolved true
/// TTLs; ties keep the earlier candidate.
inline BestDefault best_default_oracle(std::span<const double> true_ttls, std::span<const double> candidates,
                                       double percentile = 0.99) {
  if (true_ttls.empty()) throw std::invalid_argument("best_default_oracle: no resolved serves");
  if (candidates.empty()) throw std::invalid_argument("best_default_oracle: empty candidate grid");
  BestDefault best{candidates.front(), INFINITY};
  std::vector<double> errors(true_ttls.size());
  for (double c : candidates) {
    for (std::size_t i = 0; i < true_ttls.size(); ++i) errors[i] = c - true_ttls[i];
    const double rmse = truncated_rmse(errors, percentile);
    if (rmse < best.rmse) best = {c, rmse};
  }
  return best;
}

}  // namespace ttllab
