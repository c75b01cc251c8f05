#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttllab/neural.hpp"
#include "ttllab/rng.hpp"
#include "ttllab/telemetry.hpp"

namespace ttllab {

struct NafConfig {
  std::size_t write_inputs = 10;  // n; the state has n + 1 components
  std::size_t action_dim = 1;
  std::vector<std::size_t> hidden = {30, 30};
  double gamma = 0.9;
  double lr = 0.0005;
  double clip = 30.0;
  ClipMode clip_mode = ClipMode::Element;
  std::size_t batch_size = 10;
  std::size_t replay_capacity = 50000;
  std::size_t target_sync_interval = 100;
  double target_tau = 0.0;  // > 0 switches to soft target updates every step
  double ttl_min = 1.0;
  double ttl_max = 600.0;
  // Network actions are (a - offset) / scale. Normalized mode maps
  // [ttl_min, ttl_max] onto [-1, 1]; raw mode feeds seconds directly.
  bool normalize_actions = true;
  // Multiplies rewards in Bellman targets; <= 0 selects 1 / action_scale()
  // so that time-valued rewards are measured in action units.
  double reward_scale = 0.0;
  std::size_t initial_random_decisions = 2000;
  double noise_sigma_start = 20.0;
  double noise_sigma_end = 1.0;
  std::size_t noise_decay_steps = 50000;

  std::size_t state_dim() const { return write_inputs + 1; }
  double action_offset() const { return normalize_actions ? 0.5 * (ttl_min + ttl_max) : 0.0; }
  double action_scale() const { return normalize_actions ? 0.5 * (ttl_max - ttl_min) : 1.0; }
  double effective_reward_scale() const { return reward_scale > 0.0 ? reward_scale : 1.0 / action_scale(); }
  std::size_t tri_dim() const { return action_dim * (action_dim + 1) / 2; }
  std::size_t head_dim() const { return 1 + action_dim + tri_dim(); }

  std::vector<std::size_t> layer_dims() const {
    std::vector<std::size_t> dims{state_dim()};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(head_dim());
    return dims;
  }

  void validate() const {
    auto fail = [](const char* what) { throw std::invalid_argument(std::string("naf: ") + what); };
    if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must lie in [0, 1)");
    if (!(ttl_min > 0.0)) fail("ttl_min must be positive");
    if (!(ttl_max >= ttl_min)) fail("ttl_max below ttl_min");
    if (batch_size == 0 || batch_size > replay_capacity) fail("batch_size must lie in [1, replay_capacity]");
    if (action_dim == 0) fail("action_dim must be positive");
    if (target_sync_interval == 0) fail("target_sync_interval must be positive");
    if (!(lr > 0.0)) fail("lr must be positive");
    if (!(clip > 0.0)) fail("clip must be positive");
    if (!std::isfinite(reward_scale)) fail("reward_scale must be finite");
    if (normalize_actions && !(ttl_max > ttl_min)) fail("normalized actions need ttl_max > ttl_min");
  }
};

/// Network outputs split into value, mean action and the packed lower
/// triangle (row-major) of the advantage Cholesky factor. Diagonal entries
/// are log-scale.
struct NafOutputs {
  double value = 0.0;
  std::vector<double> mu;
  std::vector<double> l;

  static NafOutputs split(std::span<const double> head, std::size_t action_dim) {
    const std::size_t tri = action_dim * (action_dim + 1) / 2;
    if (head.size() != 1 + action_dim + tri) throw std::invalid_argument("naf: head width mismatch");
    NafOutputs o;
    o.value = head[0];
    o.mu.assign(head.begin() + 1, head.begin() + 1 + static_cast<std::ptrdiff_t>(action_dim));
    o.l.assign(head.begin() + 1 + static_cast<std::ptrdiff_t>(action_dim), head.end());
    return o;
  }

  std::size_t action_dim() const { return mu.size(); }

  /// Dense row-major L with exponentiated diagonal.
  std::vector<double> cholesky() const {
    const std::size_t d = mu.size();
    std::vector<double> L(d * d, 0.0);
    std::size_t k = 0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j <= i; ++j, ++k) L[i * d + j] = i == j ? std::exp(l[k]) : l[k];
    return L;
  }

  /// P = L L^T.
  std::vector<double> precision() const {
    const std::size_t d = mu.size();
    const std::vector<double> L = cholesky();
    std::vector<double> P(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = 0; k < d; ++k) P[i * d + j] += L[i * d + k] * L[j * d + k];
    return P;
  }

  /// Q(s, a) = V(s) - 1/2 (a - mu)^T P (a - mu).
  double q(std::span<const double> action) const {
    const std::size_t d = mu.size();
    const std::vector<double> L = cholesky();
    double quad = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double z = 0.0;  // (L^T u)_j
      for (std::size_t i = j; i < d; ++i) z += L[i * d + j] * (action[i] - mu[i]);
      quad += z * z;
    }
    return value - 0.5 * quad;
  }

  /// dQ/d(head outputs), laid out like the head.
  std::vector<double> q_gradient(std::span<const double> action) const {
    const std::size_t d = mu.size();
    const std::vector<double> L = cholesky();
    std::vector<double> u(d), z(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) u[i] = action[i] - mu[i];
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t i = j; i < d; ++i) z[j] += L[i * d + j] * u[i];

    std::vector<double> g(1 + d + l.size(), 0.0);
    g[0] = 1.0;
    // dQ/dmu = P u = L z
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j <= i; ++j) g[1 + i] += L[i * d + j] * z[j];
    // dQ/dL_ij = -u_i z_j, chained through exp on the diagonal
    std::size_t k = 0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j <= i; ++j, ++k) {
        const double dl = -u[i] * z[j];
        g[1 + d + k] = i == j ? dl * L[i * d + i] : dl;
      }
    return g;
  }
};

inline NafOutputs naf_outputs(const MlpParams& params, std::span<const double> state, std::size_t action_dim) {
  const Activations acts = forward(params, state);
  return NafOutputs::split(acts.output(), action_dim);
}

inline double q_value(const MlpParams& params, std::span<const double> state, std::span<const double> action) {
  const std::size_t d = action.size();
  return naf_outputs(params, state, d).q(action);
}

struct Transition {
  std::vector<double> s;
  std::vector<double> a;
  double r = 0.0;
  std::vector<double> s_next;
  // Bookkeeping for timing checks; not used by learning.
  ServeId serve_id = 0;
  QueryId query_id = 0;
  double decided_at = 0.0;
  double injected_at = 0.0;
};

/// Fixed-capacity ring of transitions with uniform sampling (with replacement).
class ReplayMemory {
public:
  explicit ReplayMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay: capacity must be positive");
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t total_inserted() const { return inserted_; }

  void push(Transition t) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
    ++inserted_;
  }

  const Transition& at(std::size_t i) const { return items_.at(i); }

  std::vector<std::size_t> sample(Rng& rng, std::size_t n) const {
    std::vector<std::size_t> out(n);
    for (auto& i : out) i = static_cast<std::size_t>(rng.below(items_.size()));
    return out;
  }

private:
  std::size_t capacity_;
  std::vector<Transition> items_;
  std::size_t head_ = 0;
  std::uint64_t inserted_ = 0;
};

/// Mini-batch loss (1/N) sum (y_i - Q(s_i, a_i))^2 with y_i computed from the
/// target network's value head. Gradients are accumulated into `grads`.
/// Stored actions (seconds) enter Q as (a - action_offset) / action_scale.
inline double naf_batch_loss(const MlpParams& params, const MlpParams& target, double gamma,
                             std::span<const Transition* const> batch, std::size_t action_dim, MlpParams* grads,
                             double action_offset = 0.0, double action_scale = 1.0, double reward_scale = 1.0) {
  double loss = 0.0;
  const double n = static_cast<double>(batch.size());
  std::vector<double> a(action_dim);
  for (const Transition* t : batch) {
    for (std::size_t i = 0; i < action_dim; ++i) a[i] = (t->a[i] - action_offset) / action_scale;
    const double y = reward_scale * t->r + gamma * naf_outputs(target, t->s_next, action_dim).value;
    const Activations acts = forward(params, t->s);
    const NafOutputs out = NafOutputs::split(acts.output(), action_dim);
    const double diff = y - out.q(a);
    loss += diff * diff / n;
    if (grads) {
      std::vector<double> g = out.q_gradient(a);
      const double scale = -2.0 * diff / n;
      for (double& v : g) v *= scale;
      backward_accumulate(params, acts, g, *grads);
    }
  }
  return loss;
}

struct TrainResult {
  double loss = 0.0;
  std::vector<std::size_t> batch;  // replay indices
};

/// Write-rate part sorted descending, clipped to [0, 1] and zero padded to
/// n entries, followed by the miss-rate delta.
inline std::vector<double> assemble_state(std::vector<double> rates, std::size_t n, double miss_delta) {
  for (double& r : rates) r = std::clamp(r, 0.0, 1.0);
  std::sort(rates.begin(), rates.end(), std::greater<>());
  rates.resize(n, 0.0);
  rates.push_back(miss_delta);
  return rates;
}

/// State for a query decision from the available write rates of its result
/// keys and the query's miss-rate delta.
inline std::vector<double> build_state(std::span<const std::size_t> result_keys, Telemetry& telemetry, QueryId query,
                                       double now, std::size_t n) {
  std::vector<double> rates;
  rates.reserve(result_keys.size());
  for (std::size_t key : result_keys)
    if (const auto rate = telemetry.writes.write_rate(key, now)) rates.push_back(*rate);
  return assemble_state(std::move(rates), n, telemetry.misses.miss_rate_delta(query, now));
}

class NafAgent {
public:
  NafAgent(const NafConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), rng_(seed), replay_(cfg.replay_capacity) {
    cfg_.validate();
    params_ = init_mlp(cfg_.layer_dims(), rng_);
    target_ = params_;
    adam_ = AdamState(params_.size());
  }

  const NafConfig& config() const { return cfg_; }
  const MlpParams& params() const { return params_; }
  const MlpParams& target_params() const { return target_; }
  MlpParams& mutable_params() { return params_; }
  ReplayMemory& replay() { return replay_; }
  const ReplayMemory& replay() const { return replay_; }
  std::uint64_t train_steps() const { return train_steps_; }
  std::uint64_t decisions() const { return decisions_; }

  /// Head outputs in network units.
  NafOutputs evaluate(std::span<const double> state) const { return naf_outputs(params_, state, cfg_.action_dim); }

  /// Greedy action mu(s) in seconds, unclamped.
  std::vector<double> greedy(std::span<const double> state) const {
    std::vector<double> mu = evaluate(state).mu;
    for (double& v : mu) v = cfg_.action_offset() + v * cfg_.action_scale();
    return mu;
  }

  /// Q(s, a) with the action given in seconds.
  double q(std::span<const double> state, std::span<const double> action_seconds) const {
    std::vector<double> a(action_seconds.begin(), action_seconds.end());
    for (double& v : a) v = (v - cfg_.action_offset()) / cfg_.action_scale();
    return evaluate(state).q(a);
  }

  double noise_sigma(std::uint64_t step) const {
    const double frac = cfg_.noise_decay_steps == 0
                            ? 1.0
                            : std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg_.noise_decay_steps));
    return cfg_.noise_sigma_start + (cfg_.noise_sigma_end - cfg_.noise_sigma_start) * frac;
  }

  /// Uniform random actions during the initial exploration period, then
  /// mu(s) plus decaying Gaussian noise; always clamped to the TTL bounds.
  std::vector<double> act(std::span<const double> state, std::uint64_t step) {
    std::vector<double> a(cfg_.action_dim);
    if (step < cfg_.initial_random_decisions) {
      for (double& v : a) v = rng_.uniform(cfg_.ttl_min, cfg_.ttl_max);
      return a;
    }
    const std::vector<double> mu = greedy(state);
    const double sigma = noise_sigma(step);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double noisy = sigma > 0.0 ? mu[i] + rng_.normal(0.0, sigma) : mu[i];
      a[i] = std::clamp(noisy, cfg_.ttl_min, cfg_.ttl_max);
    }
    return a;
  }

  std::vector<double> act(std::span<const double> state) { return act(state, decisions_++); }

  /// One Adam step on a uniformly sampled mini-batch. Returns the loss
  /// before the step, or nullopt when the replay holds fewer than N items.
  std::optional<TrainResult> train_step() {
    if (replay_.size() < cfg_.batch_size) return std::nullopt;
    TrainResult result;
    result.batch = replay_.sample(rng_, cfg_.batch_size);
    std::vector<const Transition*> batch;
    batch.reserve(result.batch.size());
    for (std::size_t i : result.batch) batch.push_back(&replay_.at(i));

    MlpParams grads = params_.zeros_like();
    result.loss = naf_batch_loss(params_, target_, cfg_.gamma, batch, cfg_.action_dim, &grads, cfg_.action_offset(),
                                 cfg_.action_scale(), cfg_.effective_reward_scale());
    adam_step(params_, grads, adam_, cfg_.lr, cfg_.clip, cfg_.clip_mode);
    ++train_steps_;

    if (cfg_.target_tau > 0.0) {
      for (std::size_t i = 0; i < target_.size(); ++i)
        target_.data[i] = cfg_.target_tau * params_.data[i] + (1.0 - cfg_.target_tau) * target_.data[i];
    } else if (train_steps_ % cfg_.target_sync_interval == 0) {
      target_ = params_;
    }
    return result;
  }

private:
  NafConfig cfg_;
  Rng rng_;
  MlpParams params_;
  MlpParams target_;
  AdamState adam_;
  ReplayMemory replay_;
  std::uint64_t train_steps_ = 0;
  std::uint64_t decisions_ = 0;
};

}  // namespace ttllab
