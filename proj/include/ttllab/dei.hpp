#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "ttllab/cachesys.hpp"

namespace ttllab {

/// Decision whose reward and next state are not observable yet.
struct IncompleteTransition {
  ServeId serve_id = 0;
  QueryId query_id = 0;
  std::vector<double> s;
  std::vector<double> a;
  double decided_at = 0.0;
  double due_at = 0.0;
};

enum class LoadRewardForm {
  Penalty,  // -r0 * c above the threshold
  Literal,  // r0 * (1 - c) above the threshold
};

struct RewardConfig {
  double r0 = 1.0;
  double load_threshold = 0.8;
  bool adjust_threshold_to_workload = false;  // use 1 - write_fraction instead
  LoadRewardForm above_threshold = LoadRewardForm::Penalty;

  double effective_threshold(double write_fraction) const {
    return adjust_threshold_to_workload ? 1.0 - write_fraction : load_threshold;
  }

  void validate() const {
    if (!(r0 > 0.0)) throw std::invalid_argument("reward: r0 must be positive");
    if (!(load_threshold > 0.0 && load_threshold <= 1.0)) throw std::invalid_argument("reward: load_threshold outside (0,1]");
  }
};

/// Reward for a cached decision that was live over [decided_at, due_at).
/// An invalidation issued inside that window yields t_inv - due_at (< 0);
/// otherwise the static reward is scaled by the current load c, turning
/// into a penalty once c exceeds the threshold.
inline double compute_reward(std::optional<double> invalidated_at, double decided_at, double due_at, double load,
                             double threshold, const RewardConfig& cfg) {
  if (invalidated_at && *invalidated_at >= decided_at && *invalidated_at < due_at) return *invalidated_at - due_at;
  if (load <= threshold) return cfg.r0 * (1.0 + load);
  return cfg.above_threshold == LoadRewardForm::Penalty ? -cfg.r0 * load : cfg.r0 * (1.0 - load);
}

/// Incomplete transitions awaiting their due time. Tokens are handed to the
/// event queue; each transition is taken exactly once.
class ExpirationQueue {
public:
  std::uint64_t enqueue(IncompleteTransition it) {
    if (!(it.due_at > it.decided_at)) throw std::invalid_argument("expiration queue: due_at must follow decided_at");
    const std::uint64_t token = next_token_++;
    waiting_.emplace(token, std::move(it));
    return token;
  }

  std::optional<IncompleteTransition> take(std::uint64_t token) {
    const auto it = waiting_.find(token);
    if (it == waiting_.end()) return std::nullopt;
    IncompleteTransition out = std::move(it->second);
    waiting_.erase(it);
    return out;
  }

  std::size_t waiting() const { return waiting_.size(); }
  std::uint64_t enqueued() const { return next_token_; }

private:
  std::unordered_map<std::uint64_t, IncompleteTransition> waiting_;
  std::uint64_t next_token_ = 0;
};

}  // namespace ttllab
