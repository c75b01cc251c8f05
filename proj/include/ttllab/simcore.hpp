#pragma once

#include <cstdint>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

namespace ttllab {

class SchedulingError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Round-trip latencies in seconds.
struct LatencyModel {
  double edge_rtt = 0.004;
  double origin_rtt = 0.150;
  double invalidation_delay = 0.002;

  double hit_latency() const { return edge_rtt; }
  double miss_latency() const { return edge_rtt + origin_rtt; }

  void validate() const {
    if (edge_rtt < 0.0 || origin_rtt < 0.0 || invalidation_delay < 0.0)
      throw std::invalid_argument("latency: values must be non-negative");
  }
};

template <class Payload>
struct SimEvent {
  double time = 0.0;
  std::uint64_t seq = 0;
  Payload payload{};
};

/// Virtual-time event queue; dispatch order is (time, seq).
template <class Payload>
class EventQueue {
public:
  double now() const { return now_; }
  std::size_t pending() const { return heap_.size(); }
  std::uint64_t dispatched() const { return dispatched_; }

  std::uint64_t schedule(double time, Payload payload) {
    if (time < now_)
      throw SchedulingError("event scheduled in the past: " + std::to_string(time) + " < " + std::to_string(now_));
    const std::uint64_t seq = next_seq_++;
    heap_.push(SimEvent<Payload>{time, seq, std::move(payload)});
    return seq;
  }

  /// Dispatches every event with time <= t_end, then advances the clock to
  /// t_end. Handlers may schedule further events.
  template <class Handler>
  std::size_t run_until(double t_end, Handler&& handler) {
    if (t_end < now_) throw SchedulingError("run_until target lies in the past");
    std::size_t count = 0;
    while (!heap_.empty() && heap_.top().time <= t_end) {
      SimEvent<Payload> ev = heap_.top();
      heap_.pop();
      now_ = ev.time;
      ++count;
      ++dispatched_;
      handler(ev);
    }
    now_ = t_end;
    return count;
  }

  /// Discards everything still queued.
  std::size_t drop_pending() {
    const std::size_t n = heap_.size();
    heap_ = {};
    return n;
  }

private:
  struct Later {
    bool operator()(const SimEvent<Payload>& a, const SimEvent<Payload>& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  std::priority_queue<SimEvent<Payload>, std::vector<SimEvent<Payload>>, Later> heap_;
  double now_ = 0.0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t dispatched_ = 0;
};

}  // namespace ttllab
