#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "fabricsim/link.hpp"
#include "fabricsim/types.hpp"

// Central hub. Strips command words off the incoming lanes, broadcasts
// events all-to-all under a per-route enable matrix, and arbitrates each
// output lane round-robin among contending inputs. The synchronization
// barrier is a separate state machine driving the out-of-band sync
// signal; it never competes with event traffic.

namespace fabricsim {

/// Static per-route enables, source lane -> destination lane.
class RouteMatrix {
 public:
  RouteMatrix() = default;
  explicit RouteMatrix(std::uint8_t node_count) : n_(node_count) {
    if (node_count > kMaxNodes) {
      throw std::invalid_argument("route matrix supports at most 16 lanes");
    }
  }

  std::uint8_t node_count() const { return n_; }

  void set(NodeId src, NodeId dst, bool enable) {
    check(src, dst);
    if (enable) {
      rows_[src.index()] |= static_cast<std::uint16_t>(1u << dst.index());
    } else {
      rows_[src.index()] &= static_cast<std::uint16_t>(~(1u << dst.index()));
    }
  }
  bool enabled(NodeId src, NodeId dst) const {
    check(src, dst);
    return (rows_[src.index()] >> dst.index()) & 1u;
  }
  std::uint16_t row(std::uint8_t src) const { return rows_[src]; }
  void set_row(std::uint8_t src, std::uint16_t mask) { rows_[src] = mask; }

  bool operator==(const RouteMatrix&) const = default;

 private:
  void check(NodeId src, NodeId dst) const {
    if (src.index() >= n_ || dst.index() >= n_) {
      throw std::out_of_range("route matrix index beyond configured node count");
    }
  }

  std::uint8_t n_ = 0;
  std::array<std::uint16_t, kMaxNodes> rows_{};
};

struct BarrierParams {
  std::uint16_t participants = 0;  // lane bitmask, must be non-empty
  std::uint32_t timeout_cycles = 125000;
  std::uint32_t refractory_cycles = 64;
};

/// Barrier synchronization state machine, stepped once per system cycle.
///
/// Idle -> Collecting on the first request; Fire (a one-cycle pulse) once
/// every participant has requested; then Refractory and back to Idle. A
/// collection that outlives the timeout aborts into Refractory without
/// firing. Requests from non-participants or during Refractory are
/// counted and ignored; duplicates are idempotent.
class BarrierFsm {
 public:
  enum class State : std::uint8_t { kIdle, kCollecting, kRefractory };

  struct StepResult {
    bool fired = false;
    bool timed_out = false;
  };

  explicit BarrierFsm(BarrierParams params);

  StepResult step(std::uint64_t sys_cycle, std::uint16_t request_mask);

  State state() const { return state_; }
  std::uint16_t pending() const { return pending_; }
  std::uint64_t ignored_requests() const { return ignored_requests_; }
  std::uint64_t timeout_count() const { return timeout_count_; }
  std::optional<std::uint64_t> fired_cycle() const { return fired_cycle_; }
  std::optional<std::uint64_t> next_deadline() const;

 private:
  BarrierParams params_;
  State state_ = State::kIdle;
  std::uint16_t pending_ = 0;
  std::uint64_t collecting_since_ = 0;
  std::uint64_t refractory_until_ = 0;
  std::uint64_t ignored_requests_ = 0;
  std::uint64_t timeout_count_ = 0;
  std::optional<std::uint64_t> fired_cycle_;
};

struct AggregatorParams {
  std::uint32_t pipeline_cycles = 9;  // MGT cycles from lane input to output queue head
  std::uint32_t queue_depth = 16;    // per-output contention queue
};

class Aggregator {
 public:
  Aggregator(RouteMatrix routes, BarrierParams barrier, AggregatorParams params);

  /// One tick: poll every input lane, route events, transmit one word per
  /// output lane, and advance the barrier on system edges.
  void step(Tick now, std::span<SerialLink<MgtFlit>> lanes_in,
            std::span<SerialLink<MgtFlit>> lanes_out);

  /// True only during the tick in which the sync signal fired.
  bool sync_pulse() const { return sync_pulse_; }
  std::optional<Tick> sync_fire_tick() const { return sync_fire_tick_; }
  bool barrier_timed_out() const { return fsm_.timeout_count() > 0; }

  const RouteMatrix& routes() const { return routes_; }
  const BarrierFsm& fsm() const { return fsm_; }

  std::uint64_t events_in() const { return events_in_; }
  std::uint64_t commands_in() const { return commands_in_; }
  std::uint64_t unrouted() const { return unrouted_; }
  std::uint64_t copies_routed() const { return copies_routed_; }
  std::uint64_t copy_drops() const { return copy_drops_; }
  std::uint64_t copies_sent() const { return copies_sent_; }
  std::uint64_t copy_drops_for(std::uint8_t lane) const { return drops_per_out_[lane]; }
  std::size_t queue_high_water(std::uint8_t lane) const { return high_water_[lane]; }

  std::size_t in_flight_events() const;
  std::optional<Tick> next_activity(Tick now) const;

 private:
  struct QueuedCopy {
    MgtFlit flit;
    Tick ready_at;
  };

  RouteMatrix routes_;
  BarrierFsm fsm_;
  AggregatorParams params_;

  std::array<std::deque<QueuedCopy>, kMaxNodes> out_queues_;
  std::array<std::uint8_t, kMaxNodes> rr_ptr_{};
  std::uint16_t pending_requests_ = 0;

  bool sync_pulse_ = false;
  std::optional<Tick> sync_fire_tick_;

  std::uint64_t events_in_ = 0;
  std::uint64_t commands_in_ = 0;
  std::uint64_t unrouted_ = 0;
  std::uint64_t copies_routed_ = 0;
  std::uint64_t copy_drops_ = 0;
  std::uint64_t copies_sent_ = 0;
  std::array<std::uint64_t, kMaxNodes> drops_per_out_{};
  std::array<std::size_t, kMaxNodes> high_water_{};
};

}  // namespace fabricsim
