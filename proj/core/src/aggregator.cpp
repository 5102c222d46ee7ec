#include "fabricsim/aggregator.hpp"

#include <bit>
#include <stdexcept>

namespace fabricsim {

BarrierFsm::BarrierFsm(BarrierParams params) : params_(params) {
  if (params_.participants == 0) {
    throw std::invalid_argument("barrier needs a non-empty participant set");
  }
}

BarrierFsm::StepResult BarrierFsm::step(std::uint64_t sys_cycle, std::uint16_t request_mask) {
  StepResult result;

  if (state_ == State::kRefractory && sys_cycle >= refractory_until_) {
    state_ = State::kIdle;
  }

  const std::uint16_t outsiders = request_mask & ~params_.participants;
  if (outsiders) ignored_requests_ += std::popcount(static_cast<unsigned>(outsiders));
  const std::uint16_t valid = request_mask & params_.participants;

  switch (state_) {
    case State::kIdle:
      if (valid) {
        state_ = State::kCollecting;
        collecting_since_ = sys_cycle;
        pending_ = params_.participants & static_cast<std::uint16_t>(~valid);
      }
      break;
    case State::kCollecting:
      pending_ &= static_cast<std::uint16_t>(~valid);  // duplicates are idempotent
      break;
    case State::kRefractory:
      if (valid) ignored_requests_ += std::popcount(static_cast<unsigned>(valid));
      return result;
  }

  if (state_ == State::kCollecting) {
    if (pending_ == 0) {
      result.fired = true;
      fired_cycle_ = sys_cycle;
      state_ = State::kRefractory;
      refractory_until_ = sys_cycle + 1 + params_.refractory_cycles;
    } else if (sys_cycle - collecting_since_ >= params_.timeout_cycles) {
      // Requests processed above get the benefit of the doubt at the
      // deadline; only a still-incomplete set aborts.
      result.timed_out = true;
      ++timeout_count_;
      state_ = State::kRefractory;
      refractory_until_ = sys_cycle + 1 + params_.refractory_cycles;
    }
  }
  return result;
}

std::optional<std::uint64_t> BarrierFsm::next_deadline() const {
  switch (state_) {
    case State::kCollecting:
      return collecting_since_ + params_.timeout_cycles;
    case State::kRefractory:
      return refractory_until_;
    case State::kIdle:
      return std::nullopt;
  }
  return std::nullopt;
}

Aggregator::Aggregator(RouteMatrix routes, BarrierParams barrier, AggregatorParams params)
    : routes_(routes), fsm_(barrier), params_(params) {
  if (params_.queue_depth < 1) {
    throw std::invalid_argument("aggregator queue depth must be >= 1");
  }
}

void Aggregator::step(Tick now, std::span<SerialLink<MgtFlit>> lanes_in,
                      std::span<SerialLink<MgtFlit>> lanes_out) {
  sync_pulse_ = false;
  const std::uint8_t n = routes_.node_count();

  // Inputs: one word per lane per cycle. Commands are stripped here and
  // never reach an output queue.
  std::array<std::optional<MgtFlit>, kMaxNodes> incoming;
  for (std::uint8_t lane = 0; lane < n; ++lane) {
    while (auto flit = lanes_in[lane].poll(now)) {
      const MgtWord& word = flit->word;
      if (word.is_command()) {
        ++commands_in_;
        if (word.payload == CommandCode::barrier_request().value()) {
          pending_requests_ |= static_cast<std::uint16_t>(1u << lane);
        }
        continue;
      }
      if (incoming[lane]) {
        throw std::logic_error("two event words on one input lane in one cycle");
      }
      incoming[lane] = *flit;
      ++events_in_;
    }
  }

  const std::uint16_t lane_mask = static_cast<std::uint16_t>((1u << n) - 1);
  for (std::uint8_t lane = 0; lane < n; ++lane) {
    if (incoming[lane] && (routes_.row(lane) & lane_mask) == 0) ++unrouted_;
  }

  // Fan-out: per output, contending inputs enter the queue in round-robin
  // order; the pointer rotates past the first contender served.
  for (std::uint8_t o = 0; o < n; ++o) {
    int first_contender = -1;
    for (std::uint8_t k = 0; k < n; ++k) {
      const std::uint8_t i = static_cast<std::uint8_t>((rr_ptr_[o] + k) % n);
      if (!incoming[i] || !routes_.enabled(NodeId{i}, NodeId{o})) continue;
      if (first_contender < 0) first_contender = i;
      ++copies_routed_;
      if (out_queues_[o].size() >= params_.queue_depth) {
        ++copy_drops_;
        ++drops_per_out_[o];
        continue;
      }
      out_queues_[o].push_back(QueuedCopy{*incoming[i], now + params_.pipeline_cycles});
      high_water_[o] = std::max(high_water_[o], out_queues_[o].size());
    }
    if (first_contender >= 0) {
      rr_ptr_[o] = static_cast<std::uint8_t>((first_contender + 1) % n);
    }
  }

  // One word per output lane per cycle.
  for (std::uint8_t o = 0; o < n; ++o) {
    if (out_queues_[o].empty() || out_queues_[o].front().ready_at > now) continue;
    if (lanes_out[o].try_send(out_queues_[o].front().flit, now)) {
      out_queues_[o].pop_front();
      ++copies_sent_;
    }
  }

  if (now % kTicksPerSystemCycle == 0) {
    const BarrierFsm::StepResult result = fsm_.step(now / kTicksPerSystemCycle, pending_requests_);
    pending_requests_ = 0;
    if (result.fired) {
      sync_pulse_ = true;
      sync_fire_tick_ = now;
    }
  }
}

std::size_t Aggregator::in_flight_events() const {
  std::size_t n = 0;
  for (const auto& q : out_queues_) n += q.size();
  return n;
}

std::optional<Tick> Aggregator::next_activity(Tick now) const {
  std::optional<Tick> best;
  auto consider = [&](Tick t) {
    t = std::max(t, now + 1);
    if (!best || t < *best) best = t;
  };
  for (std::uint8_t o = 0; o < routes_.node_count(); ++o) {
    if (!out_queues_[o].empty()) consider(out_queues_[o].front().ready_at);
  }
  if (pending_requests_) {
    Tick t = now + 1;
    t += t & 1;
    consider(t);
  }
  if (auto deadline = fsm_.next_deadline()) {
    consider(*deadline * kTicksPerSystemCycle);
  }
  return best;
}

}  // namespace fabricsim
