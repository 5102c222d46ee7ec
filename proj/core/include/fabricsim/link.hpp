#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <stdexcept>

#include "fabricsim/types.hpp"

// Serial lane model. A lane carries one word per link cycle at a fixed
// transport latency. The transceiver periodically inserts
// clock-compensation pauses: after cc_interval accepted words the line is
// busy for cc_length cycles and the sender is back-pressured. Pauses are
// word-count driven, so an idle lane never accumulates pause debt.
//
// The chip link variant moves one layer-2 group per system cycle with a
// sustained cap of two events per system cycle (250 Mevent/s), enforced
// by a token bucket with burst 3.

namespace fabricsim {

struct LinkParams {
  Tick latency_ticks = 1;
  std::uint64_t cc_interval = 0;  // words between pauses; 0 disables CC
  std::uint32_t cc_length = 2;    // pause duration in link cycles

  void validate() const {
    if (latency_ticks < 1) {
      throw std::invalid_argument("link latency must be at least one tick");
    }
    if (cc_interval != 0 && cc_length < 1) {
      throw std::invalid_argument("cc_length must be at least one cycle");
    }
  }
};

/// An MGT word plus its simulation-only metadata.
struct MgtFlit {
  MgtWord word;
  EventMeta meta;
};

/// A layer-2 group plus per-entry metadata.
struct ChipFlit {
  Layer2Group group;
  std::array<EventMeta, Layer2Group::kMaxEntries> meta{};
};

template <typename WordT>
class SerialLink {
 public:
  SerialLink() { params_.validate(); }
  explicit SerialLink(LinkParams params) : params_(params) { params_.validate(); }

  const LinkParams& params() const { return params_; }

  /// Attempts to put one word on the line. Returns false while the line
  /// transmits a clock-compensation pause; the caller must hold the word
  /// and retry next cycle. A second accepted send in one cycle is a
  /// simulation bug and throws.
  bool try_send(const WordT& word, Tick now) {
    if (params_.cc_interval != 0 && now < cc_busy_until_) {
      ++cc_backpressure_;
      return false;
    }
    if (have_sent_ && last_send_tick_ == now) {
      throw std::logic_error("double injection on a serial link in one cycle");
    }
    have_sent_ = true;
    last_send_tick_ = now;
    in_flight_.push_back(Pending{now + params_.latency_ticks, word});
    ++accepted_;
    if (params_.cc_interval != 0 && ++words_since_cc_ >= params_.cc_interval) {
      words_since_cc_ = 0;
      cc_busy_until_ = now + 1 + params_.cc_length;
      cc_pauses_ += params_.cc_length;
    }
    return true;
  }

  /// Hands out the word due this cycle, if any. Words arrive exactly
  /// once, latency_ticks after acceptance, in send order.
  std::optional<WordT> poll(Tick now) {
    if (in_flight_.empty() || in_flight_.front().deliver_at > now) {
      return std::nullopt;
    }
    WordT word = std::move(in_flight_.front().word);
    in_flight_.pop_front();
    ++delivered_;
    return word;
  }

  std::uint64_t accepted() const { return accepted_; }
  std::uint64_t delivered() const { return delivered_; }
  std::uint64_t cc_pauses() const { return cc_pauses_; }
  std::uint64_t cc_backpressure() const { return cc_backpressure_; }
  std::size_t in_flight() const { return in_flight_.size(); }

  std::optional<Tick> next_delivery() const {
    if (in_flight_.empty()) return std::nullopt;
    return in_flight_.front().deliver_at;
  }

  template <typename F>
  void for_each_in_flight(F&& fn) const {
    for (const Pending& p : in_flight_) fn(p.word);
  }

 private:
  struct Pending {
    Tick deliver_at;
    WordT word;
  };

  LinkParams params_;
  std::deque<Pending> in_flight_;
  std::uint64_t words_since_cc_ = 0;
  Tick cc_busy_until_ = 0;
  Tick last_send_tick_ = 0;
  bool have_sent_ = false;
  std::uint64_t accepted_ = 0;
  std::uint64_t delivered_ = 0;
  std::uint64_t cc_pauses_ = 0;
  std::uint64_t cc_backpressure_ = 0;
};

/// Event-rate limiter: burst tokens, refilled per system cycle.
class TokenBucket {
 public:
  TokenBucket(std::uint32_t burst, std::uint32_t refill_per_cycle)
      : burst_(burst), refill_(refill_per_cycle), tokens_(burst) {}

  std::uint32_t available(Tick now) {
    refill(now);
    return tokens_;
  }

  void consume(Tick now, std::uint32_t n) {
    refill(now);
    if (n > tokens_) {
      throw std::logic_error("token bucket over-consumed");
    }
    tokens_ -= n;
  }

 private:
  void refill(Tick now) {
    const std::uint64_t cycle = now / kTicksPerSystemCycle;
    if (cycle > last_cycle_) {
      const std::uint64_t gained = refill_ * (cycle - last_cycle_);
      tokens_ = static_cast<std::uint32_t>(
          std::min<std::uint64_t>(burst_, tokens_ + gained));
      last_cycle_ = cycle;
    }
  }

  std::uint32_t burst_;
  std::uint32_t refill_;
  std::uint32_t tokens_;
  std::uint64_t last_cycle_ = 0;
};

/// Chip-side layer-2 lane: one group per system cycle, event rate capped
/// by the token bucket.
class ChipLink {
 public:
  explicit ChipLink(LinkParams wire, std::uint32_t burst = 3, std::uint32_t refill_per_cycle = 2)
      : wire_(wire), bucket_(burst, refill_per_cycle) {
    if (wire.latency_ticks % kTicksPerSystemCycle != 0) {
      throw std::invalid_argument("chip link latency must be whole system cycles");
    }
  }

  /// Events sendable in a fresh group this cycle (0..3).
  std::uint32_t sendable_events(Tick now) {
    if (sent_this_cycle(now)) return 0;
    return std::min<std::uint32_t>(Layer2Group::kMaxEntries, bucket_.available(now));
  }

  bool try_send(const ChipFlit& flit, Tick now) {
    if (now % kTicksPerSystemCycle != 0) {
      throw std::logic_error("chip link sends on system edges only");
    }
    if (sent_this_cycle(now)) return false;
    const auto n = static_cast<std::uint32_t>(flit.group.size());
    if (bucket_.available(now) < n) return false;
    if (!wire_.try_send(flit, now)) return false;
    bucket_.consume(now, n);
    last_send_cycle_ = now / kTicksPerSystemCycle;
    have_sent_ = true;
    return true;
  }

  std::optional<ChipFlit> poll(Tick now) { return wire_.poll(now); }

  const SerialLink<ChipFlit>& wire() const { return wire_; }
  std::size_t in_flight() const { return wire_.in_flight(); }
  std::optional<Tick> next_delivery() const { return wire_.next_delivery(); }

 private:
  bool sent_this_cycle(Tick now) const {
    return have_sent_ && last_send_cycle_ == now / kTicksPerSystemCycle;
  }

  SerialLink<ChipFlit> wire_;
  TokenBucket bucket_;
  std::uint64_t last_send_cycle_ = 0;
  bool have_sent_ = false;
};

}  // namespace fabricsim
