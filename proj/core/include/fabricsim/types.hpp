#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

// Core vocabulary of the spike-routing fabric: labels, clocks, wire words.
//
// Two clock domains share one simulation timebase. The base tick is 4 ns
// (the transceiver user clock period at 250 MHz); the FPGA system clock
// runs at 125 MHz, i.e. one system cycle every second tick. System-domain
// logic therefore acts on even ticks only.

namespace fabricsim {

using Tick = std::uint64_t;

inline constexpr unsigned kTickNs = 4;
inline constexpr unsigned kTicksPerSystemCycle = 2;
inline constexpr unsigned kSystemCycleNs = kTickNs * kTicksPerSystemCycle;
inline constexpr unsigned kMaxNodes = 16;  // 12 backplane slots + 4 extension lanes

/// Simulation time as a count of 4 ns base ticks.
struct SimTime {
  Tick ticks = 0;

  constexpr auto operator<=>(const SimTime&) const = default;

  /// Completed system clock cycles (8 ns each).
  constexpr std::uint64_t system_cycles() const { return ticks / kTicksPerSystemCycle; }
  /// True on ticks where system-domain logic advances.
  constexpr bool is_system_edge() const { return ticks % kTicksPerSystemCycle == 0; }
  constexpr std::uint64_t nanoseconds() const { return ticks * kTickNs; }

  static constexpr SimTime from_system_cycles(std::uint64_t cycles) {
    return SimTime{cycles * kTicksPerSystemCycle};
  }
};

/// 16-bit spike label in an ASIC's address space.
class ChipLabel {
 public:
  ChipLabel() = default;
  explicit constexpr ChipLabel(std::uint32_t value) : value_(static_cast<std::uint16_t>(value)) {
    if (value > 0xFFFF) {
      throw std::out_of_range("ChipLabel out of range: " + std::to_string(value));
    }
  }
  constexpr std::uint16_t value() const { return value_; }
  constexpr auto operator<=>(const ChipLabel&) const = default;

 private:
  std::uint16_t value_ = 0;
};

/// 15-bit spike label on the aggregator fabric. The 16th bit of the
/// transceiver word is the command discriminator, so real-time traffic
/// gets only 15 bits.
class FabricLabel {
 public:
  static constexpr std::uint32_t kLimit = 1u << 15;

  FabricLabel() = default;
  explicit constexpr FabricLabel(std::uint32_t value) : value_(static_cast<std::uint16_t>(value)) {
    if (value >= kLimit) {
      throw std::out_of_range("FabricLabel out of range: " + std::to_string(value));
    }
  }
  constexpr std::uint16_t value() const { return value_; }
  constexpr auto operator<=>(const FabricLabel&) const = default;

 private:
  std::uint16_t value_ = 0;
};

/// 15-bit command word payload. 0x0001 requests the synchronization
/// barrier; 0x7FFF is a no-op; everything else is reserved.
class CommandCode {
 public:
  static constexpr std::uint32_t kLimit = 1u << 15;

  CommandCode() = default;
  explicit constexpr CommandCode(std::uint32_t value) : value_(static_cast<std::uint16_t>(value)) {
    if (value >= kLimit) {
      throw std::out_of_range("CommandCode out of range: " + std::to_string(value));
    }
  }
  constexpr std::uint16_t value() const { return value_; }
  constexpr auto operator<=>(const CommandCode&) const = default;

  static constexpr CommandCode barrier_request() { return CommandCode(0x0001); }
  static constexpr CommandCode noop() { return CommandCode(0x7FFF); }

 private:
  std::uint16_t value_ = 0;
};

/// Low eight bits of the system cycle counter, attached to layer-2 events.
class Timestamp8 {
 public:
  Timestamp8() = default;
  explicit constexpr Timestamp8(std::uint32_t value) : value_(static_cast<std::uint8_t>(value)) {
    if (value > 0xFF) {
      throw std::out_of_range("Timestamp8 out of range: " + std::to_string(value));
    }
  }
  constexpr std::uint8_t value() const { return value_; }
  constexpr auto operator<=>(const Timestamp8&) const = default;

 private:
  std::uint8_t value_ = 0;
};

/// System cycle count modulo 256, as carried on layer-2 transfers.
constexpr Timestamp8 system_time_low8(SimTime t) {
  return Timestamp8(static_cast<std::uint32_t>(t.system_cycles() & 0xFF));
}

/// Index of a Node-FPGA lane on the aggregator.
class NodeId {
 public:
  NodeId() = default;
  explicit constexpr NodeId(std::uint32_t index) : index_(static_cast<std::uint8_t>(index)) {
    if (index >= kMaxNodes) {
      throw std::out_of_range("NodeId out of range: " + std::to_string(index));
    }
  }
  constexpr std::uint8_t index() const { return index_; }
  constexpr auto operator<=>(const NodeId&) const = default;

 private:
  std::uint8_t index_ = 0;
};

/// A single spike. emitted_at is simulation metadata for latency
/// measurement; the fabric wire formats carry no source timestamp.
struct SpikeEvent {
  ChipLabel label;
  SimTime emitted_at;
};

/// One (label, timestamp) pair on the chip link.
struct Layer2Entry {
  ChipLabel label;
  Timestamp8 timestamp;

  constexpr auto operator<=>(const Layer2Entry&) const = default;
};

/// Transfer unit of the chip link: one to three timestamped spikes.
class Layer2Group {
 public:
  static constexpr std::size_t kMaxEntries = 3;

  Layer2Group() = default;

  std::size_t size() const { return size_; }
  const Layer2Entry& operator[](std::size_t i) const { return entries_[i]; }

  /// Appends an entry. Throws std::length_error beyond three.
  void push_back(Layer2Entry e) {
    if (size_ >= kMaxEntries) {
      throw std::length_error("Layer2Group holds at most three entries");
    }
    entries_[size_++] = e;
  }

  bool operator==(const Layer2Group& other) const {
    if (size_ != other.size_) return false;
    for (std::size_t i = 0; i < size_; ++i) {
      if (entries_[i] != other.entries_[i]) return false;
    }
    return true;
  }

 private:
  std::array<Layer2Entry, kMaxEntries> entries_{};
  std::uint8_t size_ = 0;
};

/// One 16-bit word on an aggregator link. Pause is the clock-compensation
/// filler emitted by the transceiver; it carries no payload and never
/// enters a queue.
struct MgtWord {
  enum class Kind : std::uint8_t { kEvent, kCommand, kPause };

  Kind kind = Kind::kPause;
  std::uint16_t payload = 0;  // 15-bit event label or command code

  static MgtWord event(FabricLabel label) { return MgtWord{Kind::kEvent, label.value()}; }
  static MgtWord command(CommandCode code) { return MgtWord{Kind::kCommand, code.value()}; }
  static MgtWord pause() { return MgtWord{Kind::kPause, 0}; }

  constexpr bool is_event() const { return kind == Kind::kEvent; }
  constexpr bool is_command() const { return kind == Kind::kCommand; }

  constexpr auto operator<=>(const MgtWord&) const = default;
};

/// Per-spike simulation metadata carried alongside wire payloads.
struct EventMeta {
  Tick emitted_at = 0;
  std::uint8_t src_node = 0;
  bool valid = false;
};

}  // namespace fabricsim
