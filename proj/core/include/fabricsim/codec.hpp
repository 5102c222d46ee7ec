#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fabricsim/types.hpp"

// Bit-exact wire formats.
//
// MGT word framing (16 bit):
//   bit 15    command discriminator (0 = event, 1 = command)
//   bits 14:0 payload (fabric label or command code)
//
// The serial line uses the standard IBM 8b10b code at a 5 Gbit/s line
// rate; the codec here is a functional model used for verification. The
// link model transports whole words and uses 8b10b only for its
// bandwidth and latency budget.

namespace fabricsim {

inline constexpr std::uint16_t kMgtCommandBit = 0x8000;

/// Encodes an event or command word into its 16-bit wire form.
/// Pause fillers have no wire form; passing one throws.
std::uint16_t frame_mgt(const MgtWord& word);

/// Exact inverse of frame_mgt; total over all 2^16 words.
MgtWord deframe_mgt(std::uint16_t wire);

/// Builds a chip-link transfer unit out of 1..3 timestamped spikes.
/// Empty or oversized input throws std::invalid_argument.
Layer2Group pack_layer2(std::span<const Layer2Entry> entries);

/// Inverse of pack_layer2.
std::vector<Layer2Entry> unpack_layer2(const Layer2Group& group);

// ---------------------------------------------------------------------------
// 8b10b line code

enum class RunningDisparity : std::int8_t { kNegative = -1, kPositive = +1 };

/// A 10-bit code group in abcdei fghj order (bit 9 = a, bit 0 = j).
struct Symbol10b {
  std::uint16_t bits = 0;
  bool is_control = false;

  constexpr auto operator<=>(const Symbol10b&) const = default;
};

struct Encoded8b10b {
  Symbol10b symbol;
  RunningDisparity rd;
};

/// Encodes one byte. For control symbols the byte must be one of the
/// twelve valid K codes (K28.0..K28.7, K23.7, K27.7, K29.7, K30.7);
/// anything else throws std::invalid_argument.
Encoded8b10b encode_8b10b(std::uint8_t byte, bool is_control, RunningDisparity rd);

enum class DecodeStatus : std::uint8_t {
  kOk,
  kInvalidSymbol,    // code group absent from the standard tables
  kDisparityError,   // valid only under the opposite running disparity
};

struct Decoded8b10b {
  DecodeStatus status = DecodeStatus::kInvalidSymbol;
  std::uint8_t byte = 0;
  bool is_control = false;
  RunningDisparity rd = RunningDisparity::kNegative;  // unchanged on error
};

/// Inverse of encode_8b10b on valid symbols; classifies invalid code
/// groups and disparity violations.
Decoded8b10b decode_8b10b(Symbol10b symbol, RunningDisparity rd);

/// True if the byte is a valid K code.
bool is_valid_control_byte(std::uint8_t byte);

inline constexpr std::uint8_t kK28_5 = 0xBC;

}  // namespace fabricsim
