#include "fabricsim/codec.hpp"

#include <bit>
#include <cassert>
#include <stdexcept>

namespace fabricsim {

std::uint16_t frame_mgt(const MgtWord& word) {
  switch (word.kind) {
    case MgtWord::Kind::kEvent:
      return word.payload;
    case MgtWord::Kind::kCommand:
      return static_cast<std::uint16_t>(kMgtCommandBit | word.payload);
    case MgtWord::Kind::kPause:
      break;
  }
  throw std::invalid_argument("pause fillers have no 16-bit wire form");
}

MgtWord deframe_mgt(std::uint16_t wire) {
  const std::uint16_t payload = wire & 0x7FFF;
  if (wire & kMgtCommandBit) {
    return MgtWord{MgtWord::Kind::kCommand, payload};
  }
  return MgtWord{MgtWord::Kind::kEvent, payload};
}

Layer2Group pack_layer2(std::span<const Layer2Entry> entries) {
  if (entries.empty() || entries.size() > Layer2Group::kMaxEntries) {
    throw std::invalid_argument("layer-2 group takes one to three entries, got " +
                                std::to_string(entries.size()));
  }
  Layer2Group group;
  for (const Layer2Entry& e : entries) {
    group.push_back(e);
  }
  return group;
}

std::vector<Layer2Entry> unpack_layer2(const Layer2Group& group) {
  std::vector<Layer2Entry> entries;
  entries.reserve(group.size());
  for (std::size_t i = 0; i < group.size(); ++i) {
    entries.push_back(group[i]);
  }
  return entries;
}

// ---------------------------------------------------------------------------
// 8b10b
//
// Tables follow the IBM convention: sub-blocks are listed abcdei and fghj,
// most significant bit first. For unbalanced sub-blocks the RD- column is
// the variant with the surplus of ones; the RD+ column is its complement.

namespace {

// 5b/6b, indexed [x][rd] with rd 0 = negative, 1 = positive.
constexpr std::uint8_t k5b6b[32][2] = {
    {0b100111, 0b011000},  // D.0
    {0b011101, 0b100010},  // D.1
    {0b101101, 0b010010},  // D.2
    {0b110001, 0b110001},  // D.3
    {0b110101, 0b001010},  // D.4
    {0b101001, 0b101001},  // D.5
    {0b011001, 0b011001},  // D.6
    {0b111000, 0b000111},  // D.7
    {0b111001, 0b000110},  // D.8
    {0b100101, 0b100101},  // D.9
    {0b010101, 0b010101},  // D.10
    {0b110100, 0b110100},  // D.11
    {0b001101, 0b001101},  // D.12
    {0b101100, 0b101100},  // D.13
    {0b011100, 0b011100},  // D.14
    {0b010111, 0b101000},  // D.15
    {0b011011, 0b100100},  // D.16
    {0b100011, 0b100011},  // D.17
    {0b010011, 0b010011},  // D.18
    {0b110010, 0b110010},  // D.19
    {0b001011, 0b001011},  // D.20
    {0b101010, 0b101010},  // D.21
    {0b011010, 0b011010},  // D.22
    {0b111010, 0b000101},  // D.23
    {0b110011, 0b001100},  // D.24
    {0b100110, 0b100110},  // D.25
    {0b010110, 0b010110},  // D.26
    {0b110110, 0b001001},  // D.27
    {0b001110, 0b001110},  // D.28
    {0b101110, 0b010001},  // D.29
    {0b011110, 0b100001},  // D.30
    {0b101011, 0b010100},  // D.31
};

constexpr std::uint8_t kK28_6b[2] = {0b001111, 0b110000};

// Data 3b/4b, indexed [y][rd at the sub-block boundary]. y = 7 is the
// primary code; the alternate A7 replaces it where the primary would
// produce a run of five or a false comma.
constexpr std::uint8_t k3b4bData[8][2] = {
    {0b1011, 0b0100},  // .0
    {0b1001, 0b1001},  // .1
    {0b0101, 0b0101},  // .2
    {0b1100, 0b0011},  // .3
    {0b1101, 0b0010},  // .4
    {0b1010, 0b1010},  // .5
    {0b0110, 0b0110},  // .6
    {0b1110, 0b0001},  // .7 primary
};

constexpr std::uint8_t kA7[2] = {0b0111, 0b1000};

// Control 3b/4b differs from the data table in the neutral rows, which
// alternate with disparity to keep control sequences comma-safe.
constexpr std::uint8_t k3b4bControl[8][2] = {
    {0b1011, 0b0100},  // .0
    {0b0110, 0b1001},  // .1
    {0b1010, 0b0101},  // .2
    {0b1100, 0b0011},  // .3
    {0b1101, 0b0010},  // .4
    {0b0101, 0b1010},  // .5
    {0b1001, 0b0110},  // .6
    {0b0111, 0b1000},  // .7 (always A7)
};

constexpr int rd_index(RunningDisparity rd) {
  return rd == RunningDisparity::kPositive ? 1 : 0;
}

RunningDisparity apply_block(RunningDisparity rd, std::uint8_t block, int width) {
  const int ones = std::popcount(static_cast<unsigned>(block));
  const int disparity = 2 * ones - width;
  assert(disparity == 0 || disparity == 2 || disparity == -2);
  if (disparity == 0) return rd;
  return disparity > 0 ? RunningDisparity::kPositive : RunningDisparity::kNegative;
}

bool uses_a7(std::uint8_t x, RunningDisparity rd_mid) {
  if (rd_mid == RunningDisparity::kNegative) {
    return x == 17 || x == 18 || x == 20;
  }
  return x == 11 || x == 13 || x == 14;
}

struct ReverseEntry {
  bool valid = false;
  std::uint8_t byte = 0;
  bool is_control = false;
  RunningDisparity rd_out = RunningDisparity::kNegative;
};

struct ReverseTables {
  // Indexed [rd][symbol bits].
  std::array<std::array<ReverseEntry, 1024>, 2> map{};
};

const ReverseTables& reverse_tables() {
  static const ReverseTables tables = [] {
    ReverseTables t;
    auto add = [&t](std::uint8_t byte, bool ctrl, RunningDisparity rd) {
      const Encoded8b10b enc = encode_8b10b(byte, ctrl, rd);
      ReverseEntry& slot = t.map[rd_index(rd)][enc.symbol.bits];
      // The code must stay a prefix-free bijection per disparity context.
      assert(!slot.valid || (slot.byte == byte && slot.is_control == ctrl));
      slot = ReverseEntry{true, byte, ctrl, enc.rd};
    };
    for (int rd = 0; rd < 2; ++rd) {
      const RunningDisparity d = rd ? RunningDisparity::kPositive : RunningDisparity::kNegative;
      for (unsigned b = 0; b < 256; ++b) {
        add(static_cast<std::uint8_t>(b), false, d);
      }
      for (unsigned b = 0; b < 256; ++b) {
        if (is_valid_control_byte(static_cast<std::uint8_t>(b))) {
          add(static_cast<std::uint8_t>(b), true, d);
        }
      }
    }
    return t;
  }();
  return tables;
}

}  // namespace

bool is_valid_control_byte(std::uint8_t byte) {
  const std::uint8_t x = byte & 0x1F;
  const std::uint8_t y = byte >> 5;
  if (x == 28) return true;  // K28.0 .. K28.7
  if (y == 7 && (x == 23 || x == 27 || x == 29 || x == 30)) return true;
  return false;
}

Encoded8b10b encode_8b10b(std::uint8_t byte, bool is_control, RunningDisparity rd) {
  const std::uint8_t x = byte & 0x1F;
  const std::uint8_t y = byte >> 5;

  if (is_control && !is_valid_control_byte(byte)) {
    throw std::invalid_argument("not a valid 8b10b control code: " + std::to_string(byte));
  }

  std::uint8_t six;
  if (is_control && x == 28) {
    six = kK28_6b[rd_index(rd)];
  } else {
    six = k5b6b[x][rd_index(rd)];
  }
  const RunningDisparity rd_mid = apply_block(rd, six, 6);

  std::uint8_t four;
  if (is_control) {
    four = k3b4bControl[y][rd_index(rd_mid)];
  } else if (y == 7 && uses_a7(x, rd_mid)) {
    four = kA7[rd_index(rd_mid)];
  } else {
    four = k3b4bData[y][rd_index(rd_mid)];
  }
  const RunningDisparity rd_out = apply_block(rd_mid, four, 4);

  const std::uint16_t bits = static_cast<std::uint16_t>((six << 4) | four);
  return Encoded8b10b{Symbol10b{bits, is_control}, rd_out};
}

Decoded8b10b decode_8b10b(Symbol10b symbol, RunningDisparity rd) {
  const std::uint16_t bits = symbol.bits & 0x3FF;
  const ReverseTables& tables = reverse_tables();
  const ReverseEntry& here = tables.map[rd_index(rd)][bits];
  if (here.valid) {
    return Decoded8b10b{DecodeStatus::kOk, here.byte, here.is_control, here.rd_out};
  }
  const ReverseEntry& other = tables.map[1 - rd_index(rd)][bits];
  if (other.valid) {
    return Decoded8b10b{DecodeStatus::kDisparityError, 0, false, rd};
  }
  return Decoded8b10b{DecodeStatus::kInvalidSymbol, 0, false, rd};
}

}  // namespace fabricsim
