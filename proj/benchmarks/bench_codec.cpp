#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "fabricsim/codec.hpp"

namespace {

using namespace fabricsim;

void BM_Encode8b10b(benchmark::State& state) {
  std::mt19937 rng(1);
  std::vector<std::uint8_t> bytes(4096);
  for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());

  RunningDisparity rd = RunningDisparity::kNegative;
  for (auto _ : state) {
    for (const std::uint8_t b : bytes) {
      const Encoded8b10b enc = encode_8b10b(b, false, rd);
      rd = enc.rd;
      benchmark::DoNotOptimize(enc.symbol.bits);
    }
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(bytes.size()));
}
BENCHMARK(BM_Encode8b10b);

void BM_Decode8b10b(benchmark::State& state) {
  std::mt19937 rng(2);
  std::vector<Symbol10b> symbols;
  RunningDisparity rd = RunningDisparity::kNegative;
  for (int i = 0; i < 4096; ++i) {
    const Encoded8b10b enc = encode_8b10b(static_cast<std::uint8_t>(rng()), false, rd);
    symbols.push_back(enc.symbol);
    rd = enc.rd;
  }

  for (auto _ : state) {
    RunningDisparity d = RunningDisparity::kNegative;
    for (const Symbol10b& s : symbols) {
      const Decoded8b10b dec = decode_8b10b(s, d);
      d = dec.rd;
      benchmark::DoNotOptimize(dec.byte);
    }
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(symbols.size()));
}
BENCHMARK(BM_Decode8b10b);

void BM_FrameDeframe(benchmark::State& state) {
  std::uint32_t x = 1;
  for (auto _ : state) {
    x = x * 1664525u + 1013904223u;
    const MgtWord word = deframe_mgt(static_cast<std::uint16_t>(x >> 16));
    benchmark::DoNotOptimize(frame_mgt(word));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_FrameDeframe);

}  // namespace
