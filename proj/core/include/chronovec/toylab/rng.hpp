#pragma once

#include <cstdint>
#include <string_view>

namespace chronovec::toylab {

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Stream key derived from a purpose label and up to two integers, so that
// each (purpose, period) pair draws from an independent stream.
constexpr std::uint64_t stream_key(std::string_view purpose, std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
  for (char c : purpose) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return mix64(mix64(h ^ mix64(a)) ^ mix64(b + 0x632BE59BD9B4E019ull));
}

// Counter-based generator: the n-th draw is a pure function of
// (seed, stream, n), independent of thread scheduling.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(mix64(seed) ^ mix64(stream ^ 0xD1B54A32D192ED03ull)) {}

  std::uint64_t next_u64() { return mix64(key_ ^ mix64(counter_++)); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller (consumes two draws).
  double normal();

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace chronovec::toylab
