#pragma once

#include <cstdint>

namespace carflow {

// Counter-based deterministic RNG. Every consumer opens its own stream keyed by
// (seed, stream, index); draws within a stream are sequential splitmix64 outputs.
// This makes parallel or reordered sampling bit-identical to the serial schedule:
// sample i always sees the same numbers no matter who computed samples 0..i-1.

/// splitmix64 finalizer; bijective 64-bit mix.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Derives a child seed; used to decorrelate per-step batches in training loops.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  return mix64(mix64(seed) ^ salt);
}

// Stream ids -- one per independent consumer of randomness.
namespace stream {
inline constexpr std::uint64_t kNetInit = 0x01;       // + layer index
inline constexpr std::uint64_t kMogSample = 0x02;
inline constexpr std::uint64_t kRejection = 0x03;
inline constexpr std::uint64_t kCfmBatch = 0x04;
inline constexpr std::uint64_t kSourceDraw = 0x05;
inline constexpr std::uint64_t kPcgradShuffle = 0x06;
inline constexpr std::uint64_t kRollout = 0x07;
inline constexpr std::uint64_t kValueBatch = 0x08;
}  // namespace stream

class StreamRng {
 public:
  StreamRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index)
      : state_(mix64(mix64(mix64(seed) ^ stream) ^ index)), cached_(false), cache_(0.0) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform on the open interval (0,1); never returns 0 (safe under log).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; second value of each pair is cached.
  double normal();

  /// Uniform integer in [0, n); n >= 1. Multiply-shift (bias < n / 2^64).
  std::uint32_t below(std::uint32_t n) {
    return static_cast<std::uint32_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t state_;
  bool cached_;
  double cache_;
};

}  // namespace carflow
