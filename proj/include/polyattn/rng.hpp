#pragma once

// Seeded randomness. Two published reference algorithms are used:
//
//  * splitmix64 (Steele, Lea, Flood 2014; the java.util.SplittableRandom
//    finalizer) mixes 64-bit keys into stream seeds, so per-trial seeds are
//    order-independent functions of (master_seed, index).
//  * std::mt19937_64 (Matsumoto, Nishimura) generates the streams.
//
// All floating-point draws are built from raw 64-bit words below, so output
// depends only on the engine sequence, never on library distribution
// internals.

#include <cstdint>
#include <random>

namespace polyattn {

// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Stream seed for a given trial: master XOR index, mixed through splitmix64.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(master ^ index);
}

// Two-level derivation for (cell, trial)-style nesting.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t index) {
  return mix64(derive_seed(master, stream) ^ index);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double next_unit() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_unit();
  }

  // Uniform index in [0, n) via the multiply-shift reduction.
  std::size_t next_index(std::size_t n) {
    const unsigned __int128 wide =
        static_cast<unsigned __int128>(engine_()) * n;
    return static_cast<std::size_t>(wide >> 64);
  }

  // Rademacher draw from the top bit.
  int next_sign() { return (engine_() >> 63) ? 1 : -1; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace polyattn
