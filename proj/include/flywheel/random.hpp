#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace flywheel {

// Seeded random source. Only the raw mt19937_64 stream is used (its output is
// fixed by the standard); the distributions below are implemented here so that
// sampled values are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_index(std::uint64_t bound);

  // Uniform double in [0, 1) with 53 bits of resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Child generator seeded from this stream.
  Rng fork() { return Rng(next_u64()); }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// sub_seed = hash(global_seed, component_name, index): FNV-1a over the
// component name, mixed with the seed and index through splitmix64.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view component,
                          std::uint64_t index);

}  // namespace flywheel
