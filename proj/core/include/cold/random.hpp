#pragma once

#include <cstdint>
#include <random>

namespace cold {

std::uint64_t splitmix64(std::uint64_t x);

// Seed for chain `index` under `master`: splitmix64(master + (index + 1) * 0x9E3779B97F4A7C15).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

// Seeded generator with draws that are identical on every platform. The
// standard distributions are implementation-defined, so uniforms and normals
// are derived directly from the 64-bit engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Normal(0, stddev) via Box-Muller.
  double normal(double stddev = 1.0);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cold
