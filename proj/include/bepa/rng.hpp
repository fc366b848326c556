#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace bepa {

// splitmix64 mixer; also used as the pair-index hash for the train/val split.
std::uint64_t splitmix64(std::uint64_t x);

// FNV-1a over raw bytes; used for content hashes and stream labels.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(std::string_view s);

// Deterministic RNG. mt19937_64 is fully specified by the standard; the
// distributions here are hand-rolled on top of it so draw sequences are
// reproducible across standard libraries, not just across runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Independent stream derived from (seed, label). Streams with different
  // labels never share a draw sequence, which keeps concerns (batch sampling,
  // corruption, dropout, init, eval) from perturbing each other.
  static Rng stream(std::uint64_t seed, std::string_view label) {
    return Rng(splitmix64(seed ^ fnv1a64(label)));
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t uniform_int(std::uint64_t n);

  // Standard normal via Box-Muller; second value of each pair is cached.
  double normal();

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace bepa
