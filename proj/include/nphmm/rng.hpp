#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace nphmm {

// Seeded random source built on std::mt19937_64, whose output sequence is
// fixed by the C++ standard. Uniform variates and categorical draws are
// derived here from the raw 64-bit words instead of through the
// implementation-defined <random> distributions, so a given seed produces the
// same stream on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform();

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n), n > 0.
  std::size_t below(std::size_t n);

  // Index drawn with probability proportional to weights (inverse CDF).
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

// SplitMix64 mixing of (base, stream); used to give every run, fold or start
// its own well-separated seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace nphmm
