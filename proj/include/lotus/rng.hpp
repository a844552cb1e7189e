#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace lotus {

// Seeded random source with platform-independent derived draws.
//
// std::uniform_*_distribution is implementation-defined, so every draw used
// by the toolkit goes through the helpers here, which only consume raw
// mt19937_64 output.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  // Uniform integer in [lo, hi] (inclusive).
  std::int64_t between(std::int64_t lo, std::int64_t hi);

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::string serialize() const;
  void deserialize(const std::string& state);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

private:
  std::mt19937_64 engine_;
};

} // namespace lotus
