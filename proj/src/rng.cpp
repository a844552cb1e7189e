#include "lotus/rng.hpp"

#include "lotus/error.hpp"

#include <limits>
#include <sstream>

namespace lotus {

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) {
    throw Error("Rng::below: bound must be positive");
  }
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = engine_();
  while (x >= limit) {
    x = engine_();
  }
  return x % bound;
}

std::int64_t Rng::between(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) {
    throw Error("Rng::between: empty range");
  }
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(below(span));
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::string Rng::serialize() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::deserialize(const std::string& state) {
  std::istringstream in(state);
  in >> engine_;
  if (in.fail()) {
    throw Error("corrupt random-generator state");
  }
}

} // namespace lotus
