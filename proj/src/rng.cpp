#include "mrinet/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "mrinet/error.hpp"

namespace mrinet {

double SeededRng::gaussian(double mean, double stddev) {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return mean + stddev * z;
}

std::uint64_t SeededRng::below(std::uint64_t n) {
  if (n == 0) {
    throw std::invalid_argument("SeededRng::below: n must be positive");
  }
  // Rejection on the top of the range.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = engine_();
  while (x >= limit) {
    x = engine_();
  }
  return x % n;
}

std::string SeededRng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void SeededRng::restore(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (!is) {
    throw FormatError("SeededRng::restore: malformed generator state");
  }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace mrinet
