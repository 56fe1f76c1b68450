#include "bgnn/rng.hpp"

#include <cmath>
#include <numbers>

#include "bgnn/error.hpp"

namespace bgnn {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// MurmurHash3 64-bit finalizer; full avalanche.
std::uint64_t fmix64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xFF51AFD7ED558CCDull;
  x ^= x >> 33;
  x *= 0xC4CEB9FE1A85EC53ull;
  x ^= x >> 33;
  return x;
}

}  // namespace

RngStream RngStream::substream(std::uint64_t tag) const {
  return RngStream(fmix64(seed_ ^ fmix64(tag + kGolden)));
}

std::uint64_t RngStream::next_u64() {
  return fmix64(seed_ + kGolden * ++counter_);
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  // u1 in (0, 1] so the log is finite; u2 in [0, 1).
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint32_t RngStream::uniform_int(std::uint32_t bound) {
  if (bound == 0) throw Error::domain("uniform_int: bound must be positive");
  // Lemire's nearly-divisionless rejection method on the high 32 bits.
  std::uint64_t x = next_u64() >> 32;
  std::uint64_t m = x * bound;
  auto low = static_cast<std::uint32_t>(m);
  if (low < bound) {
    const std::uint32_t threshold = (-bound) % bound;
    while (low < threshold) {
      x = next_u64() >> 32;
      m = x * bound;
      low = static_cast<std::uint32_t>(m);
    }
  }
  return static_cast<std::uint32_t>(m >> 32);
}

}  // namespace bgnn
