#pragma once

#include <cstdint>

namespace bgnn {

// Counter-based deterministic random stream. A draw is a pure function of
// (seed, counter), so identical streams replay identical values regardless of
// what other streams did in between. substream() derives an independent
// stream by hashing a tag into the seed; nested substreams give a stable
// per-(iteration, episode, purpose) addressing scheme.
class RngStream {
 public:
  RngStream() : RngStream(0) {}
  explicit RngStream(std::uint64_t seed, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  // Independent stream addressed by tag; counter restarts at zero.
  RngStream substream(std::uint64_t tag) const;

  std::uint64_t next_u64();

  // Uniform on [0, 1), 53-bit resolution.
  double uniform();

  // Standard normal via Box-Muller; consumes two counter steps per draw.
  double normal();

  // Uniform integer on [0, bound), unbiased. bound must be positive.
  std::uint32_t uniform_int(std::uint32_t bound);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace bgnn
