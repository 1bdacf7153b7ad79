#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace qfilt {

/// What a random stream is used for. Part of the stream key so that, e.g.,
/// process noise for particle i at time t is the same in every variant.
enum class Purpose : std::uint64_t {
  Input = 1,
  Simulate = 2,
  Init = 3,
  Propagate = 4,
  Resample = 5,
  Move = 6,
  Smooth = 7,
  Test = 8,
};

/// Key identifying one independent random stream:
/// (master seed, run index, time index, purpose, element index).
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t run = 0;

  constexpr StreamKey with_run(std::uint64_t r) const { return {seed, r}; }
};

/// Counter-based generator: SplitMix64 over a hashed stream key. Cheap to
/// construct, so every (time, purpose, particle) triple can own a stream and
/// results do not depend on how work is split across threads.
class Stream {
 public:
  using result_type = std::uint64_t;

  Stream(StreamKey key, std::uint64_t time, Purpose purpose, std::uint64_t index);
  explicit Stream(std::uint64_t state) : state_(state) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal() { return normal_(*this); }

 private:
  std::uint64_t state_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace qfilt
