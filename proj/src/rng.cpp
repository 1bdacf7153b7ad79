#include "qfilt/rng.hpp"

namespace qfilt {

namespace {

constexpr std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDULL;
  z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ULL;
  return z ^ (z >> 33);
}

}  // namespace

Stream::Stream(StreamKey key, std::uint64_t time, Purpose purpose, std::uint64_t index) {
  std::uint64_t h = mix(key.seed ^ 0x5DEECE66DULL);
  h = mix(h ^ (key.run + 0x9E3779B97F4A7C15ULL));
  h = mix(h ^ (time * 0xD1B54A32D192ED03ULL + 1));
  h = mix(h ^ (static_cast<std::uint64_t>(purpose) << 56));
  h = mix(h ^ (index * 0xABC98388FB8FAC03ULL + 7));
  state_ = h;
}

}  // namespace qfilt
