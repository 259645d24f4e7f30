#pragma once

#include <cstdint>

namespace multicert {

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9UL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebUL;
  return z ^ (z >> 31);
}
}  // namespace detail

// Counter-derived splitmix64 stream. Any (seed, stream, substream) triple
// yields the same sequence regardless of thread scheduling or call order,
// which is what makes parallel runs byte-identical to serial ones.
class StreamRng {
 public:
  StreamRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) {
    state_ = detail::mix64(seed + 0x9e3779b97f4a7c15UL);
    state_ = detail::mix64(state_ ^ (stream + 0xd1b54a32d192ed03UL));
    state_ = detail::mix64(state_ ^ (substream + 0x8bb84b93962eacc9UL));
  }

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15UL;
    return detail::mix64(state_);
  }

  // Unbiased draw in [0, bound) via multiply-shift rejection.
  std::uint64_t below(std::uint64_t bound) {
    unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < bound) {
      const std::uint64_t cutoff = (0UL - bound) % bound;
      while (lo < cutoff) {
        m = static_cast<unsigned __int128>(next()) * bound;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return unit() < p; }

 private:
  std::uint64_t state_;
};

}  // namespace multicert
