#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace nce {

inline constexpr uint64_t splitmix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent key from a parent key and a sub-stream index.
inline constexpr uint64_t derive_key(uint64_t key, uint64_t sub) {
  return splitmix64(splitmix64(key) ^ splitmix64(sub + 0x632be59bd9b4e019ULL));
}

// Counter-based generator: the n-th draw is a pure function of (key, n),
// so any stream can be split or replayed without shared state.
class Stream {
 public:
  constexpr Stream(uint64_t master_seed, uint64_t stream_id)
      : key_(derive_key(master_seed, stream_id)) {}

  constexpr Stream substream(uint64_t sub) const { return Stream(derive_key(key_, sub)); }

  constexpr uint64_t at(uint64_t counter) const {
    return splitmix64(key_ + counter * 0x9e3779b97f4a7c15ULL);
  }

  constexpr uint64_t next_u64() { return at(counter_++); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Box-Muller; both uniforms are consumed on every call so draws stay aligned.
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  uint64_t below(uint64_t n) { return static_cast<uint64_t>(uniform() * static_cast<double>(n)) % n; }

  constexpr uint64_t key() const { return key_; }
  constexpr uint64_t counter() const { return counter_; }

 private:
  explicit constexpr Stream(uint64_t key) : key_(key) {}
  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace nce
