#pragma once

#include <cstdint>

namespace treeq {

// Self-contained generators so results are bit-identical across compilers
// and standard libraries (std distributions are implementation-defined).

/// splitmix64; also used to expand seeds into generator state.
struct SplitMix64 {
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
};

/// xoshiro256++ with a splitmix-expanded seed.
class Xoshiro256pp {
 public:
  explicit Xoshiro256pp(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& w : s_) w = sm.next();
  }

  /// Independent stream for one replication: the path index is mixed into
  /// the master seed, so any path can be regenerated in isolation.
  static Xoshiro256pp for_path(std::uint64_t master_seed,
                               std::uint64_t path_index) {
    return Xoshiro256pp(master_seed ^
                        (0xD1B54A32D192ED03ull * (path_index + 1)));
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0,1) with 53 random bits.
  double uniform01() { return (next() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4];
};

}  // namespace treeq
