#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace fcn {

// Counter-based generator: value i of a stream is a pure function of
// (master seed, stream label, i), so runs are reproducible byte-for-byte
// regardless of call interleaving across streams. The mixer is the
// splitmix64 finalizer. std::normal_distribution and friends are
// implementation-defined, hence avoided.
class Rng {
 public:
  Rng(uint64_t master_seed, const std::string& stream)
      : key_(mix(master_seed ^ (fnv1a(stream) | 1))) {}

  uint64_t next_u64() { return mix(key_ + kGolden * ++counter_); }

  // [0, 1)
  double uniform() {
    return double(next_u64() >> 11) * 0x1.0p-53;
  }

  // [lo, hi] inclusive. Modulo bias is immaterial at our range sizes.
  int uniform_int(int lo, int hi) {
    return lo + int(next_u64() % uint64_t(hi - lo + 1));
  }

  // Box-Muller, two draws per sample, no caching.
  double normal() {
    double u1 = double((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    double u2 = double(next_u64() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = next_u64() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

  static uint64_t mix(uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  static constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;

  static uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 0x100000001b3ull;
    }
    return h;
  }

  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace fcn
