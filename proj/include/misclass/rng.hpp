#pragma once

#include <array>
#include <cstdint>

#include "misclass/math.hpp"

namespace misclass {

// Philox4x32-10 counter-based generator (Salmon et al., SC 2011).
// The key holds the user seed, counter words [2],[3] hold a 64-bit stream
// id and words [0],[1] the position within the stream. Draws from
// (seed, stream) are therefore a pure function of the pair, independent of
// which thread asks for them.
class PhiloxRng {
 public:
  PhiloxRng(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        counter_{0u, 0u, static_cast<std::uint32_t>(stream),
                 static_cast<std::uint32_t>(stream >> 32)} {}

  std::uint32_t next_u32() {
    if (buffer_pos_ == 4) {
      block(counter_, key_, buffer_);
      advance_counter();
      buffer_pos_ = 0;
    }
    return buffer_[buffer_pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return lo | (hi << 32);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1), safe to feed through quantile functions.
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  double normal() { return norm_quantile(uniform_open()); }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // One 4-word Philox block; exposed for known-answer tests.
  static void block(const std::array<std::uint32_t, 4>& ctr,
                    const std::array<std::uint32_t, 2>& key,
                    std::array<std::uint32_t, 4>& out) {
    std::uint32_t c0 = ctr[0], c1 = ctr[1], c2 = ctr[2], c3 = ctr[3];
    std::uint32_t k0 = key[0], k1 = key[1];
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * c0;
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * c2;
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      c0 = hi1 ^ c1 ^ k0;
      c1 = lo1;
      c2 = hi0 ^ c3 ^ k1;
      c3 = lo0;
      if (round != 9) {
        k0 += 0x9E3779B9u;
        k1 += 0xBB67AE85u;
      }
    }
    out = {c0, c1, c2, c3};
  }

 private:
  void advance_counter() {
    if (++counter_[0] == 0) ++counter_[1];
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> buffer_{};
  int buffer_pos_ = 4;
};

}  // namespace misclass
