#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string_view>

namespace cosgp {

/// Counter-based random number stream (Philox4x32-10).
///
/// A stream is identified by a 64-bit seed (the Philox key) and a 64-bit
/// stream id (the upper half of the 128-bit counter). Successive blocks
/// increment the lower counter half, so any number of statistically
/// independent streams can be derived from one master seed without
/// coordination. Output is platform-independent; all variate
/// transformations below (uniform, Box-Muller normal, Marsaglia-Tsang
/// gamma) are fixed algorithms, so a (seed, stream) pair pins the entire
/// draw sequence.
class RngStream {
public:
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_lo_(static_cast<std::uint32_t>(stream)),
        stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

  std::uint64_t next_u64() {
    if (have_ == 0) {
      refill();
    }
    return block_[--have_];
  }

  /// Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in (0, 1]; safe as a log() argument.
  double next_double_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; generates pairs, caches the second.
  double next_normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = next_double_pos();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  /// Gamma(shape, 1) by Marsaglia-Tsang squeeze; shape < 1 boosted.
  double next_gamma(double shape) {
    if (shape < 1.0) {
      const double u = next_double_pos();
      return next_gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = next_normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = next_double_pos();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
        return d * v;
      }
    }
  }

  /// Inverse-Gamma(shape, scale) with density proportional to
  /// x^-(shape+1) exp(-scale/x).
  double next_inverse_gamma(double shape, double scale) {
    return scale / next_gamma(shape);
  }

private:
  static std::uint64_t mulhilo(std::uint32_t a, std::uint32_t b) {
    return static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(b);
  }

  void refill() {
    std::uint32_t c0 = static_cast<std::uint32_t>(block_index_);
    std::uint32_t c1 = static_cast<std::uint32_t>(block_index_ >> 32);
    std::uint32_t c2 = stream_lo_;
    std::uint32_t c3 = stream_hi_;
    std::uint32_t k0 = key_[0];
    std::uint32_t k1 = key_[1];
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = mulhilo(0xD2511F53u, c0);
      const std::uint64_t p1 = mulhilo(0xCD9E8D57u, c2);
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      c0 = hi1 ^ c1 ^ k0;
      c1 = lo1;
      c2 = hi0 ^ c3 ^ k1;
      c3 = lo0;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    block_[0] = (static_cast<std::uint64_t>(c1) << 32) | c0;
    block_[1] = (static_cast<std::uint64_t>(c3) << 32) | c2;
    have_ = 2;
    ++block_index_;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint32_t stream_lo_, stream_hi_;
  std::uint64_t block_index_ = 0;
  std::array<std::uint64_t, 2> block_ = {0, 0};
  int have_ = 0;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

namespace rng_detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace rng_detail

/// Stream id for a named purpose and index, e.g. ("chain", 2) or
/// ("composition", g). Labels keep unrelated pipeline stages on
/// non-colliding streams under one master seed.
inline std::uint64_t derive_stream(std::string_view label, std::uint64_t index = 0) {
  return rng_detail::splitmix64(rng_detail::fnv1a64(label) ^ index);
}

/// Child seed for an independent unit of work (replicate, fold).
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                                 std::uint64_t index) {
  return rng_detail::splitmix64(master ^ derive_stream(label, index));
}

}  // namespace cosgp
