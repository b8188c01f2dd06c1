// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>

#include "nerfbooth/core.hpp"

namespace nerfbooth {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// PCG32 with explicit stream selection. All stochastic code in the project
// draws from this generator so runs are bit-reproducible across reruns for a
// fixed seed; std::random distributions are avoided on purpose (their output
// is not pinned by the standard).
//
// Substreams are derived with child(key), which mixes the key into both the
// state and stream increment. Every consumer (per step / per ray / per
// example) takes its own child, so draw-count parity between unrelated code
// paths never matters.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    state_ = 0;
    inc_ = (splitmix64(stream ^ 0xda3e39cb94b95bdbull) << 1) | 1u;
    next_u32();
    state_ += splitmix64(seed);
    next_u32();
  }

  Rng child(std::uint64_t key) const {
    return Rng(splitmix64(state_ ^ splitmix64(key)), inc_ ^ splitmix64(key * 0x9e3779b97f4a7c15ull + 1));
  }

  std::uint32_t next_u32() {
    std::uint64_t old = state_;
    state_ = old * 6364136223846793005ull + inc_;
    std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  std::uint64_t next_u64() {
    std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // i in [0, n)
  std::uint64_t uniform_index(std::uint64_t n) {
    // Modulo bias is negligible for the n used here (n << 2^64).
    return next_u64() % n;
  }

  int uniform_int(int lo, int hi_inclusive) {
    return lo + int(uniform_index(std::uint64_t(hi_inclusive - lo + 1)));
  }

  // Box-Muller, cosine branch. Consumes exactly two uniforms per call so the
  // draw pattern stays fixed.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t state_;
  std::uint64_t inc_;
};

}  // namespace nerfbooth
