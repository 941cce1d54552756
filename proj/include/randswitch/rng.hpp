#pragma once

#include <cstdint>
#include <random>

namespace randswitch {

/// Seedable random stream used by every stochastic operation.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Uniform variates are formed from the top 53 bits of each draw
/// rather than through std::uniform_real_distribution, whose algorithm is
/// implementation-defined, so a given seed yields the same stream on every
/// conforming toolchain.
///
/// Streams are single-owner. Parallel or batched work derives independent
/// child streams with `Rng::derive(seed, index)`.
class Rng {
public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : engine_(mix(seed)), seed_(seed) {}

  /// Child stream `index` of `seed`; distinct indices give unrelated streams.
  static Rng derive(std::uint64_t seed, std::uint64_t index) {
    return Rng(mix(seed ^ mix(index + 0x632be59bd9b4e019ULL)));
  }

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Returns true with probability p. Always consumes one draw, so the
  /// stream position does not depend on p.
  bool bernoulli(double p) { return uniform() < p; }

  // UniformRandomBitGenerator interface
  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

private:
  // SplitMix64 finalizer; spreads nearby seeds across the engine state.
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace randswitch
