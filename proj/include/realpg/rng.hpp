#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace realpg {

using Rng = std::mt19937_64;

// splitmix64 finalizer, used to fold stream keys into a single seed.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for an independent stream identified by an ordered list of keys,
/// e.g. (run seed, step, prompt index, sample index). The result depends
/// only on the keys, never on how many other streams exist.
constexpr std::uint64_t stream_seed(std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (auto k : keys) h = mix64(h ^ mix64(k));
  return h;
}

inline Rng make_stream(std::initializer_list<std::uint64_t> keys) {
  return Rng{stream_seed(keys)};
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace realpg
