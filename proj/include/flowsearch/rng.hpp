#pragma once

// Counter-based random streams. Every draw is a pure function of
// (seed, stream, step, particle, draw index), so results do not depend on
// evaluation order or on how runs are spread across threads.
//
// Algorithm: the five keys are folded through SplitMix64's finalizer
//   h = mix(seed); h = mix(h ^ stream); h = mix(h ^ step);
//   h = mix(h ^ particle); h = mix(h ^ draw)
// and a uniform in (0, 1) is (h >> 11 + 0.5) * 2^-53. Normals use the
// Box-Muller pair (cos, sin) built from draws 2j and 2j + 1.

#include "flowsearch/types.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>

namespace flowsearch {

/// Stream identifiers; keep the values stable, they are part of the output.
enum class Stream : std::uint64_t {
  initial_noise = 1,
  proposal = 2,
  resample = 3,
  forward_noise = 4,
  diversity = 5,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct StreamKey {
  std::uint64_t seed = 0;
  Stream stream = Stream::proposal;
  std::uint64_t step = 0;
  std::uint64_t particle = 0;

  StreamKey with(std::uint64_t new_step, std::uint64_t new_particle) const {
    return {seed, stream, new_step, new_particle};
  }
};

inline std::uint64_t hash_draw(const StreamKey& key, std::uint64_t draw) {
  std::uint64_t h = splitmix64(key.seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(key.stream));
  h = splitmix64(h ^ key.step);
  h = splitmix64(h ^ key.particle);
  return splitmix64(h ^ draw);
}

/// Uniform in the open interval (0, 1).
inline double uniform01(const StreamKey& key, std::uint64_t draw) {
  return (static_cast<double>(hash_draw(key, draw) >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal number `index` of the stream.
inline double standard_normal(const StreamKey& key, std::uint64_t index) {
  const std::uint64_t pair = index / 2;
  const double u1 = uniform01(key, 2 * pair);
  const double u2 = uniform01(key, 2 * pair + 1);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return index % 2 == 0 ? r * std::cos(angle) : r * std::sin(angle);
}

/// d independent standard normals.
inline Vec normal_vector(const StreamKey& key, Eigen::Index dim) {
  Vec z(dim);
  for (Eigen::Index i = 0; i < dim; ++i) z[i] = standard_normal(key, static_cast<std::uint64_t>(i));
  return z;
}

}  // namespace flowsearch
