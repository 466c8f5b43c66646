#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace lwr {

using Rng = std::mt19937_64;

/// Independent stream keyed by (seed, keys...). Every random draw in the
/// samplers comes from a stream keyed by what it is for (iteration,
/// temperature, walker, move), so results do not depend on evaluation order
/// or thread count.
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * (keys.size() + 1));
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto k : keys) push(k);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double std_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

}  // namespace lwr
