#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace mgf {

using Rng = std::mt19937_64;

// Derives an independent stream from a master seed and a path of indices,
// e.g. derive_rng(seed, {epoch, task_index}).
inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed),
                                   static_cast<std::uint32_t>(seed >> 32)};
  for (auto p : path) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq full(words.begin(), words.end());
  return Rng(full);
}

}  // namespace mgf
