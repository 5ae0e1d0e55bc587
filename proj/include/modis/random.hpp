#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace modis {

using Rng = std::mt19937_64;

/// Independent stream derived from a base seed and a list of tags
/// (operation id, epoch, step, ...).
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {}) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (auto t : tags) {
    words.push_back(static_cast<std::uint32_t>(t));
    words.push_back(static_cast<std::uint32_t>(t >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Stream tags keep the different consumers of one seed apart.
namespace stream {
inline constexpr std::uint64_t generate = 1;
inline constexpr std::uint64_t unpair = 2;
inline constexpr std::uint64_t split = 3;
inline constexpr std::uint64_t mask = 4;
inline constexpr std::uint64_t subsample = 5;
inline constexpr std::uint64_t drop = 6;
inline constexpr std::uint64_t init = 7;
inline constexpr std::uint64_t batches = 8;
inline constexpr std::uint64_t noise = 9;
inline constexpr std::uint64_t folds = 10;
}  // namespace stream

}  // namespace modis
