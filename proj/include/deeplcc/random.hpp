#pragma once

#include <cstdint>
#include <random>

namespace deeplcc {

/// Independent random sub-streams derived from one run seed.
enum class Stream : std::uint32_t {
  PlantNoise = 1,
  CollectionInput = 2,
  CollectionHead = 3,
  CollectionPlant = 4,
};

inline std::mt19937_64 make_stream(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

}  // namespace deeplcc
