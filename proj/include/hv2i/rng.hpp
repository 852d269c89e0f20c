#pragma once

#include <cstdint>
#include <random>

namespace hv2i {

// Named RNG streams so that components never share a generator.
enum class Stream : std::uint32_t {
  kScenario = 1,
  kTraffic = 2,
  kChannel = 3,
  kNetworkInit = 4,
  kReplay = 5,
  kExploration = 6,
  kAdPolicy = 7,
  kBackend = 8,
};

inline std::mt19937_64 make_rng(std::uint64_t seed, Stream stream, std::uint64_t sub = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(sub),
                    static_cast<std::uint32_t>(sub >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace hv2i
