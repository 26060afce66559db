#pragma once

#include <cstdint>

namespace wsvm::rng {

// SplitMix64 step; used to derive independent seeds from a root seed and a
// stream index so concurrent replicates never share state.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive(std::uint64_t root, std::uint64_t stream) {
  return splitmix64(splitmix64(root) ^ splitmix64(stream * 0x9E3779B97F4A7C15ULL + 1));
}

}  // namespace wsvm::rng
