#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace selfpace {

// splitmix64 finalizer; used to derive independent per-page / per-stage seeds
// from one experiment seed so results do not depend on processing order.
inline std::uint64_t mix_bits(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  return mix_bits(mix_bits(seed) ^ mix_bits(~salt));
}

// FNV-1a, for salting seeds with page ids and stage names.
inline std::uint64_t hash_str(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view stage) {
  return std::mt19937_64(mix_seed(seed, hash_str(stage)));
}

}  // namespace selfpace
