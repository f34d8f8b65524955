#include "advbench/rng.hpp"

namespace advbench {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
  return splitmix64(seed ^ fnv1a64(purpose));
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t index) {
  return splitmix64(derive_seed(seed, purpose) ^ splitmix64(index + 1));
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t index, std::uint64_t sub) {
  return splitmix64(derive_seed(seed, purpose, index) ^ splitmix64(~sub));
}

}  // namespace advbench
