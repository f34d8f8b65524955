#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace advbench {

// Seed derivation: every random stream in the toolkit is named by
// (master seed, purpose string, index...). The derivation is a pure
// function, so per-sample results do not depend on evaluation order.
//
//   seed' = splitmix64(seed ^ fnv1a64(purpose))  then folded with each index
//
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t index);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t index, std::uint64_t sub);

// A stream backed by mt19937_64 seeded from a derived seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace advbench
