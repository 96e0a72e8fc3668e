#pragma once

#include <cstdint>
#include <random>

namespace sparsefx {

using Rng = std::mt19937_64;

/// Child seed for stream `index` of a master seed (splitmix64 finalizer over
/// the pair). Used for per-split and per-replicate streams so results do not
/// depend on execution order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace sparsefx
