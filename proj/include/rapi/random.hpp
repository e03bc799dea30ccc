#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rapi {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// 64-bit FNV-1a, optionally keyed by a seed folded into the offset basis.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0);

// Derives independent per-stage seeds from one master seed.
struct SeedPolicy {
  std::uint64_t master_seed = 42;

  std::uint64_t derive(std::string_view stage) const {
    return splitmix64(master_seed ^ fnv1a64(stage));
  }
  std::uint64_t split() const { return derive("split"); }
  std::uint64_t partition() const { return derive("partition"); }
  std::uint64_t model_init() const { return derive("model-init"); }
  std::uint64_t perturbation() const { return derive("perturbation"); }
  std::uint64_t classifier() const { return derive("classifier"); }
  std::uint64_t alignment() const { return derive("alignment"); }
};

}  // namespace rapi
