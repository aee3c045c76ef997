#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tscac {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to decorrelate derived seeds.
std::uint64_t splitmix64(std::uint64_t x);

// Seed-derivation tree: every random stream in a run is reached from the
// master seed by a path of labels, e.g. master -> "stage1" -> aux index.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label);
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

}  // namespace tscac
