#pragma once

#include <cstdint>
#include <random>

namespace rise {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent stream seed for sub-task `index` (molecule, trial, ...) of a run.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return mix64(seed ^ mix64(index + 1));
}

}  // namespace rise
