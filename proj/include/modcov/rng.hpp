#pragma once

#include <cstdint>
#include <random>

namespace modcov {

/// SplitMix64 finalizer. Used to turn (seed, index) pairs into independent
/// stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for stream `index` under `master`. Streams never depend on how many
/// other streams exist.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t master, std::uint64_t index) { return Rng(derive_seed(master, index)); }

// Named sub-streams of one replication.
namespace stream {
inline constexpr std::uint64_t train = 1;
inline constexpr std::uint64_t test = 2;
inline constexpr std::uint64_t censoring = 3;
inline constexpr std::uint64_t cv_interaction = 10;
inline constexpr std::uint64_t cv_main_effect = 11;
}  // namespace stream

}  // namespace modcov
