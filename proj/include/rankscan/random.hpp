// rankscan/random.hpp
//
// Reproducible random streams. Every Monte Carlo replicate draws from its own
// generator derived from (seed, stream index), so results do not depend on
// scheduling or thread count.
#pragma once

#include <cstdint>
#include <random>

namespace rankscan {

using Rng = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace detail

/// Independent generator for replicate `stream` of an experiment seeded by `seed`.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t state = seed;
    const std::uint64_t mixed_seed = detail::splitmix64(state);
    state = mixed_seed ^ (stream * 0xD1B54A32D192ED03ULL);
    std::uint32_t words[8];
    for (int i = 0; i < 4; ++i) {
        const std::uint64_t w = detail::splitmix64(state);
        words[2 * i] = static_cast<std::uint32_t>(w);
        words[2 * i + 1] = static_cast<std::uint32_t>(w >> 32);
    }
    std::seed_seq seq(std::begin(words), std::end(words));
    return Rng(seq);
}

/// Well-separated stream namespaces for the different consumers of one seed.
enum class StreamDomain : std::uint64_t {
    table = 1,
    permutation = 2,
    ranks = 3,
    data = 4,
    bootstrap = 5,
};

inline Rng make_stream(std::uint64_t seed, StreamDomain domain, std::uint64_t stream) {
    return make_stream(seed ^ (static_cast<std::uint64_t>(domain) << 56), stream);
}

}  // namespace rankscan
