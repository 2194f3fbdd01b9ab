#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace affinv {

/// splitmix64 finalizer; used to derive independent sub-seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// FNV-1a over the stream name.
constexpr std::uint64_t stream_hash(std::string_view name) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seed for the named sub-stream `name` (and optional index) of a top-level seed.
/// Order-independent: the derived seed depends only on (seed, name, index).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view name,
                                    std::uint64_t index = 0) noexcept {
    return splitmix64(splitmix64(seed ^ stream_hash(name)) + index);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
    return Rng(derive_seed(seed, name, index));
}

}  // namespace affinv
