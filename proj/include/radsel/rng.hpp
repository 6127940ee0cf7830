#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace radsel {

// Counter-based randomness. Every draw is a pure function of its key, so
// evaluation order, thread count and pool size never change the stream.

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) noexcept {
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    for (std::uint64_t p : parts) {
        h = splitmix64(h ^ splitmix64(p));
    }
    return h;
}

/// Uniform double in [0, 1) with 53 random bits.
constexpr double unit_uniform(std::uint64_t key) noexcept {
    return static_cast<double>(key >> 11) * 0x1.0p-53;
}

/// Uniform index in [0, n) (n > 0); multiply-shift keeps the bias below 2^-64 * n.
constexpr std::uint64_t uniform_index(std::uint64_t key, std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(key) * n) >> 64);
}

/// Labeled child seed, e.g. derive_seed(master, "train").
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view label) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return hash_key({master, h});
}

} // namespace radsel
