#pragma once

#include <cstdint>
#include <random>

namespace fourcrop {

// splitmix64; used to derive independent stream seeds from (seed, salt...) so
// that shuffles, dropout masks and augmentations stay decoupled but reproducible.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    return mix64(seed ^ mix64(salt));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt1, std::uint64_t salt2) {
    return mix64(derive_seed(seed, salt1) ^ mix64(salt2 + 0x632be59bd9b4e019ULL));
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

} // namespace fourcrop
