#pragma once

#include <cstdint>
#include <random>

namespace stylebias {

// splitmix64 finalizer; used to derive independent streams from structured keys.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) { return mix64(mix64(a) ^ b); }

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix64(mix64(a, b) ^ c);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
    return mix64(mix64(a, b, c) ^ d);
}

using Rng = std::mt19937_64;

// Per-(key...) generator so results do not depend on evaluation order.
template <class... Keys>
Rng make_rng(Keys... keys) {
    return Rng(mix64(static_cast<std::uint64_t>(keys)...));
}

inline float uniform(Rng& rng, float lo, float hi) {
    return std::uniform_real_distribution<float>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive bounds
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline float normal(Rng& rng, float mean = 0.f, float stddev = 1.f) {
    return std::normal_distribution<float>(mean, stddev)(rng);
}

}  // namespace stylebias
