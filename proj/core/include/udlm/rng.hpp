#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace udlm {

/// All randomness in the library flows through an explicitly passed Rng.
/// Streams are derived (never shared) so data workers, rollout sampling and
/// loss corruption can be replayed independently of evaluation order.
using Rng = std::mt19937_64;

// splitmix64 finalizer; decorrelates nearby seeds.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline Rng make_rng(uint64_t seed) {
    return Rng(mix64(seed));
}

/// Deterministic sub-stream: hash of (base seed, stream tag, index).
/// Resuming a run at step k re-derives the exact same stream for step k.
inline Rng derive_rng(uint64_t base_seed, std::string_view stream, uint64_t index) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : stream) {
        h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ull;
    }
    return Rng(mix64(mix64(base_seed ^ h) ^ index));
}

// Distributions are hand-rolled: std::uniform_*_distribution is
// implementation-defined and would tie checkpoints to a libstdc++ version.

/// Uniform double in [0, 1).
inline double u01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform double in [a, b).
inline double uniform_real(Rng& rng, double a, double b) {
    return a + (b - a) * u01(rng);
}

/// Uniform integer in [0, n), n > 0.
inline uint64_t uniform_below(Rng& rng, uint64_t n) {
    const uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n);
    uint64_t v = rng();
    while (v >= limit) {
        v = rng();
    }
    return v % n;
}

/// Uniform integer in [lo, hi] inclusive.
inline int64_t uniform_int(Rng& rng, int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(uniform_below(rng, static_cast<uint64_t>(hi - lo + 1)));
}

/// Standard normal via Box-Muller (no cached spare, keeps replay simple).
inline double normal01(Rng& rng) {
    double u1 = u01(rng);
    double u2 = u01(rng);
    if (u1 <= 0.0) {
        u1 = 0x1.0p-53;
    }
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace udlm
