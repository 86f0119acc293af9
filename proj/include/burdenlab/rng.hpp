#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <string_view>

namespace burdenlab {

// 64-bit FNV-1a. Used for rng stream naming and artifact content hashes.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

// A named, seed-derived random stream. Draw order is part of the contract:
// every consumer owns a stream keyed by (root seed, name), so adding or
// removing one consumer never shifts another consumer's draws.
//
// Uniform and normal variates are produced by explicit formulas on raw
// mt19937_64 output rather than std::*_distribution, so sequences are
// identical across standard library implementations.
class RngStream {
  public:
    RngStream(std::uint64_t root_seed, std::string_view name)
        : engine_(mix(root_seed, fnv1a64(name))) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection-free modulo is fine here: n is
    // always tiny relative to 2^64 and bias is far below measurement noise,
    // but a rejection loop keeps the draws exact anyway.
    int uniform_int(int n) {
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % un;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return static_cast<int>(x % un);
    }

    // Standard normal via Box-Muller; no cached spare, two u64 per draw.
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log1p(-u1));
        return r * std::cos(2.0 * M_PI * u2);
    }

    double normal(double sigma) { return sigma * normal(); }

  private:
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t key) {
        // splitmix64 finalizer over the combined words.
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ull + (key << 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
};

}  // namespace burdenlab
