#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace prunelab {

// SplitMix64 finalizer. Used both as a mixing function for counter-based
// streams and as the state update of the sequential generator below.
inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Combine a seed with stream identifiers into a new seed.
inline uint64_t mix_key(uint64_t seed, uint64_t a) { return mix64(seed ^ mix64(a)); }
inline uint64_t mix_key(uint64_t seed, uint64_t a, uint64_t b) {
    return mix64(mix_key(seed, a) ^ mix64(b ^ 0xa5a5a5a5a5a5a5a5ULL));
}

// Sequential PRNG with fully specified, platform-independent output.
// std:: distributions are deliberately avoided: their output is
// implementation-defined and would break bit-exact reproducibility.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random mantissa bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Unbiased uniform integer in [0, n).
    uint64_t next_below(uint64_t n) {
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller (both std::log and std::cos are
    // correctly-rounded enough for reproducibility on one platform; the
    // formula itself is fully specified).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = next_double();
        } while (u1 <= 0.0);
        u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Rademacher +/-1.
    float rademacher() { return (next_u64() & 1) ? 1.0f : -1.0f; }

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Fisher-Yates permutation of [0, n) from a counter-keyed stream. The result
// depends only on the key, never on process state.
inline std::vector<int64_t> keyed_permutation(uint64_t key, int64_t n) {
    std::vector<int64_t> perm(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
    Rng rng(key);
    for (int64_t i = n - 1; i > 0; --i) {
        uint64_t j = rng.next_below(static_cast<uint64_t>(i) + 1);
        std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
    }
    return perm;
}

}  // namespace prunelab
