#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ici {

// Deterministic RNG used everywhere seeds appear. mt19937_64 output is
// fixed by the standard; the distributions below are hand-rolled because
// std::normal_distribution etc. are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(scramble(seed)) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0,1) with 53 bits of mantissa.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, bound) by rejection; bound > 0.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % bound;
    }

    /// Standard normal via Box-Muller (no cached spare; keeps state minimal).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
        }
    }

    /// Stream-splitting: a child seed independent of sibling indices.
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        return scramble(a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2)));
    }

private:
    static std::uint64_t scramble(std::uint64_t x) {
        // splitmix64 finalizer; avoids correlated mt19937_64 states for
        // adjacent seeds (per-episode seeds are master ^ index).
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
};

}  // namespace ici
