#pragma once

#include "elda/types.hpp"

#include <cmath>
#include <cstdint>

// Self-contained deterministic random number generation. The standard
// library distributions are implementation-defined, so everything that
// must reproduce bit-exactly across platforms (noise simulation, seeded
// presets, test data) draws through these routines instead.

namespace elda::rng {

struct SplitMix64 {
    std::uint64_t state = 0;

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
};

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    SplitMix64 s{a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2))};
    s.next();
    return s.next() ^ b;
}

// Counter-based stream: element index mixed into the seed, so parallel
// generation over elements is order-independent.
inline SplitMix64 stream_at(std::uint64_t seed, std::uint64_t index) {
    return SplitMix64{mix(seed, index)};
}

// Uniform in the open interval (0, 1); never returns 0 or 1.
inline double uniform01(SplitMix64& g) {
    return (static_cast<double>(g.next() >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal via Box-Muller (consumes two uniforms, returns one).
inline double normal(SplitMix64& g) {
    const double u1 = uniform01(g);
    const double u2 = uniform01(g);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// log(k!) without libm's lgamma: exact summation for small k, Stirling
// series beyond. Accurate to ~1e-13 relative for all k.
inline double log_factorial(double k) {
    if (k < 16.0) {
        double acc = 0.0;
        for (double i = 2.0; i <= k; i += 1.0) acc += std::log(i);
        return acc;
    }
    const double n = k + 1.0; // lgamma(k+1)
    const double n2 = n * n;
    return (n - 0.5) * std::log(n) - n + 0.5 * std::log(2.0 * M_PI) +
           1.0 / (12.0 * n) - 1.0 / (360.0 * n * n2) + 1.0 / (1260.0 * n * n2 * n2);
}

// Poisson sampler: multiplication method for small means, Hormann's PTRS
// transformed rejection for large means. Both are exact samplers and both
// are fully determined by the stream.
inline double poisson(SplitMix64& g, double lambda) {
    if (lambda <= 0.0) return 0.0;
    if (lambda < 10.0) {
        const double limit = std::exp(-lambda);
        double k = 0.0, p = 1.0;
        do {
            p *= uniform01(g);
            if (p <= limit) break;
            k += 1.0;
        } while (true);
        return k;
    }
    const double slam = std::sqrt(lambda);
    const double loglam = std::log(lambda);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    while (true) {
        const double u = uniform01(g) - 0.5;
        const double v = uniform01(g);
        const double us = 0.5 - std::abs(u);
        const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
        if (us >= 0.07 && v <= v_r) return k;
        if (k < 0.0 || (us < 0.013 && v > us)) continue;
        if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
            k * loglam - lambda - log_factorial(k))
            return k;
    }
}

inline Vector gaussian_vector(Index n, std::uint64_t seed) {
    SplitMix64 g{seed};
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal(g);
    return v;
}

inline Matrix gaussian_matrix(Index rows, Index cols, std::uint64_t seed) {
    SplitMix64 g{seed};
    Matrix m(rows, cols);
    for (Index c = 0; c < cols; ++c)
        for (Index r = 0; r < rows; ++r) m(r, c) = normal(g);
    return m;
}

} // namespace elda::rng
