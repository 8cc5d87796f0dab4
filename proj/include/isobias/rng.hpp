#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "isobias/errors.hpp"

namespace isobias {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline double log_factorial(std::int64_t k) {
    // Exact summation below 1024, Stirling series above; both are
    // reproducible for a given libm.
    static const std::array<double, 1024> table = [] {
        std::array<double, 1024> t{};
        t[0] = 0.0;
        for (std::size_t i = 1; i < t.size(); ++i)
            t[i] = t[i - 1] + std::log(static_cast<double>(i));
        return t;
    }();
    if (k < static_cast<std::int64_t>(table.size())) return table[static_cast<std::size_t>(k)];
    const double x = static_cast<double>(k);
    const double half_log_two_pi = 0.91893853320467274178;
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    return half_log_two_pi + (x + 0.5) * std::log(x) - x +
           inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0));
}

}  // namespace detail

/// xoshiro256** generator with splitmix64 seeding. Substream k for a given
/// seed starts splitmix64 at seed + k * 0x9E3779B97F4A7C15, so replicates get
/// decorrelated, reproducible streams on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
        std::uint64_t sm = seed + stream * 0x9E3779B97F4A7C15ULL;
        for (auto& word : state_) word = detail::splitmix64(sm);
        bool all_zero = true;
        for (auto word : state_) all_zero = all_zero && word == 0;
        if (all_zero) state_[0] = 1;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform on [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1]; safe to pass to log().
    double uniform_pos() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Box-Muller transform; consumes exactly two uniforms per call.
    double normal(double mean = 0.0, double sd = 1.0) {
        const double u1 = uniform_pos();
        const double u2 = uniform01();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double two_pi = 6.283185307179586476925286766559;
        return mean + sd * radius * std::cos(two_pi * u2);
    }

    double exponential(double rate = 1.0) { return -std::log(uniform_pos()) / rate; }

    /// Poisson variate: CDF inversion by sequential search for mean <= 10,
    /// the PTRS transformed-rejection sampler (Hormann 1993) above.
    std::int64_t poisson(double mean) {
        if (!(mean >= 0.0) || !std::isfinite(mean))
            throw validation_error("Poisson mean must be finite and non-negative");
        if (mean == 0.0) return 0;
        if (mean <= 10.0) return poisson_inversion(mean);
        return poisson_ptrs(mean);
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::int64_t poisson_inversion(double mean) {
        const double u = uniform01();
        double pmf = std::exp(-mean);
        double cdf = pmf;
        std::int64_t k = 0;
        while (u > cdf) {
            ++k;
            pmf *= mean / static_cast<double>(k);
            cdf += pmf;
            if (pmf == 0.0) break;  // cdf has saturated in floating point
        }
        return k;
    }

    std::int64_t poisson_ptrs(double mean) {
        const double slope = 0.931 + 2.53 * std::sqrt(mean);
        const double a = -0.059 + 0.02483 * slope;
        const double inv_alpha = 1.1239 + 1.1328 / (slope - 3.4);
        const double vr = 0.9277 - 3.6224 / (slope - 2.0);
        const double log_mean = std::log(mean);
        for (;;) {
            const double u = uniform01() - 0.5;
            const double v = uniform01();
            const double us = 0.5 - std::abs(u);
            const auto k = static_cast<std::int64_t>(
                std::floor((2.0 * a / us + slope) * u + mean + 0.43));
            if (us >= 0.07 && v <= vr) return k;
            if (k < 0 || (us < 0.013 && v > us)) continue;
            if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + slope) <=
                static_cast<double>(k) * log_mean - mean - detail::log_factorial(k))
                return k;
        }
    }

    std::array<std::uint64_t, 4> state_{};
};

}  // namespace isobias
