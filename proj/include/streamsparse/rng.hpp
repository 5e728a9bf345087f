#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace streamsparse {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}
}  // namespace detail

/// Counter-based sub-seed: any batch is reproducible in isolation from the
/// stream seed and its index.
inline std::uint64_t derive_subseed(std::uint64_t seed, std::uint64_t counter) {
    return detail::splitmix64(seed ^ detail::splitmix64(counter));
}

/// Deterministic draws on top of mt19937_64. Sampling algorithms are spelled
/// out here (Box-Muller, Poisson inversion / PTRS rejection) so the sequence is
/// a function of the seed alone, not of a library's distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() {  // [0, 1)
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double normal() {  // Box-Muller, cosine branch
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double rademacher() { return (gen_() >> 63) ? 1.0 : -1.0; }

    bool bernoulli(double prob) { return uniform() < prob; }

    long poisson(double rate) {
        if (!(rate >= 0.0)) return 0;
        if (rate == 0.0) return 0;
        if (rate < 30.0) return poisson_inversion(rate);
        return poisson_ptrs(rate);
    }

private:
    long poisson_inversion(double rate) {
        const double limit = std::exp(-rate);
        long k = 0;
        double prod = uniform();
        while (prod > limit) {
            prod *= uniform();
            ++k;
        }
        return k;
    }

    // Hoermann's transformed rejection with squeeze (PTRS), valid for rate >= 10.
    long poisson_ptrs(double rate) {
        const double slam = std::sqrt(rate);
        const double loglam = std::log(rate);
        const double b = 0.931 + 2.53 * slam;
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double v_r = 0.9277 - 3.6224 / (b - 2.0);
        while (true) {
            const double u = uniform() - 0.5;
            const double v = uniform();
            const double us = 0.5 - std::abs(u);
            const double kd = std::floor((2.0 * a / us + b) * u + rate + 0.43);
            if (us >= 0.07 && v <= v_r) return static_cast<long>(kd);
            if (kd < 0.0 || (us < 0.013 && v > us)) continue;
            const double lhs = std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b);
            const double rhs = kd * loglam - rate - std::lgamma(kd + 1.0);
            if (lhs <= rhs) return static_cast<long>(kd);
        }
    }

    std::mt19937_64 gen_;
};

}  // namespace streamsparse
