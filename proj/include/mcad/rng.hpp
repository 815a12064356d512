#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace mcad {

/// splitmix64 finalizer; used both as a bit mixer and to derive child seeds.
inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stream splitting rule: child k of seed s is seeded with
/// splitmix64(s ^ splitmix64(k+1)). Documented so runs are reproducible
/// from (master seed, realization index) alone.
inline std::uint64_t child_seed(std::uint64_t seed, std::uint64_t k) {
    return splitmix64(seed ^ splitmix64(k + 1));
}

/// Random stream with pinned output distributions.
///
/// std::normal_distribution is implementation-defined, so gaussians are
/// produced by an explicit Box-Muller transform; uniforms take the top
/// 53 bits of the engine output. Same seed, same stream, everywhere.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)), seed_(seed) {}

    /// Independent stream k derived from this stream's seed.
    Rng child(std::uint64_t k) const { return Rng(child_seed(seed_, k)); }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform on [0,1).
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    /// Uniform on [lo,hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; second value of each pair is cached.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

    /// Circularly-symmetric complex gaussian CN(0,1): re,im ~ N(0,1/2).
    std::complex<double> cgaussian() {
        constexpr double inv_sqrt2 = 0.70710678118654752440;
        const double re = gaussian() * inv_sqrt2;
        const double im = gaussian() * inv_sqrt2;
        return {re, im};
    }

    /// Poisson(mean) by inversion for small means and normal-rejection
    /// (PTRS, Hormann 1993) for large ones.
    long poisson(double mean) {
        if (mean <= 0.0) return 0;
        if (mean < 30.0) {
            const double l = std::exp(-mean);
            long k = 0;
            double p = uniform();
            while (p > l) {
                ++k;
                p *= uniform();
            }
            return k;
        }
        // PTRS transformed rejection
        const double b = 0.931 + 2.53 * std::sqrt(mean);
        const double va = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double vr = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            double u = uniform() - 0.5;
            double v = uniform();
            double us = 0.5 - std::fabs(u);
            double k = std::floor((2.0 * va / us + b) * u + mean + 0.43);
            if (us >= 0.07 && v <= vr) return static_cast<long>(k);
            if (k < 0.0 || (us < 0.013 && v > us)) continue;
            if (std::log(v * inv_alpha / (va / (us * us) + b)) <=
                k * std::log(mean) - mean - std::lgamma(k + 1.0)) {
                return static_cast<long>(k);
            }
        }
    }

  private:
    std::mt19937_64 eng_;
    std::uint64_t seed_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace mcad
