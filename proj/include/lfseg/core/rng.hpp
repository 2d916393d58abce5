#pragma once
#include <cmath>
#include <cstdint>

namespace lfseg {

/// Deterministic 64-bit generator (splitmix64). All randomness in the library
/// flows through this type so that fixed seeds reproduce byte-identical
/// results across runs and platforms; the standard <random> distributions are
/// avoided on purpose (their output is implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller (one value per call, no cached state).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    /// Gamma with integer shape k and mean 1 (scale 1/k), as a sum of k
    /// exponentials. Used for multiplicative speckle.
    double gamma_mean_one(int shape) {
        double acc = 0.0;
        for (int i = 0; i < shape; ++i) {
            double u = uniform();
            if (u <= 0.0) u = 0x1.0p-53;
            acc -= std::log(u);
        }
        return acc / static_cast<double>(shape);
    }

    /// Independent child stream; does not advance this generator.
    [[nodiscard]] Rng fork(std::uint64_t stream) const {
        std::uint64_t z = state_ ^ (0xD1B54A32D192ED03ull + stream * 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return Rng(z ^ (z >> 31));
    }

private:
    std::uint64_t state_;
};

} // namespace lfseg
