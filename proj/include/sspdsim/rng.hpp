#pragma once

#include <cmath>
#include <cstdint>

namespace sspdsim {

// Logical random streams. Each (seed, stream, index) triple addresses an
// independent generator, so a slot can be simulated without knowing how much
// randomness its neighbours consumed. That is what makes the parallel kernels
// produce the same bytes as the serial reference.
enum class RngStream : std::uint64_t {
    alice = 1,
    source,
    channel,
    receiver,
    detection,
    dark,
    jitter,
    squash,
    pair_source,
    misc,
};

// Counter-based generator: the state is derived by hashing (seed, stream,
// index) with splitmix64 finalizers, then draws walk the splitmix sequence.
// Integer-only state transitions, so streams are reproducible across
// platforms; float draws additionally depend on IEEE-754 doubles and libm.
class Rng {
public:
    explicit Rng(std::uint64_t state) : state_(state) {}

    static Rng at(std::uint64_t seed, RngStream stream, std::uint64_t index) {
        std::uint64_t h = mix(seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(stream));
        h = mix(h ^ (index + 0xD1B54A32D192ED03ull));
        return Rng(h);
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix(state_);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; consumes two uniforms per call.
    double gaussian(double mean, double sigma) {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sigma * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Exact Poisson sampler. Inversion for small means; larger means are
    // split into independent chunks (Poisson additivity keeps it exact).
    std::uint64_t poisson(double mean);

    // Continue a CDF inversion with an already-drawn uniform. Used by the
    // session kernels so the "nothing happened" fast path costs one compare.
    std::uint64_t poisson_from_uniform(double mean, double u) const;

    // Precomputed-pmf variant for hot loops: exp(-mean) is paid once at
    // setup, and the common k=0 case is a single compare.
    struct PoissonInv {
        double mean = 0.0;
        double p_zero = 1.0;

        PoissonInv() = default;
        explicit PoissonInv(double m) : mean(m), p_zero(std::exp(-m)) {}

        std::uint32_t sample(double u) const {
            if (u < p_zero || mean == 0.0) return 0;
            double p = p_zero;
            double cum = p;
            std::uint32_t k = 0;
            while (u >= cum && k < 4096) {
                ++k;
                p *= mean / static_cast<double>(k);
                cum += p;
            }
            return k;
        }
    };

    // Binomial(n, p) as n Bernoulli trials; n is small everywhere we use it.
    std::uint32_t binomial(std::uint32_t n, double p) {
        std::uint32_t k = 0;
        for (std::uint32_t i = 0; i < n; ++i) k += bernoulli(p) ? 1u : 0u;
        return k;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_;
};

}  // namespace sspdsim
