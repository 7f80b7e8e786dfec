#include "sspdsim/rng.hpp"

#include "sspdsim/errors.hpp"

namespace sspdsim {

namespace {
constexpr double kInversionLimit = 30.0;
}

std::uint64_t Rng::poisson_from_uniform(double mean, double u) const {
    if (mean < 0.0 || !std::isfinite(mean)) throw DomainError("poisson: mean must be finite and >= 0");
    if (mean == 0.0) return 0;
    // CDF walk. mean <= kInversionLimit keeps exp(-mean) well above underflow.
    double p = std::exp(-mean);
    double cum = p;
    std::uint64_t k = 0;
    // Hard stop far out in the tail; u < 1 makes reaching it astronomically
    // unlikely, but a finite loop bound beats a spin on rounding residue.
    const std::uint64_t k_max = static_cast<std::uint64_t>(mean + 40.0 * std::sqrt(mean) + 32.0);
    while (u >= cum && k < k_max) {
        ++k;
        p *= mean / static_cast<double>(k);
        cum += p;
    }
    return k;
}

std::uint64_t Rng::poisson(double mean) {
    if (mean < 0.0 || !std::isfinite(mean)) throw DomainError("poisson: mean must be finite and >= 0");
    if (mean <= kInversionLimit) return poisson_from_uniform(mean, uniform());
    const auto chunks = static_cast<std::uint64_t>(mean / kInversionLimit) + 1;
    const double part = mean / static_cast<double>(chunks);
    std::uint64_t total = 0;
    for (std::uint64_t i = 0; i < chunks; ++i) total += poisson_from_uniform(part, uniform());
    return total;
}

}  // namespace sspdsim
