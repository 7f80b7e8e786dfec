#include "sspdsim/optics.hpp"

#include <cmath>

#include "sspdsim/errors.hpp"

namespace sspdsim {

double fiber_transmittance(const ChannelSpec& spec) {
    if (spec.length_km < 0.0 || spec.loss_db_per_km < 0.0 || spec.excess_loss_db < 0.0 ||
        spec.receiver_loss_db < 0.0) {
        throw DomainError("fiber_transmittance: losses and length must be non-negative");
    }
    const double total_db =
        spec.loss_db_per_km * spec.length_km + spec.excess_loss_db + spec.receiver_loss_db;
    return std::pow(10.0, -total_db / 10.0);
}

PhotonArrival wcp_emit(double intensity, double time_ns, Rng& rng, double wavelength_nm) {
    if (intensity < 0.0) throw DomainError("wcp_emit: intensity must be >= 0");
    PhotonArrival out;
    out.time_ns = time_ns;
    out.wavelength_nm = wavelength_nm;
    out.n_photons = static_cast<std::uint32_t>(rng.poisson(intensity));
    return out;
}

PhotonArrival attenuate(const PhotonArrival& arrival, double transmittance, Rng& rng) {
    if (transmittance < 0.0 || transmittance > 1.0)
        throw DomainError("attenuate: transmittance must be in [0,1]");
    PhotonArrival out = arrival;
    if (transmittance == 1.0) return out;
    if (transmittance == 0.0) {
        out.n_photons = 0;
        return out;
    }
    out.n_photons = rng.binomial(arrival.n_photons, transmittance);
    return out;
}

PairEmission pair_emit(double mean_pairs, double window_time_ns, Rng& rng, double wavelength_nm) {
    if (mean_pairs < 0.0) throw DomainError("pair_emit: mean_pairs must be >= 0");
    PairEmission out;
    out.n_pairs = static_cast<std::uint32_t>(rng.poisson(mean_pairs));
    out.multi_pair = out.n_pairs > 1;
    out.arm_a.time_ns = window_time_ns;
    out.arm_b.time_ns = window_time_ns;
    out.arm_a.wavelength_nm = wavelength_nm;
    out.arm_b.wavelength_nm = wavelength_nm;
    out.arm_a.n_photons = out.n_pairs;
    out.arm_b.n_photons = out.n_pairs;
    if (out.n_pairs > 0) {
        const int bit = rng.bernoulli(0.5) ? 1 : 0;
        out.arm_a.bit = bit;
        out.arm_b.bit = 1 - bit;
    }
    return out;
}

}  // namespace sspdsim
