#pragma once

#include <cstdint>
#include <optional>

#include "sspdsim/rng.hpp"

namespace sspdsim {

enum class IntensityLabel : std::uint8_t { signal = 0, decoy = 1, vacuum = 2 };

enum class Basis : std::uint8_t { z = 0, x = 1 };

// One time-stamped optical pulse. Protocol metadata (basis/bit/intensity)
// rides along untouched by the channel ops.
struct PhotonArrival {
    double time_ns = 0.0;
    std::uint32_t n_photons = 0;
    double wavelength_nm = 1550.0;
    std::optional<IntensityLabel> intensity_label;
    std::optional<Basis> basis;
    std::optional<int> bit;
    double polarization_mismatch = 0.0;  // fraction of coupling lost, [0,1]
};

struct ChannelSpec {
    double length_km = 0.0;
    double loss_db_per_km = 0.2;
    double excess_loss_db = 0.0;    // connectors, splices
    double receiver_loss_db = 0.0;  // receiver insertion loss
};

// 10^(-total_dB/10); multiplicative over concatenated spans.
double fiber_transmittance(const ChannelSpec& spec);

// Weak coherent pulse: n ~ Poisson(intensity).
PhotonArrival wcp_emit(double intensity, double time_ns, Rng& rng, double wavelength_nm = 1550.0);

// Binomial thinning: each photon survives independently with the given
// transmittance. Metadata is preserved.
PhotonArrival attenuate(const PhotonArrival& arrival, double transmittance, Rng& rng);

// One pump window of a pair source. Pair count ~ Poisson(mean_pairs); the two
// arms share the timestamp and carry anticorrelated bit values.
struct PairEmission {
    PhotonArrival arm_a;
    PhotonArrival arm_b;
    std::uint32_t n_pairs = 0;
    bool multi_pair = false;
};

PairEmission pair_emit(double mean_pairs, double window_time_ns, Rng& rng,
                       double wavelength_nm = 1550.0);

}  // namespace sspdsim
