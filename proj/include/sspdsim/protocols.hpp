#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sspdsim/optics.hpp"
#include "sspdsim/rng.hpp"

namespace sspdsim {

// H2(p) in bits, with H2(0) = H2(1) = 0.
double binary_entropy(double p);

// Per-pulse gain and error rate of the standard decoy link-budget model:
//   Q = Y0 + 1 - exp(-eta * lambda)
//   E*Q = e0*Y0 + e_det*(1 - exp(-eta * lambda))
struct GainError {
    double gain = 0.0;
    double error_rate = 0.0;
};

GainError analytic_gain(double intensity, double eta_total, double y0, double e_det,
                        double e0 = 0.5);

// Measured (or modeled) per-intensity observables feeding the decoy bounds.
struct DecoyObservation {
    double q_signal = 0.0;
    double e_signal = 0.0;
    double q_decoy = 0.0;
    double e_decoy = 0.0;
    double q_vacuum = 0.0;
    double e_vacuum = 0.5;
};

// Vacuum+weak decoy bounds on the single-photon yield and error rate.
struct DecoyBounds {
    double y1_lower = 0.0;
    double e1_upper = 0.0;
    bool clamped = false;   // a bound had to be clamped into [0,1]
    bool insecure = false;  // bounds admit no secure key
};

DecoyBounds decoy_bounds(const DecoyObservation& obs, double mu, double nu, double e0 = 0.5);

// Full decoy analysis block carried by session reports.
struct DecoyAnalysis {
    DecoyObservation observed;
    double mu = 0.0;
    double nu = 0.0;
    double y0 = 0.0;
    double y1_lower = 0.0;
    double e1_upper = 0.0;
    double q1_lower = 0.0;  // y1_lower * mu * exp(-mu)
    bool clamped = false;
    bool insecure = false;
};

DecoyAnalysis analyze_decoy(const DecoyObservation& obs, double mu, double nu, double e0 = 0.5);

// GLLP-style asymptotic secure rate per pulse:
//   R = q * ( Q1_lower*(1 - H2(e1_upper)) - Q_mu*f_ec*H2(E_mu) ), floored at 0.
struct SecureRate {
    double rate_per_pulse = 0.0;
    bool insecure = false;
};

SecureRate secure_key_rate(double q_mu, double e_mu, double q1_lower, double e1_upper,
                           double f_ec, double q);

// Alice's per-slot record for a desk-scale BB84 run.
struct TransmitterRecord {
    std::vector<std::uint8_t> bits;
    std::vector<std::uint8_t> bases;
    std::vector<IntensityLabel> intensities;  // empty when not decoy-modulated

    std::size_t slots() const { return bits.size(); }
};

// One receiver detection, already gated and collapsed to a slot.
struct DetectionRecord {
    std::int64_t slot = 0;
    std::uint8_t basis = 0;
    std::uint8_t bit = 0;
    bool double_click = false;
};

struct SiftedKey {
    std::vector<std::uint8_t> bits;           // receiver-side bits
    std::vector<std::int64_t> positions;      // retained slots
    std::vector<IntensityLabel> intensities;  // per retained slot

    std::size_t length() const { return bits.size(); }
};

// Keeps slots whose measured basis matches the transmitted one. Double
// clicks squash to a fair random bit drawn from squash_rng.
SiftedKey sift(const TransmitterRecord& tx, std::span<const DetectionRecord> rx, Rng& squash_rng);

// Disagreement fraction over the full sifted key.
double estimate_qber(const SiftedKey& key, const TransmitterRecord& tx);

// Sampling mode: estimates on a random subset of the sifted key.
double estimate_qber_sampled(const SiftedKey& key, const TransmitterRecord& tx, double fraction,
                             Rng& rng);

}  // namespace sspdsim
