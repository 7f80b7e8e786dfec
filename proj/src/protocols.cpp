#include "sspdsim/protocols.hpp"

#include <algorithm>
#include <cmath>

#include "sspdsim/errors.hpp"

namespace sspdsim {

double binary_entropy(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("binary_entropy: p must lie in [0,1]");
    if (p == 0.0 || p == 1.0) return 0.0;
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

GainError analytic_gain(double intensity, double eta_total, double y0, double e_det, double e0) {
    if (!(eta_total >= 0.0 && eta_total <= 1.0))
        throw DomainError("analytic_gain: eta_total must lie in [0,1]");
    if (!(y0 >= 0.0 && y0 <= 1.0)) throw DomainError("analytic_gain: Y0 must lie in [0,1]");
    if (!(e_det >= 0.0 && e_det <= 0.5)) throw DomainError("analytic_gain: e_det must lie in [0,0.5]");
    if (intensity < 0.0) throw DomainError("analytic_gain: intensity must be >= 0");
    GainError out;
    const double photon_part = 1.0 - std::exp(-eta_total * intensity);
    out.gain = y0 + photon_part;
    out.error_rate = out.gain > 0.0 ? (e0 * y0 + e_det * photon_part) / out.gain : e0;
    return out;
}

DecoyBounds decoy_bounds(const DecoyObservation& obs, double mu, double nu, double e0) {
    if (!(mu > nu && nu > 0.0)) throw DomainError("decoy_bounds: need mu > nu > 0");
    for (double g : {obs.q_signal, obs.q_decoy, obs.q_vacuum})
        if (!(g >= 0.0 && g <= 1.0)) throw DomainError("decoy_bounds: gains must lie in [0,1]");

    DecoyBounds out;
    const double y0 = obs.q_vacuum;
    const double mu2 = mu * mu;
    const double nu2 = nu * nu;
    double y1 = (mu / (mu * nu - nu2)) *
                (obs.q_decoy * std::exp(nu) - obs.q_signal * std::exp(mu) * (nu2 / mu2) -
                 ((mu2 - nu2) / mu2) * y0);
    if (y1 <= 0.0) {
        out.insecure = true;
        out.clamped = y1 < 0.0;
        out.y1_lower = std::max(y1, 0.0);
        out.e1_upper = 1.0;
        return out;
    }
    if (y1 > 1.0) {
        y1 = 1.0;
        out.clamped = true;
    }
    out.y1_lower = y1;

    double e1 = (obs.e_decoy * obs.q_decoy * std::exp(nu) - e0 * y0) / (y1 * nu);
    if (e1 < 0.0) {
        e1 = 0.0;
        out.clamped = true;
    }
    if (e1 > 1.0) {
        e1 = 1.0;
        out.clamped = true;
    }
    out.e1_upper = e1;
    if (e1 > 0.5) out.insecure = true;
    return out;
}

DecoyAnalysis analyze_decoy(const DecoyObservation& obs, double mu, double nu, double e0) {
    DecoyAnalysis out;
    out.observed = obs;
    out.mu = mu;
    out.nu = nu;
    out.y0 = obs.q_vacuum;
    const DecoyBounds b = decoy_bounds(obs, mu, nu, e0);
    out.y1_lower = b.y1_lower;
    out.e1_upper = b.e1_upper;
    out.q1_lower = b.y1_lower * mu * std::exp(-mu);
    out.clamped = b.clamped;
    out.insecure = b.insecure;
    return out;
}

SecureRate secure_key_rate(double q_mu, double e_mu, double q1_lower, double e1_upper, double f_ec,
                           double q) {
    if (!(f_ec >= 1.0)) throw DomainError("secure_key_rate: f_ec must be >= 1");
    if (!(q > 0.0 && q <= 1.0)) throw DomainError("secure_key_rate: q must lie in (0,1]");
    SecureRate out;
    const double r =
        q * (q1_lower * (1.0 - binary_entropy(e1_upper)) - q_mu * f_ec * binary_entropy(e_mu));
    if (r <= 0.0) {
        out.insecure = true;
        out.rate_per_pulse = 0.0;
    } else {
        out.rate_per_pulse = r;
    }
    return out;
}

SiftedKey sift(const TransmitterRecord& tx, std::span<const DetectionRecord> rx, Rng& squash_rng) {
    SiftedKey key;
    const bool decoy_tagged = !tx.intensities.empty();
    for (const auto& det : rx) {
        if (det.slot < 0 || static_cast<std::size_t>(det.slot) >= tx.slots()) continue;
        const auto slot = static_cast<std::size_t>(det.slot);
        if (det.basis != tx.bases[slot]) continue;
        std::uint8_t bit = det.bit;
        if (det.double_click) bit = squash_rng.bernoulli(0.5) ? 1 : 0;
        key.bits.push_back(bit);
        key.positions.push_back(det.slot);
        key.intensities.push_back(decoy_tagged ? tx.intensities[slot] : IntensityLabel::signal);
    }
    return key;
}

double estimate_qber(const SiftedKey& key, const TransmitterRecord& tx) {
    if (key.length() == 0) throw EmptyInputError("estimate_qber: sifted key is empty");
    std::size_t errors = 0;
    for (std::size_t i = 0; i < key.length(); ++i) {
        const auto slot = static_cast<std::size_t>(key.positions[i]);
        errors += key.bits[i] != tx.bits[slot] ? 1 : 0;
    }
    return static_cast<double>(errors) / static_cast<double>(key.length());
}

double estimate_qber_sampled(const SiftedKey& key, const TransmitterRecord& tx, double fraction,
                             Rng& rng) {
    if (key.length() == 0) throw EmptyInputError("estimate_qber: sifted key is empty");
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw DomainError("estimate_qber_sampled: fraction must lie in (0,1]");
    std::size_t sampled = 0, errors = 0;
    for (std::size_t i = 0; i < key.length(); ++i) {
        if (!rng.bernoulli(fraction)) continue;
        const auto slot = static_cast<std::size_t>(key.positions[i]);
        ++sampled;
        errors += key.bits[i] != tx.bits[slot] ? 1 : 0;
    }
    if (sampled == 0) throw EmptyInputError("estimate_qber_sampled: sample came up empty");
    return static_cast<double>(errors) / static_cast<double>(sampled);
}

}  // namespace sspdsim
