#include "sspdsim/detector.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sspdsim/errors.hpp"

namespace sspdsim {

namespace {

constexpr double kWavelengthTolNm = 0.5;
// Fallback log-slope when a wavelength has a single anchor: one decade of DE
// per 0.1 of bias ratio, consistent with the shipped calibration curves.
constexpr double kSingleAnchorSlope = 23.025850929940457;

void check_bias_domain(double bias_ratio) {
    if (!(bias_ratio >= 0.0 && bias_ratio <= 1.0))
        throw DomainError("bias_ratio must lie in [0,1]");
}

}  // namespace

void DeviceProfile::validate() const {
    std::ostringstream bad;
    auto fail = [&bad](const std::string& msg) { bad << "  - " << msg << "\n"; };

    if (id.empty()) fail("id: must be non-empty");
    if (!(wire_width_nm > 0.0)) fail("wire_width_nm: must be > 0");
    if (!(pitch_nm > 0.0)) fail("pitch_nm: must be > 0");
    if (!(thickness_nm > 0.0)) fail("thickness_nm: must be > 0");
    if (!(i_c_ua > 0.0)) fail("i_c_ua: must be > 0");
    if (!(l_k_uh > 0.0)) fail("l_k_uh: must be > 0");
    if (!(load_ohm > 0.0)) fail("load_ohm: must be > 0");
    if (!(jitter_fwhm_ps > 0.0)) fail("jitter_fwhm_ps: must be > 0");
    if (!(polarization_coupling >= 0.0 && polarization_coupling <= 1.0))
        fail("polarization_coupling: must lie in [0,1]");
    if (pitch_nm > 0.0 && std::abs(fill_factor - wire_width_nm / pitch_nm) > 1e-9)
        fail("fill_factor: must equal wire_width_nm / pitch_nm");
    if (!(dark_anchor.bias_ratio > 0.0 && dark_anchor.bias_ratio <= 1.0))
        fail("dark_anchor.bias_ratio: must lie in (0,1]");
    if (!(dark_anchor.rate_cps > 0.0)) fail("dark_anchor.rate_cps: must be > 0");

    // Per wavelength: strictly increasing bias, DE in (0,1] and non-decreasing.
    std::vector<double> wavelengths;
    for (const auto& a : de_anchors) {
        bool seen = false;
        for (double w : wavelengths) seen |= std::abs(w - a.wavelength_nm) < kWavelengthTolNm;
        if (!seen) wavelengths.push_back(a.wavelength_nm);
    }
    if (de_anchors.empty()) fail("de_anchors: need at least one calibration point");
    for (double w : wavelengths) {
        const DeAnchor* prev = nullptr;
        for (const auto& a : de_anchors) {
            if (std::abs(a.wavelength_nm - w) >= kWavelengthTolNm) continue;
            if (!(a.de > 0.0 && a.de <= 1.0)) fail("de_anchors: de must lie in (0,1]");
            if (!(a.bias_ratio > 0.0 && a.bias_ratio <= 1.0))
                fail("de_anchors: bias_ratio must lie in (0,1]");
            if (prev) {
                if (a.bias_ratio <= prev->bias_ratio)
                    fail("de_anchors: bias_ratio must be strictly increasing per wavelength");
                if (a.de < prev->de)
                    fail("de_anchors: de must be non-decreasing with bias");
            }
            prev = &a;
        }
    }

    const std::string msg = bad.str();
    if (!msg.empty())
        throw ConfigError("device profile '" + id + "' failed validation:\n" + msg);
}

double efficiency_at_bias(const DeviceProfile& profile, double bias_ratio, double wavelength_nm) {
    check_bias_domain(bias_ratio);

    // Anchors are stored sorted per wavelength (validate() enforces this).
    std::vector<const DeAnchor*> pts;
    for (const auto& a : profile.de_anchors)
        if (std::abs(a.wavelength_nm - wavelength_nm) < kWavelengthTolNm) pts.push_back(&a);
    if (pts.empty()) {
        std::ostringstream os;
        os << "device '" << profile.id << "' has no DE calibration at " << wavelength_nm << " nm";
        throw CalibrationError(os.str());
    }
    if (bias_ratio == 0.0) return 0.0;
    if (bias_ratio >= pts.back()->bias_ratio) return pts.back()->de;  // no saturation modeled

    double b0, b1, ln0, ln1;
    if (bias_ratio <= pts.front()->bias_ratio) {
        // Extrapolate below the lowest anchor with the first segment's slope.
        b0 = pts.front()->bias_ratio;
        ln0 = std::log(pts.front()->de);
        double slope = kSingleAnchorSlope;
        if (pts.size() > 1 && pts[1]->bias_ratio > b0)
            slope = (std::log(pts[1]->de) - ln0) / (pts[1]->bias_ratio - b0);
        return std::exp(ln0 + slope * (bias_ratio - b0));
    }
    auto it = std::upper_bound(pts.begin(), pts.end(), bias_ratio,
                               [](double b, const DeAnchor* a) { return b < a->bias_ratio; });
    const DeAnchor* hi = *it;
    const DeAnchor* lo = *(it - 1);
    b0 = lo->bias_ratio;
    b1 = hi->bias_ratio;
    ln0 = std::log(lo->de);
    ln1 = std::log(hi->de);
    const double t = (bias_ratio - b0) / (b1 - b0);
    return std::exp(ln0 + t * (ln1 - ln0));
}

double dark_rate_at_bias(const DeviceProfile& profile, double bias_ratio) {
    check_bias_domain(bias_ratio);
    const auto& d = profile.dark_anchor;
    return d.rate_cps * std::exp(d.slope_k * (bias_ratio - d.bias_ratio));
}

double recovered_bias(const DeviceProfile& profile, double bias_ratio_set,
                      std::optional<double> dt_ns) {
    if (!dt_ns) return bias_ratio_set;
    if (*dt_ns < 0.0) throw DomainError("recovered_bias: dt_ns must be >= 0");
    return bias_ratio_set * (1.0 - std::exp(-*dt_ns / profile.reset_tau_ns()));
}

double max_count_rate_hz(const DeviceProfile& profile) {
    const double tau_s = profile.l_k_uh * 1e-6 / profile.load_ohm;
    return 1.0 / (kRecoveryCyclesPerCount * tau_s);
}

std::optional<DetectionEvent> detect(const DeviceProfile& profile, DetectorState& state,
                                     const PhotonArrival& arrival, Rng& rng,
                                     std::int32_t channel) {
    if (state.last_arrival_time_ns && arrival.time_ns < *state.last_arrival_time_ns)
        throw SequenceError("detect: arrivals must be fed in time order");
    state.last_arrival_time_ns = arrival.time_ns;

    if (state.latched || arrival.n_photons == 0) return std::nullopt;

    std::optional<double> dt;
    if (state.last_fire_time_ns) dt = arrival.time_ns - *state.last_fire_time_ns;
    const double bias = recovered_bias(profile, state.bias_ratio_set, dt);
    const double eta = efficiency_at_bias(profile, bias, arrival.wavelength_nm) *
                       profile.polarization_coupling * (1.0 - arrival.polarization_mismatch);
    const double p_click = 1.0 - std::pow(1.0 - eta, static_cast<double>(arrival.n_photons));
    if (!rng.bernoulli(p_click)) return std::nullopt;

    const double sigma_ns = profile.jitter_fwhm_ps / kFwhmPerSigma * 1e-3;
    DetectionEvent ev;
    ev.time_ns = arrival.time_ns + rng.gaussian(0.0, sigma_ns);
    ev.channel = channel;
    ev.cause = ClickCause::photon;
    state.last_fire_time_ns = arrival.time_ns;
    if (profile.latching_enabled) state.latched = true;
    return ev;
}

std::vector<DetectionEvent> dark_events(const DeviceProfile& profile, double bias_ratio,
                                        double t0_ns, double t1_ns, Rng& rng,
                                        std::int32_t channel) {
    if (t1_ns < t0_ns) throw DomainError("dark_events: window must satisfy t1 >= t0");
    std::vector<DetectionEvent> out;
    if (t1_ns == t0_ns) return out;
    const double rate = dark_rate_at_bias(profile, bias_ratio);
    const double mean = rate * (t1_ns - t0_ns) * 1e-9;
    const std::uint64_t n = rng.poisson(mean);
    out.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        DetectionEvent ev;
        ev.time_ns = t0_ns + rng.uniform() * (t1_ns - t0_ns);
        ev.channel = channel;
        ev.cause = ClickCause::dark;
        out.push_back(ev);
    }
    std::sort(out.begin(), out.end(),
              [](const DetectionEvent& a, const DetectionEvent& b) { return a.time_ns < b.time_ns; });
    return out;
}

double critical_current_density_a_m2(double i_c_ua, double wire_width_nm, double thickness_nm) {
    if (!(i_c_ua > 0.0 && wire_width_nm > 0.0 && thickness_nm > 0.0))
        throw DomainError("critical_current_density: all inputs must be > 0");
    return (i_c_ua * 1e-6) / ((wire_width_nm * 1e-9) * (thickness_nm * 1e-9));
}

}  // namespace sspdsim
