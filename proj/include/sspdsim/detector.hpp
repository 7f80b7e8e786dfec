#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sspdsim/optics.hpp"
#include "sspdsim/rng.hpp"

namespace sspdsim {

// FWHM = 2*sqrt(2 ln 2) * sigma for a Gaussian.
inline constexpr double kFwhmPerSigma = 2.3548200450309493;

// Recovery cycles per counted pulse in the max-count-rate estimate,
// calibrated so a 0.3 uH / 50 ohm device lands at 66 MHz.
inline constexpr double kRecoveryCyclesPerCount = 2.5;

// One detection-efficiency calibration point.
struct DeAnchor {
    double bias_ratio = 0.0;     // I_b / I_c
    double wavelength_nm = 0.0;
    double de = 0.0;             // system DE fraction in [0,1]
};

// Dark rate model R(b) = rate_cps * exp(slope_k * (b - bias_ratio)).
struct DarkAnchor {
    double bias_ratio = 0.9;
    double rate_cps = 100.0;
    double slope_k = 46.051701859880914;  // ln(10)/0.05: one decade per 0.05
};

// Immutable description of one SSPD device: geometry, dc parameters and the
// calibration anchors the simulator interpolates between.
struct DeviceProfile {
    std::string id;
    std::array<double, 2> area_um{20.0, 20.0};
    double wire_width_nm = 100.0;
    double pitch_nm = 200.0;
    double thickness_nm = 3.9;
    double fill_factor = 0.5;
    double t_c_k = 9.8;
    double i_c_ua = 19.0;
    double r_20k_ohm = 1.0e7;
    double l_k_uh = 1.3;
    double load_ohm = 50.0;
    std::vector<DeAnchor> de_anchors;
    DarkAnchor dark_anchor;
    double jitter_fwhm_ps = 100.0;
    bool latching_enabled = false;
    double polarization_coupling = 1.0;  // static factor in [0,1]
    std::string note;                    // free-form provenance remarks

    // Bias recovery time constant L_k / R_load, in ns.
    double reset_tau_ns() const { return l_k_uh / load_ohm * 1e3; }

    // Throws ConfigError listing every violated invariant.
    void validate() const;
};

// Mutable per-detector state, owned by one session at a time.
struct DetectorState {
    double bias_ratio_set = 0.9;
    std::optional<double> last_fire_time_ns;
    std::optional<double> last_arrival_time_ns;
    bool latched = false;

    void reset() {
        last_fire_time_ns.reset();
        last_arrival_time_ns.reset();
        latched = false;
    }
};

enum class ClickCause : std::uint8_t { photon = 0, dark = 1 };

// A detector click. `cause` is diagnostic only; protocol logic never
// branches on it.
struct DetectionEvent {
    double time_ns = 0.0;
    std::int32_t channel = 0;
    ClickCause cause = ClickCause::photon;
    std::int64_t slot = -1;  // filled in once a time bin is assigned
};

// Piecewise log-linear DE(bias) through the profile's anchors for the given
// wavelength. Zero at zero bias, clamped above the top anchor.
double efficiency_at_bias(const DeviceProfile& profile, double bias_ratio, double wavelength_nm);

// Exponential dark-count model, counts/s.
double dark_rate_at_bias(const DeviceProfile& profile, double bias_ratio);

// Bias available dt_ns after a fire: set * (1 - exp(-dt/tau)). A missing dt
// means the device never fired and the full set bias is available.
double recovered_bias(const DeviceProfile& profile, double bias_ratio_set,
                      std::optional<double> dt_ns);

// Kinetic-inductance-limited maximum count rate, Hz.
double max_count_rate_hz(const DeviceProfile& profile);

// Stochastic click generation for one arrival. Click probability is
// 1-(1-eta_eff)^n with eta_eff evaluated at the recovered bias; Gaussian
// jitter is applied to the emitted timestamp.
std::optional<DetectionEvent> detect(const DeviceProfile& profile, DetectorState& state,
                                     const PhotonArrival& arrival, Rng& rng,
                                     std::int32_t channel = 0);

// Homogeneous Poisson dark clicks in [t0, t1), sorted by time.
std::vector<DetectionEvent> dark_events(const DeviceProfile& profile, double bias_ratio,
                                        double t0_ns, double t1_ns, Rng& rng,
                                        std::int32_t channel = 0);

// J_c = I_c / (width * thickness), in A/m^2.
double critical_current_density_a_m2(double i_c_ua, double wire_width_nm, double thickness_nm);

}  // namespace sspdsim
