#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sspdsim/detector.hpp"
#include "sspdsim/engine.hpp"
#include "sspdsim/optics.hpp"
#include "sspdsim/protocols.hpp"

namespace sspdsim {

// Decoy BB84 over one fiber link: Alice (WCP source with vacuum+weak decoys)
// to Bob (passive-basis receiver with two gated SSPDs).
struct Bb84SessionSpec {
    DeviceProfile device;
    double bias_ratio = 0.9;
    ChannelSpec channel;
    double wavelength_nm = 1550.0;
    double mu = 0.4;
    double nu = 0.15;
    double p_signal = 0.5;
    double p_decoy = 0.25;
    double p_vacuum = 0.25;
    double clock_rate_hz = 625e6;
    std::uint64_t slots = 1'000'000;
    double gate_fraction = 1.0;
    double misalignment = 0.0;  // probability a photon lands on the wrong detector
    double f_ec = 1.1;
    double q_basis = 0.5;
};

// BBM92 with a mid-point pair source and one two-detector receiver per arm.
struct Bbm92SessionSpec {
    DeviceProfile device_a;
    DeviceProfile device_b;
    double bias_ratio = 0.9;
    ChannelSpec arm_a;
    ChannelSpec arm_b;
    double wavelength_nm = 1550.0;
    double mean_pairs = 0.08;
    double visibility_error = 0.0;  // flip probability on the matched-basis outcome
    double clock_rate_hz = 1e6;
    std::uint64_t windows = 1'000'000;
    double gate_fraction = 0.002;
    double f_ec = 1.1;
    double q_basis = 0.5;
};

enum class Protocol : std::uint8_t { bb84, bbm92 };

struct SessionConfig {
    std::string id = "session";
    Protocol protocol = Protocol::bb84;
    Bb84SessionSpec bb84;
    Bbm92SessionSpec bbm92;
    std::uint64_t default_seed = 1;

    // Throws ConfigError listing every offending field.
    void validate() const;
};

// ---------------------------------------------------------------------------
// Raw kernel tallies.

struct IntensityTally {
    std::uint64_t sent = 0;
    std::uint64_t clicked = 0;  // slots with >=1 in-gate click
    std::uint64_t sifted = 0;
    std::uint64_t errors = 0;
};

struct Bb84Tally {
    std::array<IntensityTally, 3> intensity{};  // indexed by IntensityLabel
    std::uint64_t slots = 0;
    std::uint64_t photon_clicks = 0;
    std::uint64_t dark_clicks = 0;
    std::uint64_t double_clicks = 0;
    std::uint64_t out_of_gate = 0;
};

struct Bbm92Tally {
    std::uint64_t windows = 0;
    std::uint64_t emitted_pairs = 0;
    std::uint64_t multi_pair_windows = 0;
    std::uint64_t photon_clicks = 0;
    std::uint64_t dark_clicks = 0;
    std::uint64_t double_clicks = 0;
    std::uint64_t out_of_gate = 0;
    std::uint64_t clicks_side_a = 0;
    std::uint64_t clicks_side_b = 0;
    std::uint64_t coincident = 0;
    std::uint64_t sifted = 0;
    std::uint64_t errors = 0;
    // Provenance of sifted coincidences (diagnostic decomposition).
    std::uint64_t sifted_same_pair = 0;
    std::uint64_t sifted_cross_pair = 0;
    std::uint64_t sifted_accidental = 0;
    std::uint64_t errors_same_pair = 0;
    std::uint64_t errors_cross_pair = 0;
    std::uint64_t errors_accidental = 0;
    std::uint64_t photon_buffer_overflow = 0;  // should stay 0; see kernel note
};

// Kernels. parallel=false runs the fused serial reference; parallel=true runs
// the blocked OpenMP kernel. Both derive all randomness from per-slot counter
// streams and produce identical tallies and logs.
Bb84Tally run_bb84_kernel(const Bb84SessionSpec& spec, std::uint64_t seed, EventLog* log,
                          bool parallel);
Bbm92Tally run_bbm92_kernel(const Bbm92SessionSpec& spec, std::uint64_t seed, EventLog* log,
                            bool parallel);

// ---------------------------------------------------------------------------
// Session reports.

struct RateValue {
    double per_slot = 0.0;
    double scaled_hz = 0.0;
};

struct ScalingLedger {
    std::uint64_t simulated_slots = 0;
    double real_clock_hz = 0.0;
    double equivalent_seconds = 0.0;
    std::string rule;
};

struct CalibrationKnob {
    std::string name;
    double value = 0.0;
    std::string origin;  // "measured" | "tuned" | "convention"
};

struct Bb84Estimates {
    std::array<GainError, 3> per_intensity{};  // Q/E for signal, decoy, vacuum
    double qber = 0.0;                         // signal-intensity sifted QBER
    RateValue sifted;
    RateValue secure;
    DecoyAnalysis decoy;
    bool insecure = false;
};

struct Bbm92Estimates {
    double coincidence_gain = 0.0;  // per window, pre-sift
    double qber = 0.0;
    RateValue sifted;
    RateValue secure;
    double secure_over_sifted = 0.0;
    // QBER error budget, as fractions of sifted coincidences.
    double frac_same_pair = 0.0;
    double frac_cross_pair = 0.0;
    double frac_accidental = 0.0;
};

struct SessionReport {
    std::string session_id;
    std::string protocol;
    std::uint64_t seed = 0;
    std::uint64_t slots = 0;
    double clock_rate_hz = 0.0;
    Bb84Tally bb84_tally;
    Bbm92Tally bbm92_tally;
    std::optional<Bb84Estimates> bb84_mc;
    std::optional<Bb84Estimates> bb84_analytic;
    std::optional<Bbm92Estimates> bbm92_mc;
    std::optional<Bbm92Estimates> bbm92_analytic;
    ScalingLedger scaling;
    std::vector<CalibrationKnob> calibration;
};

// Full pipelines: kernel + Monte Carlo estimates + analytic model predictions
// side by side. Deterministic given (config, seed).
SessionReport bb84_session(const SessionConfig& config, std::uint64_t seed, bool parallel = true);
SessionReport bbm92_session(const SessionConfig& config, std::uint64_t seed, bool parallel = true);

// Protocol dispatch returning the full event log (desk-scale use).
EventLog run_session(const SessionConfig& config, std::uint64_t seed, bool parallel = true);

// Stable, insertion-ordered JSON rendering of a report.
std::string report_to_json(const SessionReport& report, int indent = 2);

// Analytic single-link quantities used both by reports and by tests.
struct Bb84LinkModel {
    double eta_total = 0.0;  // channel * DE(set bias) * polarization coupling
    double y0 = 0.0;         // per-slot dark click probability (both detectors)
    double e_det = 0.0;
};
Bb84LinkModel bb84_link_model(const Bb84SessionSpec& spec);

Bbm92Estimates bbm92_analytic_model(const Bbm92SessionSpec& spec);

}  // namespace sspdsim
