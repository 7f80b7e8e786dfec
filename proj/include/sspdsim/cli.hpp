#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace sspdsim {

// One batch job: subcommand plus everything needed to re-run it exactly.
// dispatch() writes the outputs and a manifest.json beside them.
struct RunManifest {
    std::string subcommand;  // characterize | jitter | bb84 | bbm92 | report
    std::string config_path;
    std::string out_dir = "out";
    std::string preset;   // device id (characterize/jitter) or session id (bb84/bbm92)
    std::uint64_t seed = 1;
    bool seed_overridden = false;
    std::optional<std::uint64_t> slots_override;
    bool serial = false;
    int threads = 0;  // 0 = runtime default
    bool events_csv = false;
    bool gnuplot = false;

    // characterize
    double wavelength_nm = 1550.0;
    double bias_min = 0.5;
    double bias_max = 1.0;
    double bias_step = 0.01;

    // jitter
    std::uint64_t target_clicks = 100000;
    double sync_rate_hz = 33e6;
    double bin_width_ps = 4.0;
};

// Runs the job; returns 0 on success. Throws sspdsim::Error on failure after
// writing nothing or only partial outputs (the manifest is written last).
int dispatch(const RunManifest& manifest);

}  // namespace sspdsim
