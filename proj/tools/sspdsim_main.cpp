#include <cstdint>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sspdsim/cli.hpp"
#include "sspdsim/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

void add_common(CLI::App* cmd, sspdsim::RunManifest& m, bool& seed_given) {
    cmd->add_option("--config", m.config_path, "config document (TOML)")->required();
    cmd->add_option("--out", m.out_dir, "output directory");
    cmd->add_option("--seed", m.seed, "RNG seed")->each([&seed_given](const std::string&) {
        seed_given = true;
    });
    cmd->add_option("--preset", m.preset, "device or session id to use");
    cmd->add_option("--threads", m.threads, "worker threads (0 = runtime default)");
    cmd->add_flag("--serial", m.serial, "force the serial reference kernels");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sspdsim - SSPD device and QKD link simulator"};
    app.require_subcommand(1);

    sspdsim::RunManifest m;
    bool seed_given = false;

    auto* characterize = app.add_subcommand("characterize", "bias sweep: DE and dark rate vs bias");
    add_common(characterize, m, seed_given);
    characterize->add_option("--wavelength", m.wavelength_nm, "wavelength in nm");
    characterize->add_option("--bias-min", m.bias_min, "grid start");
    characterize->add_option("--bias-max", m.bias_max, "grid end");
    characterize->add_option("--bias-step", m.bias_step, "grid step");
    characterize->add_flag("--gnuplot", m.gnuplot, "also emit a gnuplot script");

    auto* jitter = app.add_subcommand("jitter", "TCSPC jitter histogram and FWHM");
    add_common(jitter, m, seed_given);
    jitter->add_option("--clicks", m.target_clicks, "clicks to accumulate");
    jitter->add_option("--sync-hz", m.sync_rate_hz, "sync laser repetition rate");
    jitter->add_option("--bin-ps", m.bin_width_ps, "histogram bin width in ps");
    jitter->add_option("--wavelength", m.wavelength_nm, "wavelength in nm");

    std::uint64_t slots = 0;
    auto* bb84 = app.add_subcommand("bb84", "decoy-state BB84 session report");
    add_common(bb84, m, seed_given);
    bb84->add_option("--slots", slots, "override the session's slot count");
    bb84->add_flag("--events-csv", m.events_csv, "also dump the event log CSV");

    auto* bbm92 = app.add_subcommand("bbm92", "entanglement-based BBM92 session report");
    add_common(bbm92, m, seed_given);
    bbm92->add_option("--slots", slots, "override the session's window count");
    bbm92->add_flag("--events-csv", m.events_csv, "also dump the event log CSV");

    auto* report = app.add_subcommand("report", "detector comparison table");
    add_common(report, m, seed_given);

    CLI11_PARSE(app, argc, argv);

    m.subcommand = app.get_subcommands().front()->get_name();
    m.seed_overridden = seed_given;
    if (slots > 0) m.slots_override = slots;
#ifdef _OPENMP
    if (m.threads > 0) omp_set_num_threads(m.threads);
#endif

    try {
        return sspdsim::dispatch(m);
    } catch (const sspdsim::Error& e) {
        nlohmann::ordered_json err{{"error", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        nlohmann::ordered_json err{{"error", e.what()}};
        std::cerr << err.dump() << "\n";
        return 2;
    }
}
