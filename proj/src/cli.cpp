#include "sspdsim/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "sspdsim/analysis.hpp"
#include "sspdsim/config.hpp"
#include "sspdsim/engine.hpp"
#include "sspdsim/errors.hpp"
#include "sspdsim/sessions.hpp"

namespace sspdsim {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
}

const DeviceProfile& pick_device(const Config& cfg, const std::string& preset) {
    if (!preset.empty()) return find_device(cfg, preset);
    if (cfg.devices.size() == 1) return cfg.devices.front();
    throw ConfigError("config defines " + std::to_string(cfg.devices.size()) +
                      " devices; pick one with --preset");
}

const SessionConfig& pick_session(const Config& cfg, const std::string& preset,
                                  Protocol protocol) {
    if (!preset.empty()) {
        const SessionConfig& s = find_session(cfg, preset);
        if (s.protocol != protocol)
            throw ConfigError("session '" + preset + "' is not a " +
                              (protocol == Protocol::bb84 ? std::string("bb84") : "bbm92") +
                              " session");
        return s;
    }
    for (const auto& s : cfg.sessions)
        if (s.protocol == protocol) return s;
    throw ConfigError("config defines no session for the requested protocol");
}

// TCSPC jitter characterization: single-photon pulses locked to the sync
// clock, arrival phase at mid-period so the folded histogram peak sits away
// from the fold boundary.
struct JitterResult {
    Histogram hist;
    double fwhm_ps = 0.0;
    std::uint64_t clicks = 0;
    std::uint64_t arrivals = 0;
};

JitterResult run_jitter(const DeviceProfile& dev, std::uint64_t seed, std::uint64_t target_clicks,
                        double sync_rate_hz, double bin_width_ps, double wavelength_nm) {
    const double period_ns = 1e9 / sync_rate_hz;
    DetectorState state;
    state.bias_ratio_set = dev.dark_anchor.bias_ratio;
    std::vector<DetectionEvent> events;
    events.reserve(target_clicks);

    const double de = efficiency_at_bias(dev, state.bias_ratio_set, wavelength_nm);
    const std::uint64_t max_arrivals =
        de > 0.0 ? static_cast<std::uint64_t>(static_cast<double>(target_clicks) / de * 4.0) + 1000
                 : 1000;
    std::uint64_t arrivals = 0;
    for (; arrivals < max_arrivals && events.size() < target_clicks; ++arrivals) {
        PhotonArrival ar;
        ar.time_ns = (static_cast<double>(arrivals) + 0.5) * period_ns;
        ar.n_photons = 1;
        ar.wavelength_nm = wavelength_nm;
        Rng rng = Rng::at(seed, RngStream::detection, arrivals);
        if (auto ev = detect(dev, state, ar, rng)) events.push_back(*ev);
    }

    JitterResult res;
    res.clicks = events.size();
    res.arrivals = arrivals;
    if (events.empty()) throw Error("jitter run produced no clicks");
    res.hist = tcspc_histogram(events, sync_rate_hz, bin_width_ps);
    res.fwhm_ps = fwhm(res.hist);
    return res;
}

void write_manifest(const RunManifest& m, const Config& cfg,
                    const std::vector<std::string>& outputs) {
    ordered_json j;
    j["subcommand"] = m.subcommand;
    j["config_path"] = m.config_path;
    j["seed"] = m.seed;
    j["out_dir"] = m.out_dir;
    ordered_json overrides;
    if (m.seed_overridden) overrides["seed"] = m.seed;
    if (m.slots_override) overrides["slots"] = *m.slots_override;
    if (!m.preset.empty()) overrides["preset"] = m.preset;
    if (m.serial) overrides["serial"] = true;
    j["flag_overrides"] = overrides;
    j["outputs"] = outputs;
    j["resolved_config"] = ordered_json::parse(config_snapshot_json(cfg));
    write_text(fs::path(m.out_dir) / "manifest.json", j.dump(2) + "\n");
}

int run_characterize(const RunManifest& m, const Config& cfg) {
    const DeviceProfile& dev = pick_device(cfg, m.preset);
    if (!(m.bias_step > 0.0) || m.bias_max < m.bias_min)
        throw DomainError("characterize: bad bias grid");
    std::vector<double> grid;
    const auto steps = static_cast<std::size_t>((m.bias_max - m.bias_min) / m.bias_step + 1e-9);
    for (std::size_t i = 0; i <= steps; ++i)
        grid.push_back(std::min(m.bias_min + static_cast<double>(i) * m.bias_step, 1.0));
    const auto rows = bias_sweep(dev, grid, m.wavelength_nm);

    std::ostringstream csv;
    write_bias_sweep_csv(rows, csv);
    const std::string csv_name = "bias_sweep_" + dev.id + ".csv";
    write_text(fs::path(m.out_dir) / csv_name, csv.str());
    std::vector<std::string> outputs = {csv_name};
    if (m.gnuplot) {
        std::ostringstream gp;
        write_gnuplot_script(csv_name, "DE vs normalized bias (" + dev.id + ")", "DE", true, gp);
        write_text(fs::path(m.out_dir) / "bias_sweep.gp", gp.str());
        outputs.push_back("bias_sweep.gp");
    }
    write_manifest(m, cfg, outputs);
    return 0;
}

int run_jitter_cmd(const RunManifest& m, const Config& cfg) {
    const DeviceProfile& dev = pick_device(cfg, m.preset);
    const JitterResult res = run_jitter(dev, m.seed, m.target_clicks, m.sync_rate_hz,
                                        m.bin_width_ps, m.wavelength_nm);

    std::ostringstream csv;
    csv << "bin_start_ps,count\n";
    for (std::size_t i = 0; i < res.hist.counts.size(); ++i) {
        if (res.hist.counts[i] == 0) continue;  // sparse: the sync period is long
        csv << res.hist.origin_ps + static_cast<double>(i) * res.hist.bin_width_ps << ","
            << res.hist.counts[i] << "\n";
    }
    write_text(fs::path(m.out_dir) / "jitter_histogram.csv", csv.str());

    ordered_json j;
    j["device"] = dev.id;
    j["clicks"] = res.clicks;
    j["arrivals"] = res.arrivals;
    j["sync_rate_hz"] = m.sync_rate_hz;
    j["bin_width_ps"] = res.hist.bin_width_ps;
    j["fwhm_ps"] = res.fwhm_ps;
    j["device_jitter_fwhm_ps"] = dev.jitter_fwhm_ps;
    j["within_5ps_of_device"] = std::abs(res.fwhm_ps - dev.jitter_fwhm_ps) <= 5.0;
    write_text(fs::path(m.out_dir) / "jitter_summary.json", j.dump(2) + "\n");
    write_manifest(m, cfg, {"jitter_histogram.csv", "jitter_summary.json"});
    return 0;
}

int run_qkd(const RunManifest& m, const Config& cfg, Protocol protocol) {
    SessionConfig session = pick_session(cfg, m.preset, protocol);
    if (m.slots_override) {
        if (protocol == Protocol::bb84)
            session.bb84.slots = *m.slots_override;
        else
            session.bbm92.windows = *m.slots_override;
    }
    const std::uint64_t seed = m.seed_overridden ? m.seed : session.default_seed;
    const bool parallel = !m.serial;

    std::vector<std::string> outputs;
    if (m.events_csv) {
        const EventLog log = run_session(session, seed, parallel);
        std::ostringstream csv;
        write_events_csv(log, csv);
        write_text(fs::path(m.out_dir) / "events.csv", csv.str());
        write_text(fs::path(m.out_dir) / "events_summary.json",
                   event_log_summary_json(log) + "\n");
        outputs.push_back("events.csv");
        outputs.push_back("events_summary.json");
    }
    const SessionReport rep = protocol == Protocol::bb84 ? bb84_session(session, seed, parallel)
                                                         : bbm92_session(session, seed, parallel);
    write_text(fs::path(m.out_dir) / "report.json", report_to_json(rep) + "\n");
    outputs.push_back("report.json");

    RunManifest stamped = m;
    stamped.seed = seed;
    write_manifest(stamped, cfg, outputs);
    return 0;
}

int run_report(const RunManifest& m, const Config& cfg) {
    if (cfg.comparisons.empty())
        throw ConfigError("report: config has no [[comparison]] rows");
    const auto rows = comparison_table(cfg.comparisons);
    std::ostringstream csv;
    write_comparison_csv(rows, csv);
    write_text(fs::path(m.out_dir) / "comparison.csv", csv.str());
    for (const auto& r : rows)
        if (!r.note.empty()) std::cout << "note [" << r.name << "]: " << r.note << "\n";
    write_manifest(m, cfg, {"comparison.csv"});
    return 0;
}

}  // namespace

int dispatch(const RunManifest& m) {
    const Config cfg = load_config_file(m.config_path);
    fs::create_directories(m.out_dir);

    if (m.subcommand == "characterize") return run_characterize(m, cfg);
    if (m.subcommand == "jitter") return run_jitter_cmd(m, cfg);
    if (m.subcommand == "bb84") return run_qkd(m, cfg, Protocol::bb84);
    if (m.subcommand == "bbm92") return run_qkd(m, cfg, Protocol::bbm92);
    if (m.subcommand == "report") return run_report(m, cfg);
    throw ConfigError("unknown subcommand '" + m.subcommand + "'");
}

}  // namespace sspdsim
