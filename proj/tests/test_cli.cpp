#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "sspdsim/cli.hpp"
#include "sspdsim/errors.hpp"

using namespace sspdsim;
using namespace sspdsim::test;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "sspdsim_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("characterize writes the bias sweep and a manifest") {
    const fs::path out = fresh_dir("characterize");
    RunManifest m;
    m.subcommand = "characterize";
    m.config_path = data_path("presets/device_a.toml");
    m.out_dir = out.string();
    m.bias_min = 0.5;
    m.bias_max = 0.9;
    m.bias_step = 0.1;
    m.gnuplot = true;
    CHECK(dispatch(m) == 0);

    const std::string csv = slurp(out / "bias_sweep_A.csv");
    CHECK(csv.find("bias_ratio,de,dark_cps") != std::string::npos);
    CHECK(csv.find("0.9,0.026,100") != std::string::npos);
    CHECK(fs::exists(out / "bias_sweep.gp"));

    const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(manifest["subcommand"] == "characterize");
    CHECK(manifest["resolved_config"]["devices"][0]["id"] == "A");
    CHECK(manifest["resolved_config"]["devices"][0]["reset_tau_ns"] == doctest::Approx(26.0));
}

TEST_CASE("jitter run recovers the device FWHM end to end") {
    const fs::path out = fresh_dir("jitter");
    RunManifest m;
    m.subcommand = "jitter";
    m.config_path = data_path("presets/device_b.toml");
    m.out_dir = out.string();
    m.seed = 77;
    m.target_clicks = 100000;
    CHECK(dispatch(m) == 0);

    const auto summary = nlohmann::json::parse(slurp(out / "jitter_summary.json"));
    const double w = summary["fwhm_ps"];
    CHECK(w > 95.0);
    CHECK(w < 105.0);
    CHECK(summary["within_5ps_of_device"] == true);
    CHECK(summary["clicks"] == 100000);
    CHECK(fs::exists(out / "jitter_histogram.csv"));
}

TEST_CASE("bb84 runs are byte-identical given the same seed") {
    const fs::path out1 = fresh_dir("bb84_a");
    const fs::path out2 = fresh_dir("bb84_b");
    RunManifest m;
    m.subcommand = "bb84";
    m.config_path = data_path("field_bb84_97km.toml");
    m.seed = 1;
    m.seed_overridden = true;
    m.slots_override = 400000;
    m.events_csv = true;

    m.out_dir = out1.string();
    CHECK(dispatch(m) == 0);
    m.out_dir = out2.string();
    CHECK(dispatch(m) == 0);

    CHECK(slurp(out1 / "report.json") == slurp(out2 / "report.json"));
    CHECK(slurp(out1 / "events.csv") == slurp(out2 / "events.csv"));
    const auto ev_summary = nlohmann::json::parse(slurp(out1 / "events_summary.json"));
    CHECK(ev_summary["total_slots"] == 400000);
    CHECK(ev_summary["events"].get<std::uint64_t>() ==
          ev_summary["photon_clicks"].get<std::uint64_t>() +
              ev_summary["dark_clicks"].get<std::uint64_t>());
    const auto rep = nlohmann::json::parse(slurp(out1 / "report.json"));
    CHECK(rep["protocol"] == "bb84");
    CHECK(rep["slots"] == 400000);
    CHECK(rep["analytic"]["qber"] == doctest::Approx(0.029).epsilon(0.02));

    // The manifest records the override and echoes resolved defaults.
    const auto manifest = nlohmann::json::parse(slurp(out1 / "manifest.json"));
    CHECK(manifest["flag_overrides"]["slots"] == 400000);
    CHECK(manifest["resolved_config"]["sessions"][0]["mu"] == doctest::Approx(0.4));

    // The serial reference kernel produces the same bytes end to end.
    const fs::path out3 = fresh_dir("bb84_serial");
    m.out_dir = out3.string();
    m.serial = true;
    CHECK(dispatch(m) == 0);
    CHECK(slurp(out3 / "report.json") == slurp(out1 / "report.json"));
    CHECK(slurp(out3 / "events.csv") == slurp(out1 / "events.csv"));
}

TEST_CASE("bbm92 subcommand produces a report with an error budget") {
    const fs::path out = fresh_dir("bbm92");
    RunManifest m;
    m.subcommand = "bbm92";
    m.config_path = data_path("lab_bbm92_100km.toml");
    m.out_dir = out.string();
    m.slots_override = 2000000;  // desk-scale smoke run
    CHECK(dispatch(m) == 0);
    const auto rep = nlohmann::json::parse(slurp(out / "report.json"));
    CHECK(rep["protocol"] == "bbm92");
    CHECK(rep["analytic"]["qber"] == doctest::Approx(0.069).epsilon(0.01));
    CHECK(rep["analytic"]["error_budget"].contains("accidental"));
}

TEST_CASE("report subcommand emits the comparison table") {
    const fs::path out = fresh_dir("report");
    RunManifest m;
    m.subcommand = "report";
    m.config_path = data_path("comparison.toml");
    m.out_dir = out.string();
    CHECK(dispatch(m) == 0);
    const std::string csv = slurp(out / "comparison.csv");
    CHECK(csv.find("SSPD") != std::string::npos);
    CHECK(csv.find("666.7") != std::string::npos);
    CHECK(csv.find("recomputed index") != std::string::npos);
}

TEST_CASE("dispatch failure modes") {
    RunManifest m;
    m.subcommand = "report";
    m.config_path = "/does/not/exist.toml";
    m.out_dir = (fs::temp_directory_path() / "sspdsim_test" / "none").string();
    CHECK_THROWS_AS(dispatch(m), ConfigError);

    m.config_path = data_path("comparison.toml");
    m.subcommand = "frobnicate";
    CHECK_THROWS_AS(dispatch(m), ConfigError);

    // characterize on a multi-device pack needs an explicit preset.
    m.subcommand = "characterize";
    m.config_path = data_path("presets/device_pack.toml");
    m.out_dir = fresh_dir("ambiguous").string();
    CHECK_THROWS_AS(dispatch(m), ConfigError);
    m.preset = "A-03";
    CHECK(dispatch(m) == 0);
}
