#include <string>

#include "doctest.h"
#include "helpers.hpp"
#include "sspdsim/config.hpp"
#include "sspdsim/errors.hpp"

using namespace sspdsim;
using namespace sspdsim::test;

TEST_CASE("shipped presets resolve to the published dc parameters") {
    const DeviceProfile a = preset_a();
    CHECK(a.i_c_ua == doctest::Approx(19.0));
    CHECK(a.l_k_uh == doctest::Approx(1.3));
    CHECK(a.reset_tau_ns() == doctest::Approx(26.0));
    CHECK(a.fill_factor == doctest::Approx(0.5));
    CHECK(a.t_c_k == doctest::Approx(9.8));

    const DeviceProfile b = preset_b();
    CHECK(b.l_k_uh == doctest::Approx(0.3));
    CHECK(b.area_um[0] == doctest::Approx(10.0));

    const DeviceProfile r = load_preset("presets/device_ref25.toml", "ref25");
    CHECK(r.l_k_uh == doctest::Approx(1.0));
    CHECK(r.i_c_ua == doctest::Approx(32.0));
    CHECK(r.note.find("not reconciled") != std::string::npos);
}

TEST_CASE("empty or sectionless documents are rejected with the section list") {
    try {
        parse_config("");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[[device]]") != std::string::npos);
        CHECK(msg.find("[[session]]") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("# only a comment\n"), ConfigError);
}

TEST_CASE("unknown keys and sections are rejected with line info") {
    const std::string doc = R"(
[[channel]]
id = "c"
length_km = 10.0
loss_db_per_km = 0.2
not_a_real_key = 5
)";
    try {
        parse_config(doc);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("not_a_real_key") != std::string::npos);
        CHECK(msg.find("line 6") != std::string::npos);
    }

    CHECK_THROWS_AS(parse_config("[[mystery]]\nid = \"x\"\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("stray = 1\n"), ConfigError);
}

TEST_CASE("constraint violations carry the failed invariant") {
    std::string doc = R"(
[[device]]
id = "bad"
area_um = [20.0, 20.0]
wire_width_nm = 100.0
pitch_nm = 200.0
thickness_nm = 3.9
fill_factor = 0.7
t_c_k = 9.8
i_c_ua = 19.0
r_20k_ohm = 1.0e7
l_k_uh = 1.3
dark_anchor = [0.9, 100.0]
de_anchors = [[0.9, 1550.0, 0.026]]
)";
    try {
        parse_config(doc);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("fill_factor") != std::string::npos);
    }
}

TEST_CASE("parser essentials") {
    const std::string doc = R"(
[[comparison]]
name = "weird \"quoted\" name"
de_percent = 2.5
dark_cps = 1e2
jitter_ps = 60
printed_index_1e6 = 416.7
)";
    const Config cfg = parse_config(doc);
    REQUIRE(cfg.comparisons.size() == 1);
    CHECK(cfg.comparisons[0].name == "weird \"quoted\" name");
    CHECK(cfg.comparisons[0].dark_cps == doctest::Approx(100.0));

    CHECK_THROWS_AS(parse_toml("key = \n"), ConfigError);
    CHECK_THROWS_AS(parse_toml("key 5\n"), ConfigError);
    CHECK_THROWS_AS(parse_toml("k = \"unterminated\n"), ConfigError);
    CHECK_THROWS_AS(parse_toml("k = [1, 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_toml("[t]\nk = 1\nk = 2\n"), ConfigError);

    // Multi-line arrays with comments parse fine.
    const TomlDoc d = parse_toml("[t]\nxs = [\n  1, # one\n  2,\n]\n");
    CHECK(d.tables.at("t").values.at("xs").arr.size() == 2);
}

TEST_CASE("sessions resolve cross-references and defaults") {
    const Config cfg = load_config_file(data_path("field_bb84_97km.toml"));
    const SessionConfig& s = find_session(cfg, "bb84-97km");
    CHECK(s.protocol == Protocol::bb84);
    CHECK(s.bb84.device.id == "field-sspd");
    CHECK(s.bb84.channel.length_km == doctest::Approx(97.0));
    CHECK(s.bb84.mu == doctest::Approx(0.4));
    CHECK(s.bb84.slots == 100000000ull);

    CHECK_THROWS_AS(find_session(cfg, "nope"), ConfigError);
    CHECK_THROWS_AS(find_device(cfg, "nope"), ConfigError);

    // Dangling reference.
    const std::string doc = R"(
[[session]]
id = "s"
protocol = "bb84"
device = "ghost"
channel = "ghost"
slots = 10
clock_rate_hz = 1e6
)";
    CHECK_THROWS_AS(parse_config(doc), ConfigError);

    const std::string snapshot = config_snapshot_json(cfg);
    CHECK(snapshot.find("\"field-sspd\"") != std::string::npos);
    CHECK(snapshot.find("\"transmittance\"") != std::string::npos);
}

TEST_CASE("session validation lists offending fields") {
    Config cfg = load_config_file(data_path("field_bb84_97km.toml"));
    SessionConfig s = find_session(cfg, "bb84-97km");
    s.bb84.p_signal = 0.9;  // probabilities no longer sum to 1
    s.bb84.nu = 0.5;        // nu above mu
    try {
        s.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("probabilities") != std::string::npos);
        CHECK(msg.find("mu > nu") != std::string::npos);
    }
}
