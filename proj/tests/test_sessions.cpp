#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "sspdsim/config.hpp"
#include "sspdsim/errors.hpp"
#include "sspdsim/sessions.hpp"

using namespace sspdsim;
using namespace sspdsim::test;

namespace {

// A statistics-friendly link in the recovery-free regime: device #B
// (tau = 6 ns) clocked at 10 MHz, so slot spacing is ~17 tau and the
// dead-time-free analytic gain model applies.
SessionConfig benign_bb84(std::uint64_t slots, double dark_cps = 1e4, double e_det = 0.03) {
    SessionConfig sc;
    sc.id = "bench-bb84";
    sc.protocol = Protocol::bb84;
    sc.bb84.device = preset_b();
    sc.bb84.device.dark_anchor.rate_cps = dark_cps;
    sc.bb84.channel = ChannelSpec{10.0, 0.2, 0.0, 0.0};
    sc.bb84.clock_rate_hz = 1e7;
    sc.bb84.slots = slots;
    sc.bb84.misalignment = e_det;
    return sc;
}

SessionConfig small_bbm92(std::uint64_t windows) {
    SessionConfig sc;
    sc.id = "bench-bbm92";
    sc.protocol = Protocol::bbm92;
    sc.bbm92.device_a = preset_a();
    sc.bbm92.device_b = preset_a();
    sc.bbm92.arm_a = ChannelSpec{5.0, 0.2, 0.0, 0.0};
    sc.bbm92.arm_b = ChannelSpec{5.0, 0.2, 0.0, 0.0};
    sc.bbm92.windows = windows;
    sc.bbm92.mean_pairs = 0.2;
    sc.bbm92.visibility_error = 0.03;
    sc.bbm92.clock_rate_hz = 1e6;
    sc.bbm92.gate_fraction = 0.01;
    return sc;
}

std::string log_csv(const EventLog& log) {
    std::ostringstream os;
    write_events_csv(log, os);
    return os.str();
}

}  // namespace

TEST_CASE("determinism: same config and seed give byte-identical logs and reports") {
    const SessionConfig sc = benign_bb84(200000);
    const EventLog log1 = run_session(sc, 99, true);
    const EventLog log2 = run_session(sc, 99, true);
    CHECK(log_csv(log1) == log_csv(log2));
    CHECK(!log1.events.empty());
    log1.require_sorted();

    const std::string rep1 = report_to_json(bb84_session(sc, 99));
    const std::string rep2 = report_to_json(bb84_session(sc, 99));
    CHECK(rep1 == rep2);

    // A different seed produces a different log.
    const EventLog other = run_session(sc, 100, true);
    CHECK(log_csv(other) != log_csv(log1));
}

TEST_CASE("parallel kernels reproduce the serial reference bytes") {
    const SessionConfig bb = benign_bb84(400000);
    EventLog ser_log, par_log;
    const Bb84Tally t_ser = run_bb84_kernel(bb.bb84, 7, &ser_log, false);
    const Bb84Tally t_par = run_bb84_kernel(bb.bb84, 7, &par_log, true);
    CHECK(std::memcmp(&t_ser, &t_par, sizeof(t_ser)) == 0);
    CHECK(log_csv(ser_log) == log_csv(par_log));

    const SessionConfig bm = small_bbm92(300000);
    EventLog mser, mpar;
    const Bbm92Tally m_ser = run_bbm92_kernel(bm.bbm92, 7, &mser, false);
    const Bbm92Tally m_par = run_bbm92_kernel(bm.bbm92, 7, &mpar, true);
    CHECK(std::memcmp(&m_ser, &m_par, sizeof(m_ser)) == 0);
    CHECK(log_csv(mser) == log_csv(mpar));
}

TEST_CASE("zero-length session gives an empty log") {
    const SessionConfig sc = benign_bb84(0);
    const EventLog log = run_session(sc, 1, true);
    CHECK(log.events.empty());
    CHECK(log.emissions.empty());
    CHECK(log.total_slots == 0);
}

TEST_CASE("invalid session configs list the offending fields") {
    SessionConfig sc = benign_bb84(100);
    sc.bb84.gate_fraction = 0.0;
    sc.bb84.f_ec = 0.5;
    try {
        run_session(sc, 1, true);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("gate_fraction") != std::string::npos);
        CHECK(msg.find("f_ec") != std::string::npos);
    }
}

TEST_CASE("conservation: every click in the log traces back to its slot") {
    const SessionConfig sc = benign_bb84(300000);
    EventLog log;
    const Bb84Tally t = run_bb84_kernel(sc.bb84, 31, &log, true);

    CHECK(log.events.size() == t.photon_clicks + t.dark_clicks);
    CHECK(t.out_of_gate == 0);  // 18.8-sigma gate at these settings

    std::set<std::int64_t> emission_slots;
    for (const auto& em : log.emissions) emission_slots.insert(em.slot);
    for (const auto& ev : log.events) {
        CHECK(ev.slot >= 0);
        if (ev.cause == ClickCause::photon)
            CHECK(emission_slots.count(ev.slot) == 1);
    }

    // Emission metadata is kept for clicked slots only (sparse).
    CHECK(log.emissions.size() <= log.events.size());
}

TEST_CASE("transmitter intensity frequencies match the configured probabilities") {
    const SessionConfig sc = benign_bb84(1000000);
    const Bb84Tally t = run_bb84_kernel(sc.bb84, 17, nullptr, true);
    const double n = static_cast<double>(sc.bb84.slots);
    CHECK(within_binomial(static_cast<double>(t.intensity[0].sent), n, 0.5));
    CHECK(within_binomial(static_cast<double>(t.intensity[1].sent), n, 0.25));
    CHECK(within_binomial(static_cast<double>(t.intensity[2].sent), n, 0.25));
}

TEST_CASE("Monte Carlo gains converge to the analytic model per intensity") {
    SessionConfig sc = benign_bb84(1000000);
    const SessionReport rep = bb84_session(sc, 12345);
    const Bb84LinkModel link = bb84_link_model(sc.bb84);
    const double lambdas[3] = {sc.bb84.mu, sc.bb84.nu, 0.0};

    for (int i = 0; i < 3; ++i) {
        const auto& it = rep.bb84_tally.intensity[i];
        const GainError ge = analytic_gain(lambdas[i], link.eta_total, link.y0, link.e_det);
        CHECK(within_binomial(static_cast<double>(it.clicked), static_cast<double>(it.sent),
                              ge.gain));
        const double err_sigma =
            std::sqrt(static_cast<double>(it.sifted) * ge.error_rate * (1.0 - ge.error_rate));
        CHECK(std::abs(static_cast<double>(it.errors) -
                       static_cast<double>(it.sifted) * ge.error_rate) <=
              4.0 * err_sigma + 1.0);
    }

    // Total clicks against gain x slots (mixed intensities).
    double expected = 0.0;
    for (int i = 0; i < 3; ++i)
        expected += static_cast<double>(rep.bb84_tally.intensity[i].sent) *
                    analytic_gain(lambdas[i], link.eta_total, link.y0, link.e_det).gain;
    std::uint64_t clicked = 0;
    for (int i = 0; i < 3; ++i) clicked += rep.bb84_tally.intensity[i].clicked;
    CHECK(std::abs(static_cast<double>(clicked) - expected) <= 4.0 * std::sqrt(expected));
}

TEST_CASE("noiseless BB84 has exactly zero QBER") {
    SessionConfig sc = benign_bb84(300000, 1e-300, 0.0);
    const SessionReport rep = bb84_session(sc, 5);
    CHECK(rep.bb84_tally.dark_clicks == 0);
    std::uint64_t errors = 0, sifted = 0;
    for (const auto& it : rep.bb84_tally.intensity) {
        errors += it.errors;
        sifted += it.sifted;
    }
    CHECK(sifted > 0);
    CHECK(errors == 0);
    CHECK(rep.bb84_mc->qber == 0.0);
}

TEST_CASE("report invariants and scaling ledger") {
    const SessionConfig sc = benign_bb84(1000000);
    const SessionReport rep = bb84_session(sc, 2);
    for (const auto* est : {&*rep.bb84_mc, &*rep.bb84_analytic}) {
        CHECK(est->secure.per_slot <= est->sifted.per_slot);
        CHECK(est->sifted.per_slot <= 1.0);
        CHECK(est->qber >= 0.0);
        CHECK(est->qber <= 1.0);
        CHECK(est->decoy.y1_lower <= 1.0);
    }
    CHECK(rep.scaling.simulated_slots == sc.bb84.slots);
    CHECK(rep.scaling.equivalent_seconds ==
          doctest::Approx(static_cast<double>(sc.bb84.slots) / sc.bb84.clock_rate_hz));
    CHECK(!rep.calibration.empty());

    const std::string json = report_to_json(rep);
    CHECK(json.find("\"monte_carlo\"") != std::string::npos);
    CHECK(json.find("\"analytic\"") != std::string::npos);
    CHECK(json.find("\"calibration\"") != std::string::npos);
}

TEST_CASE("BBM92: clean single pairs anticorrelate perfectly") {
    SessionConfig sc;
    sc.id = "clean-pairs";
    sc.protocol = Protocol::bbm92;
    sc.bbm92.device_a = preset_a();
    sc.bbm92.device_a.de_anchors = {{0.9, 1550.0, 1.0}};  // unit DE for statistics
    sc.bbm92.device_a.dark_anchor.rate_cps = 1e-300;
    sc.bbm92.device_b = sc.bbm92.device_a;
    sc.bbm92.arm_a = ChannelSpec{0.0, 0.2, 0.0, 0.0};
    sc.bbm92.arm_b = sc.bbm92.arm_a;
    sc.bbm92.windows = 200000;
    sc.bbm92.mean_pairs = 1e-4;  // multi-pair windows are ~1e-8 of windows
    sc.bbm92.visibility_error = 0.0;
    const Bbm92Tally t = run_bbm92_kernel(sc.bbm92, 3, nullptr, true);
    CHECK(t.sifted >= 5);
    CHECK(t.errors == 0);
    CHECK(t.dark_clicks == 0);
}

TEST_CASE("BBM92: dark-only coincidences are uncorrelated (QBER -> 1/2)") {
    SessionConfig sc = small_bbm92(20000);
    sc.bbm92.mean_pairs = 0.0;
    sc.bbm92.gate_fraction = 1.0;
    // p_dark ~ 0.1 per detector per 1 us window.
    const double rate = -std::log(0.9) / 1e-6;
    sc.bbm92.device_a.dark_anchor.rate_cps = rate;
    sc.bbm92.device_b.dark_anchor.rate_cps = rate;
    const Bbm92Tally t = run_bbm92_kernel(sc.bbm92, 19, nullptr, true);
    CHECK(t.photon_clicks == 0);
    CHECK(t.sifted > 200);
    const double qber = static_cast<double>(t.errors) / static_cast<double>(t.sifted);
    CHECK(std::abs(qber - 0.5) <= 4.0 * std::sqrt(0.25 / static_cast<double>(t.sifted)));
    CHECK(t.sifted_accidental == t.sifted);
}

TEST_CASE("BBM92 error budget: equal arm-loss scaling") {
    SessionConfig sc = small_bbm92(1);
    sc.bbm92.device_a.dark_anchor.rate_cps = 2e4;
    sc.bbm92.device_b.dark_anchor.rate_cps = 2e4;
    sc.bbm92.gate_fraction = 0.05;

    const Bbm92Estimates base = bbm92_analytic_model(sc.bbm92);
    SessionConfig scaled = sc;
    scaled.bbm92.arm_a.excess_loss_db = 3.0;
    scaled.bbm92.arm_b.excess_loss_db = 3.0;
    const Bbm92Estimates lossy = bbm92_analytic_model(scaled.bbm92);

    // Multi-pair component relative to the true-pair component is loss-free.
    const double r0 = base.frac_cross_pair / base.frac_same_pair;
    const double r1 = lossy.frac_cross_pair / lossy.frac_same_pair;
    CHECK(r1 == doctest::Approx(r0).epsilon(0.02));

    // Accidental-to-true ratio follows the accidental-coincidence formula:
    // acc ~ 2 S_A D_B + 2 S_B D_A + D_A D_B with S = m*eta, D = 2*p_dark,
    // so relative to same-pair (m*eta^2) it grows as the loss increases.
    const double eta_factor = std::pow(10.0, -0.3);  // 3 dB per arm
    const double m = sc.bbm92.mean_pairs;
    const double eta0 = fiber_transmittance(sc.bbm92.arm_a) *
                        efficiency_at_bias(sc.bbm92.device_a, 0.9, 1550.0);
    const double gate_s = sc.bbm92.gate_fraction / sc.bbm92.clock_rate_hz;
    const double pd = 1.0 - std::exp(-2e4 * gate_s);
    auto acc_over_same = [&](double eta) {
        const double s_single = m * eta, d_side = 1.0 - (1.0 - pd) * (1.0 - pd);
        return (2.0 * s_single * d_side + d_side * d_side) / (m * eta * eta);
    };
    const double a0 = base.frac_accidental / base.frac_same_pair;
    const double a1 = lossy.frac_accidental / lossy.frac_same_pair;
    CHECK(a1 / a0 ==
          doctest::Approx(acc_over_same(eta0 * eta_factor) / acc_over_same(eta0)).epsilon(0.05));

    // Monte Carlo budget agrees with the analytic decomposition at the base
    // point, coarsely (fractions of sifted coincidences).
    SessionConfig mc = sc;
    mc.bbm92.windows = 4000000;
    const SessionReport rep = bbm92_session(mc, 23);
    CHECK(rep.bbm92_mc->frac_same_pair ==
          doctest::Approx(rep.bbm92_analytic->frac_same_pair).epsilon(0.15));
    CHECK(rep.bbm92_mc->qber == doctest::Approx(rep.bbm92_analytic->qber).epsilon(0.25));
}

TEST_CASE("run_session dispatches both protocols with sorted logs") {
    const SessionConfig bb = benign_bb84(50000);
    const EventLog bl = run_session(bb, 4, false);
    bl.require_sorted();
    CHECK(bl.clock_rate_hz == doctest::Approx(1e7));

    const SessionConfig bm = small_bbm92(50000);
    const EventLog ml = run_session(bm, 4, false);
    ml.require_sorted();
    for (const auto& ev : ml.events) {
        CHECK(ev.channel >= 0);
        CHECK(ev.channel <= 3);
    }
}
