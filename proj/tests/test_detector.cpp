#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "sspdsim/analysis.hpp"
#include "sspdsim/detector.hpp"
#include "sspdsim/errors.hpp"

using namespace sspdsim;
using namespace sspdsim::test;

TEST_CASE("efficiency at bias: anchors, interpolation, clamping") {
    const DeviceProfile dev = preset_a();

    CHECK(efficiency_at_bias(dev, 0.9, 1550.0) == doctest::Approx(0.026));
    CHECK(efficiency_at_bias(dev, 0.9, 1310.0) == doctest::Approx(0.045));
    CHECK(efficiency_at_bias(dev, 0.0, 1550.0) == 0.0);

    // Midpoint of a log-linear segment is the geometric mean of its anchors.
    const double mid = efficiency_at_bias(dev, 0.875, 1550.0);
    CHECK(mid == doctest::Approx(std::sqrt(0.015 * 0.026)).epsilon(1e-9));

    // Clamped above the top anchor; no saturation modeled.
    CHECK(efficiency_at_bias(dev, 1.0, 1550.0) == doctest::Approx(0.058));

    CHECK_THROWS_AS(efficiency_at_bias(dev, 0.9, 1064.0), CalibrationError);
    CHECK_THROWS_AS(efficiency_at_bias(dev, 1.2, 1550.0), DomainError);
    CHECK_THROWS_AS(efficiency_at_bias(dev, -0.1, 1550.0), DomainError);
}

TEST_CASE("efficiency is monotone non-decreasing over random grids") {
    const DeviceProfile a = preset_a();
    const DeviceProfile b = preset_b();
    Rng rng = Rng::at(13, RngStream::misc, 0);
    for (const auto& dev : {a, b}) {
        std::vector<double> grid;
        for (int i = 0; i < 400; ++i) grid.push_back(rng.uniform());
        std::sort(grid.begin(), grid.end());
        double prev = -1.0;
        for (double g : grid) {
            const double de = efficiency_at_bias(dev, g, 1550.0);
            CHECK(de >= prev);
            CHECK(de <= 1.0);
            prev = de;
        }
    }
}

TEST_CASE("dark rate model") {
    const DeviceProfile dev = preset_a();
    CHECK(dark_rate_at_bias(dev, 0.9) == doctest::Approx(100.0));
    CHECK(dark_rate_at_bias(dev, 0.95) == doctest::Approx(1000.0).epsilon(1e-9));
    CHECK(dark_rate_at_bias(dev, 0.8) == doctest::Approx(1.0).epsilon(1e-9));

    double prev = 0.0;
    for (double b = 0.0; b <= 1.0; b += 0.01) {
        const double r = dark_rate_at_bias(dev, b);
        CHECK(r > prev);
        prev = r;
    }
}

TEST_CASE("bias recovery") {
    const DeviceProfile a = preset_a();
    const DeviceProfile b = preset_b();
    CHECK(a.reset_tau_ns() == doctest::Approx(26.0));
    CHECK(b.reset_tau_ns() == doctest::Approx(6.0));

    CHECK(recovered_bias(a, 0.9, 0.0) == 0.0);
    CHECK(recovered_bias(a, 0.9, std::nullopt) == 0.9);
    CHECK(recovered_bias(b, 0.9, 6.0) == doctest::Approx(0.9 * (1.0 - std::exp(-1.0))));
    CHECK(recovered_bias(a, 0.9, 5.0 * 26.0) >= 0.99 * 0.9);
    CHECK_THROWS_AS(recovered_bias(a, 0.9, -1.0), DomainError);

    double prev = -1.0;
    for (double dt = 0.0; dt < 200.0; dt += 1.0) {
        const double r = recovered_bias(a, 0.9, dt);
        CHECK(r > prev);
        CHECK(r <= 0.9);
        prev = r;
    }
}

TEST_CASE("max count rate") {
    DeviceProfile a = preset_a();
    DeviceProfile b = preset_b();
    CHECK(max_count_rate_hz(b) == doctest::Approx(66.67e6).epsilon(0.001));
    CHECK(max_count_rate_hz(a) == doctest::Approx(15.38e6).epsilon(0.001));
    const double base = max_count_rate_hz(a);
    a.l_k_uh *= 2.0;
    CHECK(max_count_rate_hz(a) == doctest::Approx(base / 2.0));
}

TEST_CASE("detect: no-photon branch and Monte Carlo click fraction") {
    const DeviceProfile dev = preset_a();
    DetectorState state;
    state.bias_ratio_set = 0.9;
    Rng rng = Rng::at(21, RngStream::detection, 0);

    PhotonArrival empty;
    empty.time_ns = 0.0;
    empty.n_photons = 0;
    CHECK(!detect(dev, state, empty, rng));

    const double eta = efficiency_at_bias(dev, 0.9, 1550.0);
    for (std::uint32_t n_photons : {1u, 2u, 5u}) {
        DetectorState st;
        st.bias_ratio_set = 0.9;
        const int trials = 1000000;
        int clicks = 0;
        double t = 0.0;
        Rng r = Rng::at(22, RngStream::detection, n_photons);
        for (int i = 0; i < trials; ++i) {
            PhotonArrival ar;
            ar.time_ns = t;
            ar.n_photons = n_photons;
            t += 1e6;  // far beyond 5 tau, fully recovered
            if (detect(dev, st, ar, r)) ++clicks;
        }
        const double p = 1.0 - std::pow(1.0 - eta, n_photons);
        CHECK(within_binomial(clicks, trials, p));
    }
}

TEST_CASE("detect: recovery composes with the DE curve") {
    const DeviceProfile dev = preset_a();
    // 1 ns after a fire only ~3.8% of the bias is back.
    const double frac = 1.0 - std::exp(-1.0 / 26.0);
    CHECK(frac == doctest::Approx(0.0377).epsilon(0.01));
    const double bias = 0.9 * frac;
    const double de = efficiency_at_bias(dev, bias, 1550.0);

    // Hand evaluation: extrapolation below the lowest anchor with the first
    // segment's slope, ln DE = ln(0.004) + slope * (b - 0.75).
    const double slope = std::log(0.008 / 0.004) / 0.05;
    CHECK(de == doctest::Approx(std::exp(std::log(0.004) + slope * (bias - 0.75))));
    CHECK(de < 1e-5);  // orders of magnitude below the steady-state 2.6%

    // Statistically: a photon right after a click almost never fires.
    DetectorState st;
    st.bias_ratio_set = 0.9;
    st.last_fire_time_ns = 0.0;
    Rng rng = Rng::at(23, RngStream::detection, 0);
    int clicks = 0;
    PhotonArrival ar;
    ar.n_photons = 1;
    ar.time_ns = 1.0;
    for (int i = 0; i < 10000; ++i) {
        DetectorState s2 = st;
        s2.last_arrival_time_ns.reset();
        if (detect(dev, s2, ar, rng)) ++clicks;
    }
    CHECK(clicks == 0);
}

TEST_CASE("detect: rate independence far above 5 tau, suppression at tau") {
    const DeviceProfile dev = preset_b();  // tau = 6 ns
    const double eta = efficiency_at_bias(dev, 0.9, 1550.0);
    auto measure = [&](double spacing_ns, int trials, std::uint64_t salt) {
        DetectorState st;
        st.bias_ratio_set = 0.9;
        Rng rng = Rng::at(31, RngStream::detection, salt);
        int clicks = 0;
        for (int i = 0; i < trials; ++i) {
            PhotonArrival ar;
            ar.time_ns = spacing_ns * i;
            ar.n_photons = 1;
            if (detect(dev, st, ar, rng)) ++clicks;
        }
        return static_cast<double>(clicks) / trials;
    };
    const int n = 400000;
    const double de_slow = measure(1000.0, n, 1);   // >> 5 tau
    const double de_fast = measure(6.0, n, 2);      // = tau
    CHECK(within_binomial(de_slow * n, n, eta));
    // At tau spacing the post-click blind window eats a statistically
    // significant share of the clicks.
    const double sigma = std::sqrt(eta * (1.0 - eta) / n);
    CHECK(de_fast < de_slow - 4.0 * sigma);
}

TEST_CASE("detect: jitter FWHM of the click-time distribution") {
    const DeviceProfile dev = preset_b();
    DetectorState st;
    st.bias_ratio_set = 0.9;
    Rng rng = Rng::at(37, RngStream::detection, 0);
    std::vector<double> diffs;
    double t = 0.0;
    while (diffs.size() < 100000) {
        PhotonArrival ar;
        ar.time_ns = t;
        ar.n_photons = 40;  // boost the click probability; jitter is per click
        t += 1000.0;
        if (auto ev = detect(dev, st, ar, rng)) diffs.push_back(ev->time_ns - ar.time_ns);
    }
    // 4 ps bins over +/-600 ps.
    std::vector<std::uint64_t> counts(300, 0);
    for (double d : diffs) {
        const double ps = d * 1e3 + 600.0;
        if (ps >= 0.0 && ps < 1200.0) ++counts[static_cast<std::size_t>(ps / 4.0)];
    }
    Histogram hist;
    hist.bin_width_ps = 4.0;
    hist.origin_ps = -600.0;
    hist.counts = counts;
    const double w = fwhm(hist);
    CHECK(w > 95.0);
    CHECK(w < 105.0);
}

TEST_CASE("detect: latching and arrival ordering") {
    DeviceProfile dev = preset_a();
    dev.latching_enabled = true;
    DetectorState st;
    st.bias_ratio_set = 0.9;
    Rng rng = Rng::at(41, RngStream::detection, 0);
    // Force a click quickly with many photons.
    PhotonArrival ar;
    ar.n_photons = 2000;
    ar.time_ns = 0.0;
    int first_click_at = -1;
    for (int i = 0; i < 1000 && first_click_at < 0; ++i) {
        ar.time_ns = 1e5 * i;
        if (detect(dev, st, ar, rng)) first_click_at = i;
    }
    REQUIRE(first_click_at >= 0);
    CHECK(st.latched);
    ar.time_ns += 1e9;
    CHECK(!detect(dev, st, ar, rng));  // latched device stays silent

    st.reset();
    ar.time_ns = 100.0;
    (void)detect(dev, st, ar, rng);
    PhotonArrival earlier;
    earlier.time_ns = 50.0;
    earlier.n_photons = 1;
    CHECK_THROWS_AS(detect(dev, st, earlier, rng), SequenceError);
}

TEST_CASE("dark events") {
    const DeviceProfile dev = preset_a();
    Rng rng = Rng::at(43, RngStream::dark, 0);
    CHECK(dark_events(dev, 0.9, 5.0, 5.0, rng).empty());
    CHECK_THROWS_AS(dark_events(dev, 0.9, 5.0, 4.0, rng), DomainError);

    // 100 c/s over 10 s -> Poisson(1000) per window.
    double total = 0.0;
    const int reps = 100;
    for (int i = 0; i < reps; ++i) {
        Rng r = Rng::at(44, RngStream::dark, i);
        const auto evs = dark_events(dev, 0.9, 0.0, 1e10, r);
        total += static_cast<double>(evs.size());
        for (std::size_t k = 1; k < evs.size(); ++k)
            CHECK(evs[k].time_ns >= evs[k - 1].time_ns);
        for (const auto& ev : evs) CHECK(ev.cause == ClickCause::dark);
    }
    const double mean = total / reps;
    CHECK(std::abs(mean - 1000.0) <= 4.0 * std::sqrt(1000.0 / reps));

    // P(>=1 event in 1 ms at 100 c/s) = 1 - exp(-0.1).
    int hit = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        Rng r = Rng::at(45, RngStream::dark, i);
        if (!dark_events(dev, 0.9, 0.0, 1e6, r).empty()) ++hit;
    }
    CHECK(within_binomial(hit, n, 1.0 - std::exp(-0.1)));
}

TEST_CASE("critical current density") {
    CHECK(critical_current_density_a_m2(19.0, 100.0, 3.9) == doctest::Approx(4.872e10).epsilon(1e-3));
    CHECK(critical_current_density_a_m2(15.0, 100.0, 3.9) == doctest::Approx(3.846e10).epsilon(1e-3));
    CHECK(critical_current_density_a_m2(38.0, 100.0, 3.9) ==
          doctest::Approx(2.0 * critical_current_density_a_m2(19.0, 100.0, 3.9)));
    CHECK_THROWS_AS(critical_current_density_a_m2(0.0, 100.0, 3.9), DomainError);
}

TEST_CASE("device profile validation catches broken invariants") {
    DeviceProfile dev = preset_a();
    dev.fill_factor = 0.6;
    CHECK_THROWS_AS(dev.validate(), ConfigError);

    dev = preset_a();
    dev.de_anchors[1].bias_ratio = dev.de_anchors[0].bias_ratio;  // not strictly increasing
    CHECK_THROWS_AS(dev.validate(), ConfigError);

    dev = preset_a();
    dev.l_k_uh = 0.0;
    CHECK_THROWS_AS(dev.validate(), ConfigError);
}
