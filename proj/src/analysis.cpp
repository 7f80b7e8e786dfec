#include "sspdsim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "sspdsim/errors.hpp"

namespace sspdsim {

std::uint64_t Histogram::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

double performance_index(double de_percent, double dark_cps, double jitter_ps) {
    if (!(dark_cps > 0.0) || !(jitter_ps > 0.0))
        throw DomainError("performance_index: dark rate and jitter must be > 0");
    if (de_percent < 0.0) throw DomainError("performance_index: DE must be >= 0");
    return de_percent / (dark_cps * jitter_ps);
}

std::vector<ComparisonRow> comparison_table(std::vector<ComparisonRow> rows) {
    for (auto& row : rows) {
        row.performance_index = performance_index(row.de_percent, row.dark_cps, row.jitter_ps);
        if (row.printed_index_1e6 > 0.0) {
            const double computed_1e6 = row.performance_index * 1e6;
            const double rel = std::abs(computed_1e6 - row.printed_index_1e6) / row.printed_index_1e6;
            if (rel > 0.02) {
                char buf[160];
                std::snprintf(buf, sizeof(buf),
                              "recomputed index %.3g disagrees with published %.3g (x1e-6); "
                              "keeping the recomputed value",
                              computed_1e6, row.printed_index_1e6);
                row.note = buf;
            }
        }
    }
    return rows;
}

void write_comparison_csv(std::span<const ComparisonRow> rows, std::ostream& os) {
    os << "detector,de_percent,dark_cps,after_pulse,count_rate_hz,jitter_ps,"
          "performance_index_1e6,operation_mode,note\n";
    char buf[512];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%g,%g,%g,%g,%g,%.4g,%s,%s\n", r.name.c_str(),
                      r.de_percent, r.dark_cps, r.after_pulse, r.count_rate_hz, r.jitter_ps,
                      r.performance_index * 1e6, r.operation_mode.c_str(), r.note.c_str());
        os << buf;
    }
}

Histogram tcspc_histogram(std::span<const DetectionEvent> events, double sync_rate_hz,
                          double bin_width_ps) {
    if (events.empty()) throw EmptyInputError("tcspc_histogram: no events");
    if (!(sync_rate_hz > 0.0)) throw DomainError("tcspc_histogram: sync rate must be > 0");
    if (!(bin_width_ps > 0.0)) throw DomainError("tcspc_histogram: bin width must be > 0");

    const double period_ps = 1e12 / sync_rate_hz;
    Histogram hist;
    hist.bin_width_ps = bin_width_ps;
    hist.origin_ps = 0.0;
    const auto nbins = static_cast<std::size_t>(std::ceil(period_ps / bin_width_ps));
    hist.counts.assign(nbins, 0);
    for (const auto& ev : events) {
        double phase = std::fmod(ev.time_ns * 1e3, period_ps);
        if (phase < 0.0) phase += period_ps;
        auto bin = static_cast<std::size_t>(phase / bin_width_ps);
        if (bin >= nbins) bin = nbins - 1;  // fmod landing exactly on the period
        ++hist.counts[bin];
    }
    return hist;
}

double fwhm(const Histogram& hist) {
    if (hist.counts.empty()) throw EmptyInputError("fwhm: empty histogram");
    const auto peak_it = std::max_element(hist.counts.begin(), hist.counts.end());
    const auto peak = *peak_it;
    if (peak == 0) throw DomainError("fwhm: histogram has no counts");

    // The maximal bins must form one contiguous run, and the histogram must
    // not be flat at the peak level everywhere.
    std::size_t first_peak = hist.counts.size(), last_peak = 0;
    std::size_t n_peak = 0;
    for (std::size_t i = 0; i < hist.counts.size(); ++i) {
        if (hist.counts[i] == peak) {
            first_peak = std::min(first_peak, i);
            last_peak = i;
            ++n_peak;
        }
    }
    if (n_peak == hist.counts.size()) throw DomainError("fwhm: histogram is flat");
    if (last_peak - first_peak + 1 != n_peak)
        throw DomainError("fwhm: histogram peak is not unique");

    const double half = static_cast<double>(peak) / 2.0;
    auto center = [&](std::size_t i) {
        return hist.origin_ps + (static_cast<double>(i) + 0.5) * hist.bin_width_ps;
    };

    // Walk outwards from the peak run to the half-maximum crossings.
    double left = center(first_peak) - 0.5 * hist.bin_width_ps;
    for (std::size_t i = first_peak; i-- > 0;) {
        if (static_cast<double>(hist.counts[i]) <= half) {
            const double c0 = static_cast<double>(hist.counts[i]);
            const double c1 = static_cast<double>(hist.counts[i + 1]);
            left = center(i) + (half - c0) / (c1 - c0) * hist.bin_width_ps;
            break;
        }
        if (i == 0) left = center(0) - 0.5 * hist.bin_width_ps;
    }
    double right = center(last_peak) + 0.5 * hist.bin_width_ps;
    for (std::size_t i = last_peak + 1; i < hist.counts.size(); ++i) {
        if (static_cast<double>(hist.counts[i]) <= half) {
            const double c0 = static_cast<double>(hist.counts[i - 1]);
            const double c1 = static_cast<double>(hist.counts[i]);
            right = center(i - 1) + (c0 - half) / (c0 - c1) * hist.bin_width_ps;
            break;
        }
        if (i + 1 == hist.counts.size()) right = center(i) + 0.5 * hist.bin_width_ps;
    }
    return right - left;
}

std::vector<BiasSweepRow> bias_sweep(const DeviceProfile& profile,
                                     std::span<const double> bias_grid, double wavelength_nm) {
    std::vector<BiasSweepRow> rows;
    rows.reserve(bias_grid.size());
    for (double b : bias_grid) {
        BiasSweepRow row;
        row.bias_ratio = b;
        row.de = efficiency_at_bias(profile, b, wavelength_nm);
        row.dark_cps = dark_rate_at_bias(profile, b);
        rows.push_back(row);
    }
    return rows;
}

void write_bias_sweep_csv(std::span<const BiasSweepRow> rows, std::ostream& os) {
    os << "bias_ratio,de,dark_cps\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.6g,%.8g,%.8g\n", r.bias_ratio, r.de, r.dark_cps);
        os << buf;
    }
}

DeviceSetStats device_set_stats(std::span<const DeviceProfile> profiles, double wavelength_nm,
                                double de_floor) {
    if (profiles.empty()) throw EmptyInputError("device_set_stats: no devices");
    DeviceSetStats st;
    st.devices = profiles.size();
    st.de_floor = de_floor;

    auto summarize = [](const std::vector<double>& v, double& mean, double& mn, double& mx,
                        double& cv) {
        mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        mn = *std::min_element(v.begin(), v.end());
        mx = *std::max_element(v.begin(), v.end());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double sd = std::sqrt(ss / static_cast<double>(v.size()));
        cv = mean != 0.0 ? sd / mean : 0.0;
    };

    std::vector<double> de, jc;
    de.reserve(profiles.size());
    jc.reserve(profiles.size());
    for (const auto& p : profiles) {
        de.push_back(efficiency_at_bias(p, p.dark_anchor.bias_ratio, wavelength_nm));
        jc.push_back(critical_current_density_a_m2(p.i_c_ua, p.wire_width_nm, p.thickness_nm));
    }
    summarize(de, st.de_mean, st.de_min, st.de_max, st.de_cv);
    summarize(jc, st.jc_mean, st.jc_min, st.jc_max, st.jc_cv);
    st.all_above_de_floor = st.de_min > de_floor;
    return st;
}

void write_gnuplot_script(const std::string& csv_path, const std::string& title,
                          const std::string& ylabel, bool logscale_y, std::ostream& os) {
    os << "set datafile separator ','\n";
    os << "set key autotitle columnhead\n";
    os << "set title '" << title << "'\n";
    os << "set ylabel '" << ylabel << "'\n";
    if (logscale_y) os << "set logscale y\n";
    os << "plot '" << csv_path << "' using 1:2 with linespoints\n";
}

}  // namespace sspdsim
