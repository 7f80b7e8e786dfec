#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sspdsim/detector.hpp"

namespace sspdsim {

struct Histogram {
    double bin_width_ps = 4.0;
    double origin_ps = 0.0;
    std::vector<std::uint64_t> counts;

    std::uint64_t total() const;
};

// One row of the detector comparison table.
struct ComparisonRow {
    std::string name;
    double de_percent = 0.0;
    double dark_cps = 0.0;
    double jitter_ps = 0.0;
    double after_pulse = 0.0;
    double count_rate_hz = 0.0;
    double performance_index = 0.0;  // recomputed, units 1 (DE% / (c/s * ps))
    std::string operation_mode;
    double printed_index_1e6 = 0.0;  // published value, 0 when not available
    std::string note;
};

// Figure of merit DE(%) / (dark rate in c/s * jitter in ps).
double performance_index(double de_percent, double dark_cps, double jitter_ps);

// Computes each row's index; rows whose recomputed value disagrees with the
// published one by more than 2% get a discrepancy footnote.
std::vector<ComparisonRow> comparison_table(std::vector<ComparisonRow> rows);

void write_comparison_csv(std::span<const ComparisonRow> rows, std::ostream& os);

// Folds event times modulo the sync period and bins them.
Histogram tcspc_histogram(std::span<const DetectionEvent> events, double sync_rate_hz,
                          double bin_width_ps);

// Linear-interpolated full width at half of the peak count. A single-bin
// spike yields one bin width.
double fwhm(const Histogram& hist);

struct BiasSweepRow {
    double bias_ratio = 0.0;
    double de = 0.0;
    double dark_cps = 0.0;
};

std::vector<BiasSweepRow> bias_sweep(const DeviceProfile& profile,
                                     std::span<const double> bias_grid, double wavelength_nm);

void write_bias_sweep_csv(std::span<const BiasSweepRow> rows, std::ostream& os);

// Summary statistics over a device set: system DE at the dark-anchor bias
// and J_c from the dc geometry.
struct DeviceSetStats {
    std::size_t devices = 0;
    double de_mean = 0.0, de_min = 0.0, de_max = 0.0, de_cv = 0.0;
    double jc_mean = 0.0, jc_min = 0.0, jc_max = 0.0, jc_cv = 0.0;
    double de_floor = 0.01;
    bool all_above_de_floor = false;
};

DeviceSetStats device_set_stats(std::span<const DeviceProfile> profiles, double wavelength_nm,
                                double de_floor = 0.01);

// Small gnuplot script that plots a two-column CSV produced above.
void write_gnuplot_script(const std::string& csv_path, const std::string& title,
                          const std::string& ylabel, bool logscale_y, std::ostream& os);

}  // namespace sspdsim
