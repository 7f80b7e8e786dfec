#pragma once

#include <cmath>
#include <string>

#include "sspdsim/config.hpp"

namespace sspdsim::test {

inline std::string data_path(const std::string& rel) {
    return std::string(SSPDSIM_DATA_DIR) + "/" + rel;
}

inline DeviceProfile load_preset(const std::string& file, const std::string& id) {
    const Config cfg = load_config_file(data_path(file));
    return find_device(cfg, id);
}

inline DeviceProfile preset_a() { return load_preset("presets/device_a.toml", "A"); }
inline DeviceProfile preset_b() { return load_preset("presets/device_b.toml", "B"); }

// 4-sigma binomial band check for an observed count.
inline bool within_binomial(double observed, double n, double p, double n_sigma = 4.0) {
    const double sigma = std::sqrt(n * p * (1.0 - p));
    return std::abs(observed - n * p) <= n_sigma * std::max(sigma, 1e-12);
}

}  // namespace sspdsim::test
