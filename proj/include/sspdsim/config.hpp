#pragma once

#include <map>
#include <string>
#include <vector>

#include "sspdsim/analysis.hpp"
#include "sspdsim/detector.hpp"
#include "sspdsim/optics.hpp"
#include "sspdsim/sessions.hpp"

namespace sspdsim {

// Minimal TOML-style document model: top-level [tables] and [[arrays of
// tables]] holding scalar / array values. Line numbers are kept for error
// reporting; unknown keys are rejected by the schema layer.
struct TomlValue {
    enum class Kind { string, number, boolean, array };
    Kind kind = Kind::number;
    std::string str;
    double num = 0.0;
    bool boolean = false;
    std::vector<TomlValue> arr;
    int line = 0;
};

struct TomlTable {
    std::map<std::string, TomlValue> values;
    int line = 0;
};

struct TomlDoc {
    TomlTable root;
    std::map<std::string, TomlTable> tables;
    std::map<std::string, std::vector<TomlTable>> table_arrays;
};

TomlDoc parse_toml(const std::string& text);

// Fully resolved configuration: device presets, channels, comparison rows
// and sessions with cross-references resolved by id.
struct Config {
    std::vector<DeviceProfile> devices;
    std::vector<std::pair<std::string, ChannelSpec>> channels;
    std::vector<ComparisonRow> comparisons;
    std::vector<SessionConfig> sessions;
};

Config parse_config(const std::string& text);
Config load_config_file(const std::string& path);

const DeviceProfile& find_device(const Config& cfg, const std::string& id);
const ChannelSpec& find_channel(const Config& cfg, const std::string& id);
const SessionConfig& find_session(const Config& cfg, const std::string& id);

// Resolved-defaults snapshot (JSON text) echoed into run manifests.
std::string config_snapshot_json(const Config& cfg, int indent = 2);

}  // namespace sspdsim
