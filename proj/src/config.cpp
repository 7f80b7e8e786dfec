#include "sspdsim/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sspdsim/errors.hpp"

namespace sspdsim {

namespace {

[[noreturn]] void parse_fail(int line, const std::string& msg) {
    throw ConfigError("config parse error at line " + std::to_string(line) + ": " + msg);
}

class Scanner {
public:
    explicit Scanner(const std::string& text) : text_(text) {}

    int line() const { return line_; }
    bool eof() {
        skip_ws(false);
        return pos_ >= text_.size();
    }

    // Whitespace and comments; newlines are skipped only when asked.
    void skip_ws(bool skip_newlines) {
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (c == '#') {
                while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
            } else if (c == '\n') {
                if (!skip_newlines) return;
                ++line_;
                ++pos_;
            } else if (c == ' ' || c == '\t' || c == '\r') {
                ++pos_;
            } else {
                return;
            }
        }
    }

    char peek() { return pos_ < text_.size() ? text_[pos_] : '\0'; }
    char get() {
        const char c = text_[pos_++];
        if (c == '\n') ++line_;
        return c;
    }
    bool consume(char c) {
        if (peek() == c) {
            get();
            return true;
        }
        return false;
    }

    std::string bare_token() {
        std::string out;
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
                c == '.' || c == '+') {
                out.push_back(c);
                ++pos_;
            } else {
                break;
            }
        }
        return out;
    }

    std::string quoted_string() {
        get();  // opening quote
        std::string out;
        while (pos_ < text_.size()) {
            char c = get();
            if (c == '"') return out;
            if (c == '\\') {
                if (pos_ >= text_.size()) break;
                const char e = get();
                if (e == '"' || e == '\\')
                    out.push_back(e);
                else if (e == 'n')
                    out.push_back('\n');
                else if (e == 't')
                    out.push_back('\t');
                else
                    parse_fail(line_, std::string("unsupported escape '\\") + e + "'");
            } else if (c == '\n') {
                parse_fail(line_ - 1, "unterminated string");
            } else {
                out.push_back(c);
            }
        }
        parse_fail(line_, "unterminated string");
    }

private:
    const std::string& text_;
    std::size_t pos_ = 0;
    int line_ = 1;
};

TomlValue parse_value(Scanner& sc);

TomlValue parse_array(Scanner& sc) {
    TomlValue v;
    v.kind = TomlValue::Kind::array;
    v.line = sc.line();
    sc.get();  // '['
    while (true) {
        sc.skip_ws(true);
        if (sc.peek() == ']') {
            sc.get();
            return v;
        }
        v.arr.push_back(parse_value(sc));
        sc.skip_ws(true);
        if (sc.consume(',')) continue;
        if (sc.consume(']')) return v;
        parse_fail(sc.line(), "expected ',' or ']' in array");
    }
}

TomlValue parse_value(Scanner& sc) {
    sc.skip_ws(true);
    TomlValue v;
    v.line = sc.line();
    const char c = sc.peek();
    if (c == '[') return parse_array(sc);
    if (c == '"') {
        v.kind = TomlValue::Kind::string;
        v.str = sc.quoted_string();
        return v;
    }
    const std::string tok = sc.bare_token();
    if (tok.empty()) parse_fail(sc.line(), "expected a value");
    if (tok == "true" || tok == "false") {
        v.kind = TomlValue::Kind::boolean;
        v.boolean = tok == "true";
        return v;
    }
    char* end = nullptr;
    const double num = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size())
        parse_fail(v.line, "'" + tok + "' is not a number, bool or string");
    v.kind = TomlValue::Kind::number;
    v.num = num;
    return v;
}

}  // namespace

TomlDoc parse_toml(const std::string& text) {
    TomlDoc doc;
    Scanner sc(text);
    TomlTable* current = &doc.root;
    while (!sc.eof()) {
        sc.skip_ws(true);
        if (sc.peek() == '\0') break;
        if (sc.peek() == '[') {
            const int line = sc.line();
            sc.get();
            const bool is_array = sc.consume('[');
            sc.skip_ws(false);
            const std::string name = sc.bare_token();
            if (name.empty()) parse_fail(line, "empty table name");
            sc.skip_ws(false);
            if (!sc.consume(']')) parse_fail(line, "expected ']' after table name");
            if (is_array && !sc.consume(']')) parse_fail(line, "expected ']]' after table name");
            if (is_array) {
                doc.table_arrays[name].push_back(TomlTable{{}, line});
                current = &doc.table_arrays[name].back();
            } else {
                if (doc.tables.count(name)) parse_fail(line, "duplicate table [" + name + "]");
                doc.tables[name] = TomlTable{{}, line};
                current = &doc.tables[name];
            }
            continue;
        }
        const int line = sc.line();
        const std::string key = sc.bare_token();
        if (key.empty()) parse_fail(line, "expected a key");
        sc.skip_ws(false);
        if (!sc.consume('=')) parse_fail(line, "expected '=' after key '" + key + "'");
        TomlValue v = parse_value(sc);
        v.line = line;
        if (current->values.count(key)) parse_fail(line, "duplicate key '" + key + "'");
        current->values[key] = std::move(v);
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Schema layer.

namespace {

// Reads one table with strict key accounting.
class Reader {
public:
    Reader(const TomlTable& table, std::string context)
        : table_(table), context_(std::move(context)) {}

    double num(const std::string& key) {
        const TomlValue& v = get(key, TomlValue::Kind::number);
        return v.num;
    }
    double num_or(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        return num(key);
    }
    std::string str(const std::string& key) {
        return get(key, TomlValue::Kind::string).str;
    }
    std::string str_or(const std::string& key, const std::string& fallback) {
        if (!has(key)) return fallback;
        return str(key);
    }
    bool flag_or(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        return get(key, TomlValue::Kind::boolean).boolean;
    }
    std::vector<double> num_array(const std::string& key, std::size_t expected = 0) {
        const TomlValue& v = get(key, TomlValue::Kind::array);
        std::vector<double> out;
        for (const auto& e : v.arr) {
            if (e.kind != TomlValue::Kind::number)
                parse_fail(e.line, context_ + ": '" + key + "' must hold numbers");
            out.push_back(e.num);
        }
        if (expected != 0 && out.size() != expected)
            parse_fail(v.line, context_ + ": '" + key + "' must hold exactly " +
                                   std::to_string(expected) + " numbers");
        return out;
    }
    std::vector<std::vector<double>> num_matrix(const std::string& key, std::size_t row_len) {
        const TomlValue& v = get(key, TomlValue::Kind::array);
        std::vector<std::vector<double>> out;
        for (const auto& row : v.arr) {
            if (row.kind != TomlValue::Kind::array || row.arr.size() != row_len)
                parse_fail(row.line, context_ + ": '" + key + "' rows must be arrays of " +
                                         std::to_string(row_len));
            std::vector<double> r;
            for (const auto& e : row.arr) {
                if (e.kind != TomlValue::Kind::number)
                    parse_fail(e.line, context_ + ": '" + key + "' must hold numbers");
                r.push_back(e.num);
            }
            out.push_back(std::move(r));
        }
        return out;
    }
    bool has(const std::string& key) const { return table_.values.count(key) > 0; }

    // Call after reading everything: rejects keys the schema does not know.
    void finish() const {
        for (const auto& [key, value] : table_.values) {
            if (!consumed_.count(key))
                parse_fail(value.line, context_ + ": unknown key '" + key + "'");
        }
    }

private:
    const TomlValue& get(const std::string& key, TomlValue::Kind kind) {
        auto it = table_.values.find(key);
        if (it == table_.values.end())
            parse_fail(table_.line, context_ + ": missing required key '" + key + "'");
        consumed_.insert(key);
        static const char* kind_names[] = {"string", "number", "bool", "array"};
        if (it->second.kind != kind)
            parse_fail(it->second.line, context_ + ": key '" + key + "' must be a " +
                                            kind_names[static_cast<int>(kind)]);
        return it->second;
    }

    const TomlTable& table_;
    std::string context_;
    std::set<std::string> consumed_;
};

DeviceProfile read_device(const TomlTable& t) {
    Reader r(t, "[[device]]");
    DeviceProfile dev;
    dev.id = r.str("id");
    const auto area = r.num_array("area_um", 2);
    dev.area_um = {area[0], area[1]};
    dev.wire_width_nm = r.num("wire_width_nm");
    dev.pitch_nm = r.num("pitch_nm");
    dev.thickness_nm = r.num("thickness_nm");
    dev.fill_factor = r.num("fill_factor");
    dev.t_c_k = r.num("t_c_k");
    dev.i_c_ua = r.num("i_c_ua");
    dev.r_20k_ohm = r.num("r_20k_ohm");
    dev.l_k_uh = r.num("l_k_uh");
    dev.load_ohm = r.num_or("load_ohm", 50.0);
    dev.jitter_fwhm_ps = r.num_or("jitter_fwhm_ps", 100.0);
    dev.latching_enabled = r.flag_or("latching_enabled", false);
    dev.polarization_coupling = r.num_or("polarization_coupling", 1.0);
    const auto dark = r.num_array("dark_anchor", 2);
    dev.dark_anchor.bias_ratio = dark[0];
    dev.dark_anchor.rate_cps = dark[1];
    dev.dark_anchor.slope_k = r.num_or("dark_slope_k", DarkAnchor{}.slope_k);
    for (const auto& row : r.num_matrix("de_anchors", 3))
        dev.de_anchors.push_back(DeAnchor{row[0], row[1], row[2]});
    dev.note = r.str_or("note", "");
    r.finish();
    dev.validate();
    return dev;
}

std::pair<std::string, ChannelSpec> read_channel(const TomlTable& t) {
    Reader r(t, "[[channel]]");
    ChannelSpec ch;
    const std::string id = r.str("id");
    ch.length_km = r.num("length_km");
    ch.loss_db_per_km = r.num("loss_db_per_km");
    ch.excess_loss_db = r.num_or("excess_loss_db", 0.0);
    ch.receiver_loss_db = r.num_or("receiver_loss_db", 0.0);
    r.finish();
    fiber_transmittance(ch);  // domain check
    return {id, ch};
}

ComparisonRow read_comparison(const TomlTable& t) {
    Reader r(t, "[[comparison]]");
    ComparisonRow row;
    row.name = r.str("name");
    row.de_percent = r.num("de_percent");
    row.dark_cps = r.num("dark_cps");
    row.jitter_ps = r.num("jitter_ps");
    row.after_pulse = r.num_or("after_pulse", 0.0);
    row.count_rate_hz = r.num_or("count_rate_hz", 0.0);
    row.operation_mode = r.str_or("operation_mode", "");
    row.printed_index_1e6 = r.num_or("printed_index_1e6", 0.0);
    r.finish();
    return row;
}

SessionConfig read_session(const TomlTable& t, const Config& cfg) {
    Reader r(t, "[[session]]");
    SessionConfig sc;
    sc.id = r.str("id");
    const std::string protocol = r.str("protocol");
    sc.default_seed = static_cast<std::uint64_t>(r.num_or("seed", 1));
    if (protocol == "bb84") {
        sc.protocol = Protocol::bb84;
        auto& s = sc.bb84;
        s.device = find_device(cfg, r.str("device"));
        s.channel = find_channel(cfg, r.str("channel"));
        s.slots = static_cast<std::uint64_t>(r.num("slots"));
        s.clock_rate_hz = r.num("clock_rate_hz");
        s.bias_ratio = r.num_or("bias_ratio", s.device.dark_anchor.bias_ratio);
        s.wavelength_nm = r.num_or("wavelength_nm", 1550.0);
        s.mu = r.num_or("mu", 0.4);
        s.nu = r.num_or("nu", 0.15);
        s.p_signal = r.num_or("p_signal", 0.5);
        s.p_decoy = r.num_or("p_decoy", 0.25);
        s.p_vacuum = r.num_or("p_vacuum", 0.25);
        s.gate_fraction = r.num_or("gate_fraction", 1.0);
        s.misalignment = r.num_or("misalignment", 0.0);
        s.f_ec = r.num_or("f_ec", 1.1);
        s.q_basis = r.num_or("q_basis", 0.5);
    } else if (protocol == "bbm92") {
        sc.protocol = Protocol::bbm92;
        auto& s = sc.bbm92;
        if (r.has("device")) {
            s.device_a = find_device(cfg, r.str("device"));
            s.device_b = s.device_a;
        } else {
            s.device_a = find_device(cfg, r.str("device_a"));
            s.device_b = find_device(cfg, r.str("device_b"));
        }
        s.arm_a = find_channel(cfg, r.str("channel_a"));
        s.arm_b = find_channel(cfg, r.str("channel_b"));
        s.windows = static_cast<std::uint64_t>(r.num("windows"));
        s.clock_rate_hz = r.num("clock_rate_hz");
        s.bias_ratio = r.num_or("bias_ratio", s.device_a.dark_anchor.bias_ratio);
        s.wavelength_nm = r.num_or("wavelength_nm", 1550.0);
        s.mean_pairs = r.num("mean_pairs");
        s.visibility_error = r.num_or("visibility_error", 0.0);
        s.gate_fraction = r.num_or("gate_fraction", 0.002);
        s.f_ec = r.num_or("f_ec", 1.1);
        s.q_basis = r.num_or("q_basis", 0.5);
    } else {
        parse_fail(t.line, "[[session]]: unknown protocol '" + protocol + "'");
    }
    r.finish();
    sc.validate();
    return sc;
}

}  // namespace

Config parse_config(const std::string& text) {
    const TomlDoc doc = parse_toml(text);
    for (const auto& [key, value] : doc.root.values)
        parse_fail(value.line, "top-level key '" + key + "' outside any section");
    for (const auto& [name, table] : doc.tables)
        parse_fail(table.line, "unknown section [" + name + "]");

    static const std::set<std::string> known = {"device", "channel", "comparison", "session"};
    for (const auto& [name, tables] : doc.table_arrays)
        if (!known.count(name))
            parse_fail(tables.front().line, "unknown section [[" + name + "]]");

    Config cfg;
    if (auto it = doc.table_arrays.find("device"); it != doc.table_arrays.end())
        for (const auto& t : it->second) cfg.devices.push_back(read_device(t));
    if (auto it = doc.table_arrays.find("channel"); it != doc.table_arrays.end())
        for (const auto& t : it->second) cfg.channels.push_back(read_channel(t));
    if (auto it = doc.table_arrays.find("comparison"); it != doc.table_arrays.end())
        for (const auto& t : it->second) cfg.comparisons.push_back(read_comparison(t));
    if (auto it = doc.table_arrays.find("session"); it != doc.table_arrays.end())
        for (const auto& t : it->second) cfg.sessions.push_back(read_session(t, cfg));

    if (cfg.devices.empty() && cfg.channels.empty() && cfg.comparisons.empty() &&
        cfg.sessions.empty())
        throw ConfigError(
            "config defines none of the required sections: "
            "[[device]], [[channel]], [[comparison]], [[session]]");
    return cfg;
}

Config load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

const DeviceProfile& find_device(const Config& cfg, const std::string& id) {
    for (const auto& d : cfg.devices)
        if (d.id == id) return d;
    throw ConfigError("no device preset with id '" + id + "'");
}

const ChannelSpec& find_channel(const Config& cfg, const std::string& id) {
    for (const auto& [cid, ch] : cfg.channels)
        if (cid == id) return ch;
    throw ConfigError("no channel with id '" + id + "'");
}

const SessionConfig& find_session(const Config& cfg, const std::string& id) {
    for (const auto& s : cfg.sessions)
        if (s.id == id) return s;
    throw ConfigError("no session with id '" + id + "'");
}

std::string config_snapshot_json(const Config& cfg, int indent) {
    using ordered_json = nlohmann::ordered_json;
    ordered_json j;
    ordered_json devices = ordered_json::array();
    for (const auto& d : cfg.devices) {
        ordered_json anchors = ordered_json::array();
        for (const auto& a : d.de_anchors)
            anchors.push_back({a.bias_ratio, a.wavelength_nm, a.de});
        devices.push_back(ordered_json{{"id", d.id},
                                       {"area_um", {d.area_um[0], d.area_um[1]}},
                                       {"wire_width_nm", d.wire_width_nm},
                                       {"pitch_nm", d.pitch_nm},
                                       {"thickness_nm", d.thickness_nm},
                                       {"fill_factor", d.fill_factor},
                                       {"t_c_k", d.t_c_k},
                                       {"i_c_ua", d.i_c_ua},
                                       {"r_20k_ohm", d.r_20k_ohm},
                                       {"l_k_uh", d.l_k_uh},
                                       {"load_ohm", d.load_ohm},
                                       {"jitter_fwhm_ps", d.jitter_fwhm_ps},
                                       {"latching_enabled", d.latching_enabled},
                                       {"polarization_coupling", d.polarization_coupling},
                                       {"dark_anchor",
                                        {d.dark_anchor.bias_ratio, d.dark_anchor.rate_cps}},
                                       {"dark_slope_k", d.dark_anchor.slope_k},
                                       {"de_anchors", anchors},
                                       {"reset_tau_ns", d.reset_tau_ns()},
                                       {"note", d.note}});
    }
    j["devices"] = devices;
    ordered_json channels = ordered_json::array();
    for (const auto& [id, ch] : cfg.channels)
        channels.push_back(ordered_json{{"id", id},
                                        {"length_km", ch.length_km},
                                        {"loss_db_per_km", ch.loss_db_per_km},
                                        {"excess_loss_db", ch.excess_loss_db},
                                        {"receiver_loss_db", ch.receiver_loss_db},
                                        {"transmittance", fiber_transmittance(ch)}});
    j["channels"] = channels;
    ordered_json sessions = ordered_json::array();
    for (const auto& s : cfg.sessions) {
        ordered_json e{{"id", s.id},
                       {"protocol", s.protocol == Protocol::bb84 ? "bb84" : "bbm92"},
                       {"seed", s.default_seed}};
        if (s.protocol == Protocol::bb84) {
            e["device"] = s.bb84.device.id;
            e["slots"] = s.bb84.slots;
            e["clock_rate_hz"] = s.bb84.clock_rate_hz;
            e["bias_ratio"] = s.bb84.bias_ratio;
            e["mu"] = s.bb84.mu;
            e["nu"] = s.bb84.nu;
            e["p_signal"] = s.bb84.p_signal;
            e["p_decoy"] = s.bb84.p_decoy;
            e["p_vacuum"] = s.bb84.p_vacuum;
            e["gate_fraction"] = s.bb84.gate_fraction;
            e["misalignment"] = s.bb84.misalignment;
            e["f_ec"] = s.bb84.f_ec;
            e["q_basis"] = s.bb84.q_basis;
        } else {
            e["device_a"] = s.bbm92.device_a.id;
            e["device_b"] = s.bbm92.device_b.id;
            e["windows"] = s.bbm92.windows;
            e["clock_rate_hz"] = s.bbm92.clock_rate_hz;
            e["bias_ratio"] = s.bbm92.bias_ratio;
            e["mean_pairs"] = s.bbm92.mean_pairs;
            e["visibility_error"] = s.bbm92.visibility_error;
            e["gate_fraction"] = s.bbm92.gate_fraction;
            e["f_ec"] = s.bbm92.f_ec;
            e["q_basis"] = s.bbm92.q_basis;
        }
        sessions.push_back(e);
    }
    j["sessions"] = sessions;
    return j.dump(indent);
}

}  // namespace sspdsim
