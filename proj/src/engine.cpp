#include "sspdsim/engine.hpp"

#include <cmath>
#include <map>
#include <ostream>

#include "json.hpp"
#include "sspdsim/errors.hpp"

namespace sspdsim {

TimeBin assign_time_bin(double time_ns, double clock_rate_hz, double gate_fraction) {
    if (!(clock_rate_hz > 0.0)) throw DomainError("assign_time_bin: clock rate must be > 0");
    if (!(gate_fraction > 0.0 && gate_fraction <= 1.0))
        throw DomainError("assign_time_bin: gate_fraction must lie in (0,1]");
    const double period_ns = 1e9 / clock_rate_hz;
    TimeBin bin;
    bin.slot_index = static_cast<std::int64_t>(std::llround(time_ns / period_ns));
    const double offset = std::abs(time_ns - static_cast<double>(bin.slot_index) * period_ns);
    bin.within_gate = offset <= gate_fraction * period_ns / 2.0;
    return bin;
}

void EventLog::require_sorted() const {
    for (std::size_t i = 1; i < events.size(); ++i)
        if (events[i].time_ns < events[i - 1].time_ns)
            throw SequenceError("event log is not sorted by time");
}

std::vector<std::pair<std::size_t, std::size_t>> coincidences(const EventLog& a,
                                                              const EventLog& b,
                                                              double window_ns) {
    if (window_ns < 0.0) throw DomainError("coincidences: window must be >= 0");
    a.require_sorted();
    b.require_sorted();
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::size_t i = 0, j = 0;
    // Two-pointer sweep: always resolves the earliest compatible pair, and
    // an event that can no longer match anything is dropped.
    while (i < a.events.size() && j < b.events.size()) {
        const double ta = a.events[i].time_ns;
        const double tb = b.events[j].time_ns;
        if (std::abs(ta - tb) <= window_ns) {
            pairs.emplace_back(i, j);
            ++i;
            ++j;
        } else if (ta < tb) {
            ++i;
        } else {
            ++j;
        }
    }
    return pairs;
}

void write_events_csv(const EventLog& log, std::ostream& os) {
    os << "time_ns,channel,cause,slot\n";
    char buf[96];
    for (const auto& ev : log.events) {
        std::snprintf(buf, sizeof(buf), "%.6f,%d,%s,%lld\n", ev.time_ns, ev.channel,
                      ev.cause == ClickCause::photon ? "photon" : "dark",
                      static_cast<long long>(ev.slot));
        os << buf;
    }
}

std::string event_log_summary_json(const EventLog& log, int indent) {
    std::uint64_t photon = 0, dark = 0;
    std::map<int, std::uint64_t> per_channel;
    for (const auto& ev : log.events) {
        (ev.cause == ClickCause::photon ? photon : dark)++;
        ++per_channel[ev.channel];
    }
    nlohmann::ordered_json j;
    j["clock_rate_hz"] = log.clock_rate_hz;
    j["seed"] = log.seed;
    j["total_slots"] = log.total_slots;
    j["events"] = log.events.size();
    j["photon_clicks"] = photon;
    j["dark_clicks"] = dark;
    j["emission_records"] = log.emissions.size();
    nlohmann::ordered_json ch;
    for (const auto& [channel, count] : per_channel) ch[std::to_string(channel)] = count;
    j["per_channel"] = ch;
    if (!log.events.empty()) {
        j["first_time_ns"] = log.events.front().time_ns;
        j["last_time_ns"] = log.events.back().time_ns;
    }
    return j.dump(indent);
}

}  // namespace sspdsim
