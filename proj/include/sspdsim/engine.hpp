#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include "sspdsim/detector.hpp"
#include "sspdsim/optics.hpp"

namespace sspdsim {

struct TimeBin {
    std::int64_t slot_index = 0;
    bool within_gate = false;
};

// Nearest clocked slot plus a gate test: within_gate iff the offset from the
// slot center is at most gate_fraction * period / 2.
TimeBin assign_time_bin(double time_ns, double clock_rate_hz, double gate_fraction);

// Emission metadata kept for slots that produced at least one click, so every
// click in a log is traceable to its generating pulse (dark clicks trace to
// the dark process via cause).
struct EmissionRecord {
    std::int64_t slot = 0;
    std::optional<IntensityLabel> intensity;
    std::optional<Basis> basis;
    std::optional<int> bit;
    std::uint32_t n_emitted = 0;
    std::uint32_t n_arrived = 0;
};

struct EventLog {
    double clock_rate_hz = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t total_slots = 0;
    std::vector<DetectionEvent> events;      // sorted by time
    std::vector<EmissionRecord> emissions;   // sparse, sorted by slot

    void require_sorted() const;  // SequenceError if events are out of order
};

// Greedy earliest-first one-to-one matching of events with |t_a - t_b| <=
// window_ns. Returns index pairs into (a.events, b.events).
std::vector<std::pair<std::size_t, std::size_t>> coincidences(const EventLog& a,
                                                              const EventLog& b,
                                                              double window_ns);

// Columnar CSV: time_ns,channel,cause,slot.
void write_events_csv(const EventLog& log, std::ostream& os);

// Stable JSON summary of a log: totals, per-channel counts, time span.
std::string event_log_summary_json(const EventLog& log, int indent = 2);

}  // namespace sspdsim
