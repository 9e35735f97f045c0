#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "trilock/trace.hpp"

namespace trilock {

/// Synchronized gated counter readings for the three beat notes. Readings
/// share one timestamp column; lengths are equal by construction.
struct CounterSeries {
    double gate = 1.0; ///< s
    double t0 = 0.0;   ///< s, start of the first gate
    std::array<std::string, 3> labels{{"ch1", "ch2", "ch3"}};
    std::array<bool, 3> fm_flags{{false, true, true}};
    std::array<std::vector<double>, 3> readings; ///< Hz

    std::size_t size() const { return readings[0].size(); }
    double timestamp(std::size_t k) const { return t0 + static_cast<double>(k) * gate; }
};

/// Beat note against the nearest comb line: |nominal_offset + laser offset|.
/// The comb line itself is modeled as exact. nominal_offset must be >= 0.
FrequencyTrace beat_trace(const FrequencyTrace& laser, double nominal_offset_hz = 20e6);

/// Pi-type (gate-averaged) counter readings. gate must be an integer multiple
/// of beat.dt and the trace must span at least two gates. When
/// fm_error_bound > 0 each reading additionally picks up an independent
/// uniform error in [-bound, +bound], deterministic in the seed (modeling the
/// counting errors seen on frequency-modulated beat notes).
std::vector<double> gated_readings(const FrequencyTrace& beat, double gate,
                                   double fm_error_bound_hz, std::uint64_t seed);

/// Joins per-channel readings into one synchronized table. Throws
/// synchronization_error on length mismatch.
CounterSeries synchronize(const std::array<std::vector<double>, 3>& per_channel, double gate,
                          double t0, const std::array<bool, 3>& fm_flags);

/// Writes `t_s,ch1_hz,ch2_hz,ch3_hz` CSV.
void write_counter_csv(const std::string& path, const CounterSeries& series);

/// Reads a counter CSV written by write_counter_csv.
CounterSeries read_counter_csv(const std::string& path);

} // namespace trilock
