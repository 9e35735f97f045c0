#pragma once

#include <string>
#include <vector>

namespace trilock {

/// Uniformly sampled laser frequency-offset time series (Hz vs s).
/// Immutable by convention after creation; safe to share across threads
/// read-only.
struct FrequencyTrace {
    double dt = 0.0;              ///< sample interval, s
    std::vector<double> samples;  ///< frequency offset from nominal, Hz
    std::string origin;           ///< description of the generating process

    std::size_t size() const { return samples.size(); }
    double duration() const { return dt * static_cast<double>(samples.size()); }
};

/// Elementwise sum of traces sharing dt and length. Per-sample summation uses
/// a canonical (sorted) order, so the result is exactly invariant under
/// reordering the inputs. Throws shape_error on mismatch, invalid_spec_error
/// on an empty list.
FrequencyTrace compose(const std::vector<FrequencyTrace>& traces);

/// Returns a copy with samples[k] += rate * k * dt. Throws invalid_spec_error
/// for non-finite rate.
FrequencyTrace add_drift(const FrequencyTrace& trace, double rate_hz_per_s);

/// Writes `t_s,offset_hz` CSV with 17-significant-digit formatting.
void write_trace_csv(const std::string& path, const FrequencyTrace& trace);

/// Reads a trace CSV written by write_trace_csv. dt is recovered from the
/// first two timestamps.
FrequencyTrace read_trace_csv(const std::string& path);

} // namespace trilock
