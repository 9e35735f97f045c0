#pragma once

#include <stdexcept>
#include <string>

namespace trilock {

/// Invalid NoiseSpec / scheme / target parameters (negative levels, bad units).
class invalid_spec_error : public std::invalid_argument {
public:
    explicit invalid_spec_error(const std::string& what) : std::invalid_argument(what) {}
};

/// Traces combined with mismatched dt or length.
class shape_error : public std::invalid_argument {
public:
    explicit shape_error(const std::string& what) : std::invalid_argument(what) {}
};

/// Quadrature non-convergence or other numerical breakdown; carries diagnostics.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

/// Time series too coarse for the requested demodulation.
class sampling_error : public std::invalid_argument {
public:
    explicit sampling_error(const std::string& what) : std::invalid_argument(what) {}
};

/// Error curve has no sign change on the supplied grid.
class no_lock_point_error : public std::runtime_error {
public:
    explicit no_lock_point_error(const std::string& what) : std::runtime_error(what) {}
};

/// Slope calibration against a degenerate (zero-slope) curve.
class calibration_error : public std::runtime_error {
public:
    explicit calibration_error(const std::string& what) : std::runtime_error(what) {}
};

/// Counter gate incompatible with the trace sampling.
class counter_config_error : public std::invalid_argument {
public:
    explicit counter_config_error(const std::string& what) : std::invalid_argument(what) {}
};

/// Per-channel counter series that cannot be joined into one table.
class synchronization_error : public std::invalid_argument {
public:
    explicit synchronization_error(const std::string& what) : std::invalid_argument(what) {}
};

/// Degenerate regression / correlation inputs.
class estimation_error : public std::invalid_argument {
public:
    explicit estimation_error(const std::string& what) : std::invalid_argument(what) {}
};

/// Scenario file problems: unknown keys, bad values, missing sections.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// File read/write failures.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace trilock
