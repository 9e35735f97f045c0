#pragma once

#include <functional>
#include <vector>

#include "trilock/detector.hpp"
#include "trilock/ladder.hpp"

namespace trilock {

/// Sinusoidal frequency dither applied to a laser channel. `depth` is the
/// peak-to-peak frequency deviation: the instantaneous excursion is
/// (depth/2) * sin(2 pi f_mod t + phase).
struct DitherSpec {
    double depth = 15e6;    ///< Hz, peak-to-peak
    double f_mod = 90e3;    ///< Hz
    double phase = 0.0;     ///< rad
    double tau_lp = 100e-6; ///< s, demodulator low-pass time constant

    double excursion() const { return 0.5 * depth; }
};

/// Throws invalid_spec_error unless depth >= 0, f_mod > 0, tau_lp > 0.
void validate(const DitherSpec& dither);

/// True when f_mod * tau_lp < 1: the demodulated output will carry visible
/// ripple at the modulation frequency.
bool demod_ripple_warning(const DitherSpec& dither);

/// Demodulated error signal sampled on a detuning grid.
struct ErrorCurve {
    std::vector<double> grid;   ///< detuning, Hz
    std::vector<double> values; ///< error, V
    double slope_at_zero = 0.0; ///< V/Hz, central difference at the zero crossing
    double zero_crossing = 0.0; ///< Hz
};

/// Dither-cycle average of a 1-D signal slice: the quasi-static first-harmonic
/// error value at detuning `center`,
///   e = (2/N) sum_j S(center + (depth/2) sin th_j) sin th_j
/// over N midpoint phases. Exactly zero for depth == 0. N >= 64 by default.
double dither_average(const std::function<double(double)>& signal, double center,
                      const DitherSpec& dither, int n_phases = 64);

/// Static error curve along one detuning axis; the other two axes held at
/// (fixed_a, fixed_b) in ascending axis order. Uses the quadrature detector
/// path. Grid must be sorted; throws no_lock_point_error when the curve has
/// no sign change on the grid.
ErrorCurve static_error_curve(const LadderScheme& scheme, const RydbergTarget& target,
                              const DitherSpec& dither, int axis,
                              const std::vector<double>& grid, double fixed_a,
                              double fixed_b, int n_phases = 64);

/// Single-pole low-pass state for the demodulator. Pass the state back in to
/// continue a stream across calls.
struct LockinState {
    double y = 0.0;
    std::uint64_t sample_index = 0;
};

/// Lock-in demodulation of a detector time series sampled at dt:
/// output = low-pass( 2 * detector(t) * sin(2 pi f_mod t + phase) ) with time
/// constant tau_lp. Requires dt <= 1/(20 f_mod) (waveform fidelity);
/// throws sampling_error otherwise.
std::vector<double> demodulate(const std::vector<double>& detector_v, double dt,
                               const DitherSpec& dither, LockinState* state = nullptr);

/// Gain g with g * slope_at_zero == target_slope. Default target is the
/// 10 mV/MHz locking gradient (1e-8 V/Hz). Throws calibration_error on a
/// zero or non-finite slope.
double calibrate_slope(const ErrorCurve& curve, double target_slope_v_per_hz = 1e-8);

/// Writes `detuning_hz,error_v` CSV.
void write_error_curve_csv(const std::string& path, const ErrorCurve& curve);

/// Uniform symmetric grid [-range, +range] with n points (odd n recommended).
std::vector<double> symmetric_grid(double range_hz, std::size_t n);

} // namespace trilock
