#pragma once

#include <array>
#include <cstdint>

#include "trilock/rng.hpp"
#include "trilock/trace.hpp"

namespace trilock {

/// Free-running laser frequency-noise model: three standard power-law FM
/// classes plus a linear drift. Identical spec + seed reproduces the trace
/// bit for bit.
struct NoiseSpec {
    double h0 = 0.0;         ///< white-FM PSD level, Hz^2/Hz
    double h_flicker = 0.0;  ///< flicker-FM level, Hz^2
    double h_rw = 0.0;       ///< random-walk-FM level, Hz^2*Hz
    double drift_rate = 0.0; ///< linear drift, Hz/s
    std::uint64_t seed = 0;

    bool is_zero() const {
        return h0 == 0.0 && h_flicker == 0.0 && h_rw == 0.0 && drift_rate == 0.0;
    }
};

/// Throws invalid_spec_error unless all levels are finite and >= 0 and the
/// drift rate is finite.
void validate(const NoiseSpec& spec);

/// Incremental generator producing the same sample sequence as
/// synth_power_law_noise, one sample at a time. Lets the servo run for hours
/// of simulated time without materializing the full trace.
///
/// White FM: i.i.d. Gaussian, variance h0/(2 dt).
/// Random-walk FM: cumulative sum of white steps, step variance 2 pi^2 h_rw dt.
/// Flicker FM: white input of variance pi*h_flicker through a truncated
/// fractional-integration FIR of fixed order 15.
/// Each component draws from its own substream, so enabling one never
/// perturbs another.
class NoiseStream {
public:
    NoiseStream(const NoiseSpec& spec, double dt);

    double next();
    std::uint64_t index() const { return k_; }

    static constexpr int flicker_order = 15;

private:
    NoiseSpec spec_;
    double dt_;
    double white_sigma_;
    double rw_step_sigma_;
    double flicker_sigma_;
    GaussianStream white_;
    GaussianStream flicker_src_;
    GaussianStream rw_src_;
    double rw_state_ = 0.0;
    std::array<double, flicker_order> fir_coeff_{};
    std::array<double, flicker_order> fir_hist_{};
    int fir_pos_ = 0;
    std::uint64_t k_ = 0;
};

/// Generates an n-sample trace at interval dt from the spec. Deterministic in
/// (spec, dt, n). Throws invalid_spec_error on bad spec, n < 2 or dt <= 0.
FrequencyTrace synth_power_law_noise(const NoiseSpec& spec, double dt, std::size_t n);

} // namespace trilock
