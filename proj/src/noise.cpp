#include "trilock/noise.hpp"

#include <cmath>

#include "trilock/errors.hpp"

namespace trilock {

namespace {
constexpr double pi = 3.14159265358979323846;
}

void validate(const NoiseSpec& spec) {
    const double levels[] = {spec.h0, spec.h_flicker, spec.h_rw};
    for (double v : levels) {
        if (!std::isfinite(v) || v < 0.0) {
            throw invalid_spec_error("NoiseSpec: levels must be finite and >= 0");
        }
    }
    if (!std::isfinite(spec.drift_rate)) {
        throw invalid_spec_error("NoiseSpec: drift rate must be finite");
    }
}

NoiseStream::NoiseStream(const NoiseSpec& spec, double dt)
    : spec_(spec),
      dt_(dt),
      white_(substream_seed(spec.seed, seed_tag::white_fm)),
      flicker_src_(substream_seed(spec.seed, seed_tag::flicker_fm)),
      rw_src_(substream_seed(spec.seed, seed_tag::random_walk_fm)) {
    validate(spec);
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw invalid_spec_error("NoiseStream: dt must be positive");
    }
    white_sigma_ = std::sqrt(spec.h0 / (2.0 * dt));
    rw_step_sigma_ = std::sqrt(2.0 * pi * pi * spec.h_rw * dt);
    flicker_sigma_ = std::sqrt(pi * spec.h_flicker);
    // taps of the truncated (1 - z^-1)^(-1/2) fractional integrator
    fir_coeff_[0] = 1.0;
    for (int k = 1; k < flicker_order; ++k) {
        fir_coeff_[k] = fir_coeff_[k - 1] * (static_cast<double>(k) - 0.5) / static_cast<double>(k);
    }
    fir_hist_.fill(0.0);
}

double NoiseStream::next() {
    double v = 0.0;
    if (spec_.h0 > 0.0) {
        v += white_sigma_ * white_.next();
    }
    if (spec_.h_rw > 0.0) {
        rw_state_ += rw_step_sigma_ * rw_src_.next();
        v += rw_state_;
    }
    if (spec_.h_flicker > 0.0) {
        fir_hist_[static_cast<std::size_t>(fir_pos_)] = flicker_src_.next();
        double acc = 0.0;
        for (int k = 0; k < flicker_order; ++k) {
            const int idx = (fir_pos_ - k + flicker_order) % flicker_order;
            acc += fir_coeff_[static_cast<std::size_t>(k)] * fir_hist_[static_cast<std::size_t>(idx)];
        }
        fir_pos_ = (fir_pos_ + 1) % flicker_order;
        v += flicker_sigma_ * acc;
    }
    if (spec_.drift_rate != 0.0) {
        v += spec_.drift_rate * static_cast<double>(k_) * dt_;
    }
    ++k_;
    return v;
}

FrequencyTrace synth_power_law_noise(const NoiseSpec& spec, double dt, std::size_t n) {
    if (n < 2) {
        throw invalid_spec_error("synth_power_law_noise: need n >= 2");
    }
    NoiseStream stream(spec, dt); // validates spec and dt
    FrequencyTrace out;
    out.dt = dt;
    out.origin = "power-law noise, seed " + std::to_string(spec.seed);
    out.samples.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        out.samples[k] = stream.next();
    }
    return out;
}

} // namespace trilock
