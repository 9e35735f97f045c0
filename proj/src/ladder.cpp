#include "trilock/ladder.hpp"

#include <cmath>
#include <stdexcept>

#include "trilock/errors.hpp"

namespace trilock {

double LadderScheme::sigma_v() const {
    return std::sqrt(constants::k_boltzmann * temperature / atomic_mass);
}

LadderScheme LadderScheme::rb85_default() {
    LadderScheme s;
    validate(s);
    // Rb ladder ordering: 776 nm < 780 nm < 1260 nm
    if (!(s.lambda2 < s.lambda1 && s.lambda1 < s.lambda3)) {
        throw invalid_spec_error("rb85_default: expected the 780/776/1260 nm ladder ordering");
    }
    return s;
}

void validate(const LadderScheme& scheme) {
    const double widths[] = {scheme.gamma1, scheme.gamma2, scheme.gamma3};
    for (double g : widths) {
        if (!(g > 0.0) || !std::isfinite(g)) {
            throw invalid_spec_error("LadderScheme: linewidths must be positive");
        }
    }
    const double lambdas[] = {scheme.lambda1, scheme.lambda2, scheme.lambda3};
    for (double l : lambdas) {
        if (!(l > 0.0) || !std::isfinite(l)) {
            throw invalid_spec_error("LadderScheme: wavelengths must be positive");
        }
    }
    if (!(scheme.c2 > 0.0 && scheme.c2 <= 1.0) || !(scheme.c3 > 0.0 && scheme.c3 <= 1.0)) {
        throw invalid_spec_error("LadderScheme: contrasts must lie in (0,1]");
    }
    if (!(scheme.temperature > 0.0) || !(scheme.atomic_mass > 0.0)) {
        throw invalid_spec_error("LadderScheme: temperature and mass must be positive");
    }
    // negative gain represents inverted detector polarity after slope
    // calibration; zero would erase the signal entirely
    if (scheme.gain == 0.0 || !std::isfinite(scheme.gain)) {
        throw invalid_spec_error("LadderScheme: gain must be nonzero and finite");
    }
}

std::string to_string(RydbergSeries series) {
    return series == RydbergSeries::P3_2 ? "P3/2" : "F7/2";
}

RydbergTarget RydbergTarget::make(int n, RydbergSeries series) {
    RydbergTarget t;
    t.n = n;
    t.series = series;
    t.quantum_defect =
        series == RydbergSeries::P3_2 ? default_defect_p : default_defect_f;
    validate(t);
    return t;
}

std::vector<std::string> RydbergTarget::warnings() const {
    std::vector<std::string> w;
    const int lo = series == RydbergSeries::P3_2 ? 36 : 33;
    const int hi = series == RydbergSeries::P3_2 ? 70 : 90;
    if (n < lo || n > hi) {
        w.push_back(std::to_string(n) + to_string(series) +
                    " is beyond demonstrated locking range [" + std::to_string(lo) + ", " +
                    std::to_string(hi) + "]");
    }
    return w;
}

void validate(const RydbergTarget& target) {
    if (!(target.effective_n() > 0.0)) {
        throw invalid_spec_error("RydbergTarget: n - quantum_defect must be positive");
    }
    if (!std::isfinite(target.scaling_exponent)) {
        throw invalid_spec_error("RydbergTarget: non-finite scaling exponent");
    }
}

double lorentzian(double delta_hz, double gamma_fwhm_hz) {
    if (!(gamma_fwhm_hz > 0.0)) {
        throw std::domain_error("lorentzian: gamma must be positive");
    }
    const double h = 0.5 * gamma_fwhm_hz;
    return h * h / (delta_hz * delta_hz + h * h);
}

double rydberg_amplitude(const RydbergTarget& target) {
    validate(target);
    // reference point: 50F7/2 has amplitude 1; F series is 2x P at equal
    // effective quantum number
    const double n_ref = 50.0 - RydbergTarget::default_defect_f;
    const double s_series = target.series == RydbergSeries::F7_2 ? 1.0 : 0.5;
    return s_series * std::pow(n_ref / target.effective_n(), target.scaling_exponent);
}

} // namespace trilock
