#pragma once

#include <string>
#include <vector>

namespace trilock {

namespace constants {
inline constexpr double k_boltzmann = 1.380649e-23; ///< J/K
inline constexpr double rb85_mass_kg = 1.409993e-25;
} // namespace constants

/// The three-step excitation ladder in the detection cell: wavelengths,
/// effective Lorentzian linewidths, term contrasts and vapor parameters.
/// gamma2/gamma3 and the contrasts are phenomenological calibration knobs.
struct LadderScheme {
    double lambda1 = 780e-9; ///< m, first step
    double lambda2 = 776e-9; ///< m, second step
    double lambda3 = 1260e-9; ///< m, third step
    double gamma1 = 6e6; ///< Hz FWHM, first-step velocity-selection width
    double gamma2 = 2e6; ///< Hz FWHM, two-step resonance
    double gamma3 = 3e6; ///< Hz FWHM, three-step resonance
    double c2 = 0.6;     ///< contrast of the two-step term, in (0,1]
    double c3 = 0.3;     ///< contrast of the three-step term, in (0,1]
    double temperature = 293.0;                  ///< K
    double atomic_mass = constants::rb85_mass_kg; ///< kg
    bool copropagating = true; ///< third beam direction relative to the first two
    double gain = 1.0;         ///< detector calibration gain, V

    /// 1-D thermal velocity spread sqrt(kT/m), m/s.
    double sigma_v() const;

    /// Default Rb ladder with the wavelength ordering check enforced.
    static LadderScheme rb85_default();
};

/// Throws invalid_spec_error on non-positive widths, contrasts outside (0,1]
/// or non-positive temperature/mass. Wavelength ordering is checked only by
/// rb85_default().
void validate(const LadderScheme& scheme);

enum class RydbergSeries { P3_2, F7_2 };

std::string to_string(RydbergSeries series);

/// Target Rydberg state. Quantum defects scale only the signal amplitude,
/// never line positions.
struct RydbergTarget {
    int n = 50;
    RydbergSeries series = RydbergSeries::F7_2;
    double quantum_defect = 0.016;
    double scaling_exponent = 3.0; ///< amplitude ~ (n - defect)^-exponent

    static constexpr double default_defect_p = 2.65;
    static constexpr double default_defect_f = 0.016;

    static RydbergTarget make(int n, RydbergSeries series);

    double effective_n() const { return static_cast<double>(n) - quantum_defect; }

    /// Non-fatal advisories, e.g. n outside the demonstrated locking range
    /// (36-70 for P3/2, 33-90 for F7/2).
    std::vector<std::string> warnings() const;
};

/// Throws invalid_spec_error when n - defect <= 0.
void validate(const RydbergTarget& target);

/// Normalized Lorentzian (gamma/2)^2 / (delta^2 + (gamma/2)^2); peak value 1.
/// Throws std::domain_error for gamma <= 0.
double lorentzian(double delta_hz, double gamma_fwhm_hz);

/// Relative locking-signal amplitude: s_series * ((n0 - d0)/(n - defect))^exp
/// with reference 50F7/2 normalized to 1 and the F series twice the P series
/// at equal effective quantum number.
double rydberg_amplitude(const RydbergTarget& target);

} // namespace trilock
