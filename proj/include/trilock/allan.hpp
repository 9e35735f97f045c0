#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace trilock {

/// Overlapping Allan deviation curve in absolute frequency units (Hz).
struct AllanCurve {
    std::vector<double> taus;        ///< s, strictly increasing multiples of the gate
    std::vector<double> sigmas;      ///< Hz
    std::vector<std::size_t> n_pairs;
    std::vector<std::string> warnings; ///< taus omitted for lack of data

    std::size_t size() const { return taus.size(); }
    /// sigma at tau == m*gate; throws if that tau was not computed.
    double sigma_at(double tau) const;
};

/// Overlapping Allan deviation of gated frequency readings:
///   sigma^2(m*gate) = 1/(2(N-2m+1)) * sum_{i=0}^{N-2m} (ybar_{i+m} - ybar_i)^2
/// with ybar_i the mean of readings i..i+m-1. taus that the series cannot
/// support (N < 2m+1... i.e. no pair) are omitted with a warning, never
/// reported as zero.
AllanCurve overlapping_adev(const std::vector<double>& readings, double gate,
                            const std::vector<std::size_t>& tau_multiples);

/// Octave-spaced tau multiples 1,2,4,... with m*gate <= max_tau.
std::vector<std::size_t> octave_tau_multiples(std::size_t n_readings, double gate,
                                              double max_tau);

/// Least-squares slope of effect vs cause with a 95% confidence interval.
struct TransferEstimate {
    double slope = 0.0;
    double ci_halfwidth = 0.0; ///< 95% CI is slope +/- ci_halfwidth
    double intercept = 0.0;
    std::size_t n = 0;
};

/// Requires >= 3 distinct cause levels; throws estimation_error on degenerate
/// cause variance or mismatched lengths.
TransferEstimate transfer_factor(const std::vector<double>& cause,
                                 const std::vector<double>& effect);

/// Pearson correlation coefficient of mean-removed series; lengths must be
/// equal and >= 10. Throws estimation_error on zero variance.
double cross_correlation(const std::vector<double>& a, const std::vector<double>& b);

/// Writes `tau_s,sigma_hz,n_pairs` CSV.
void write_allan_csv(const std::string& path, const AllanCurve& curve);

} // namespace trilock
