#pragma once

#include <vector>

#include "trilock/ladder.hpp"

namespace trilock {

/// Velocity-integrated photodetector signal of the detection cell:
///
///   S(d1,d2,d3) = G * Int W(v) L1(d1 - v/l1) *
///                 [ C2 L2(d2 - v/l2) + C3 A L2(d2 - v/l2) L3(d3 -+ v/l3) ] dv
///
/// with W the 1-D Maxwell-Boltzmann density and A the target's relative
/// amplitude. Adaptive quadrature with interior split points at the
/// resonance velocities; relative error < 1e-6 (default 1e-9 requested).
/// Throws numeric_error with diagnostics if the quadrature fails to converge.
double detector_signal(double d1_hz, double d2_hz, double d3_hz, const LadderScheme& scheme,
                       const RydbergTarget& target, double epsrel = 1e-9);

/// Same integral evaluated in closed form via partial fractions over the
/// Lorentzian poles and the Faddeeva function. Orders of magnitude faster;
/// matches detector_signal to better than 1e-6 relative (enforced by tests).
/// Falls back to quadrature when poles nearly coincide.
double detector_signal_fast(double d1_hz, double d2_hz, double d3_hz,
                            const LadderScheme& scheme, const RydbergTarget& target);

/// Two-step-only variants for the reference cell (no third beam): the C3 term
/// is dropped entirely.
double two_step_signal(double d1_hz, double d2_hz, const LadderScheme& scheme,
                       double epsrel = 1e-9);
double two_step_signal_fast(double d1_hz, double d2_hz, const LadderScheme& scheme);

/// Precomputed closed-form evaluator for tight loops (servo steps, table
/// builds). Same values as the _fast free functions with the target
/// amplitude and validation hoisted out of the call.
class SignalEvaluator {
public:
    SignalEvaluator(const LadderScheme& scheme, const RydbergTarget& target);
    /// detection cell: full three-step signal
    double three_step(double d1_hz, double d2_hz, double d3_hz) const;
    /// reference cell: two-step signal, no third beam
    double two_step(double d1_hz, double d2_hz) const;

private:
    LadderScheme scheme_;
    RydbergTarget target_;
    double c3a_;
    double sigma_;
};

struct LineshapePoint {
    double detuning_hz;
    double signal_v;
};

/// Uniform scan of detector_signal along one detuning axis over
/// [-range, +range], the other two detunings held at (fixed_a, fixed_b) in
/// ascending axis order. Requires range > 0 and n_points >= 51.
std::vector<LineshapePoint> scan_lineshape(const LadderScheme& scheme,
                                           const RydbergTarget& target, int axis,
                                           double range_hz, double fixed_a, double fixed_b,
                                           std::size_t n_points = 201);

/// Writes `detuning_hz,signal_v` CSV.
void write_lineshape_csv(const std::string& path, const std::vector<LineshapePoint>& curve);

} // namespace trilock
