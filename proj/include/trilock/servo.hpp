#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "trilock/ladder.hpp"
#include "trilock/lockin.hpp"
#include "trilock/noise.hpp"
#include "trilock/trace.hpp"

namespace trilock {

/// PID controller gains. The integrator accumulates ki*kp*e*dt and is clamped
/// to +-integrator_limit (anti-windup).
struct PidGains {
    double kp = 0.0;              ///< V/V
    double ki = 0.0;              ///< 1/s
    double kd = 0.0;              ///< s
    double integrator_limit = 10.0; ///< V
};

void validate(const PidGains& gains);

struct PidState {
    double integrator = 0.0;
    double prev_error = 0.0;
};

/// One controller step: command = kp*e + I + kd*(e - e_prev)/dt with
/// I <- clamp(I + ki*kp*e*dt, +-integrator_limit).
double pid_update(PidState& state, double error_v, const PidGains& gains, double dt);

enum class ActuatorKind { piezo, current };

/// First-order frequency actuator: single-pole response at `bandwidth`,
/// correction clamped to +-range.
struct Actuator {
    ActuatorKind kind = ActuatorKind::piezo;
    double gain_hz_per_v = 5e7;
    double bandwidth_hz = 1e3;
    double range_hz = 5e8;
};

void validate(const Actuator& actuator);

struct ActuatorState {
    double filtered_hz = 0.0;
};

/// Low-passes gain*command and clamps to the actuator range. Returns the
/// applied correction; *saturated reports whether the clamp engaged.
double actuator_response(ActuatorState& state, double command_v, const Actuator& actuator,
                         double dt, bool* saturated = nullptr);

/// Per-laser loop configuration. Channel 3 carries a piezo only; channels 1
/// and 2 carry piezo + current (enforced by validate_chain).
struct ChannelServoConfig {
    NoiseSpec noise;
    std::vector<Actuator> actuators;
    std::vector<PidGains> gains; ///< parallel to actuators
    DitherSpec dither;           ///< ignored on channel 1 (dither-free lock)
    double lock_offset_hz = 0.0; ///< discriminator setpoint offset (detuning the lock)
    double engage_time_s = 0.0;
    double static_disturbance_hz = 0.0; ///< constant added to the free-running offset
    double slope_target_v_per_hz = 1e-8; ///< discriminator calibration (10 mV/MHz)
};

enum class FidelityMode { envelope, waveform };

/// How the envelope mode evaluates the coupled discriminators: direct
/// dither-cycle averages each step, or precomputed cubic-interpolated tables
/// (automatic picks tables for long runs).
enum class EnvelopeEval { automatic, direct, table };

struct ServoChainConfig {
    std::array<ChannelServoConfig, 3> channels;
    FidelityMode mode = FidelityMode::envelope;
    double dt = 0.0;       ///< 0 selects the mode default (100 us / 0.5 us)
    double duration = 10.0; ///< s
    EnvelopeEval envelope_eval = EnvelopeEval::automatic;
    double output_dt = 0.0; ///< decimated trace interval; 0 selects automatically
    double measure_window_s = 0.0; ///< settled-mean window at the end; 0 = duration/2
    double ch1_halfwidth_hz = 3e6; ///< first-step dispersive discriminator halfwidth
    double table_range_hz = 12e6;  ///< coupled-table coverage per axis
    double table_step_hz = 0.25e6;
    int dither_phases = 64;

    /// Gains tuned once for > 60 degree phase margin on the piezo loop model;
    /// channel 2 deliberately weaker than channel 1.
    static ServoChainConfig defaults();

    double effective_dt() const {
        return dt > 0.0 ? dt : (mode == FidelityMode::envelope ? 1e-4 : 5e-7);
    }
};

/// Throws invalid_spec_error / config problems before any simulation starts.
void validate_chain(const ServoChainConfig& config);

struct ChannelRunStats {
    bool engaged = false;
    bool lock_acquired = false;
    bool lock_lost = false;
    double lock_lost_t_s = -1.0;
    double rms_error_v = 0.0;
    double rms_offset_hz = 0.0;  ///< after engagement
    double mean_offset_hz = 0.0; ///< over the measurement window
    double capture_halfwidth_hz = 0.0;
    double calibration_gain = 1.0;
    std::vector<double> saturation_fraction; ///< per actuator
};

struct RunSummary {
    std::array<ChannelRunStats, 3> ch;
    FidelityMode mode = FidelityMode::envelope;
    std::string discriminator_eval; ///< "direct", "table" or "demod"
    double dt = 0.0;
    double duration = 0.0;
    double output_dt = 0.0;
    std::uint64_t table_fallbacks = 0; ///< steps evaluated outside table coverage
    std::vector<std::string> warnings;
};

struct ChainRunResult {
    std::array<FrequencyTrace, 3> traces; ///< decimated closed-loop offsets
    RunSummary summary;
};

/// Runs the full three-laser chain: seeded free-running noise, sequential
/// lock engagement, cross-coupled discriminators (channel 2 sees the
/// reference-cell two-step signal at (f1, f2); channel 3 the detection-cell
/// signal at (f1, f2, f3)), PID + actuator feedback. Lock loss (operating
/// point outside the monotonic capture range for > 100 ms) is flagged with a
/// timestamp and the channel continues open loop.
ChainRunResult run_locked_chain(const ServoChainConfig& config, const LadderScheme& scheme,
                                const RydbergTarget& target);

/// Key-value text dump of a run summary.
void write_run_summary(const std::string& path, const RunSummary& summary);

} // namespace trilock
