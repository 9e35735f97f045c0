#pragma once

#include <array>
#include <string>
#include <vector>

#include "trilock/allan.hpp"
#include "trilock/counter.hpp"
#include "trilock/ladder.hpp"
#include "trilock/servo.hpp"

namespace trilock {

enum class Provenance { paper, defaulted, user };

std::string to_string(Provenance p);

/// One effective configuration entry for the echoed config.
struct ConfigEntry {
    std::string key;
    std::string value;
    Provenance provenance = Provenance::defaulted;
    std::string description;
};

/// A fully resolved experiment description: scheme, target, servo chain,
/// counter and analysis settings. Built from a key-value config file with
/// unknown keys rejected and every default tagged with its provenance.
struct Scenario {
    std::string name = "scenario";
    LadderScheme scheme = LadderScheme::rb85_default();
    RydbergTarget target = RydbergTarget::make(50, RydbergSeries::F7_2);
    ServoChainConfig servo = ServoChainConfig::defaults();
    double gate_s = 1.0;
    double nominal_beat_hz = 20e6;
    std::array<double, 3> fm_error_hz{{0.0, 0.0, 0.0}};
    std::uint64_t seed = 1;
    double adev_max_tau_s = 0.0;  ///< 0: duration/10
    double analysis_skip_s = 0.0; ///< initial seconds dropped before counting
    std::vector<double> transfer_levels_hz{-2e6, -1e6, 0.0, 1e6, 2e6};
    int transfer_channel = 1;
    std::array<bool, 3> noise_seed_explicit{{false, false, false}};

    std::vector<ConfigEntry> echo; ///< effective config with provenance tags

    /// Derives per-channel noise seeds from the master seed (explicitly
    /// configured channel seeds are left alone) and refreshes the echo.
    void apply_master_seed(std::uint64_t master);
};

/// Parses and validates a scenario file. Throws config_error (unknown keys,
/// bad values) or io_error. No outputs are produced on failure.
Scenario load_scenario(const std::string& path);

/// Same parser on in-memory text (tests).
Scenario scenario_from_text(const std::string& text);

void write_config_echo(const std::string& path, const Scenario& scenario);

struct ScanOutputs {
    double zero_crossing_hz = 0.0;
    double calibrated_slope_v_per_hz = 0.0;
    double calibration_gain = 0.0;
    std::vector<std::string> warnings;
    std::vector<std::string> files;
};

/// Axis-3 lineshape + calibrated error curve + plot script + config echo.
ScanOutputs run_scan(const Scenario& scenario, const std::string& out_dir);

struct RunOutputs {
    RunSummary summary;
    std::array<AllanCurve, 3> adev;
    std::array<double, 3> sigma_at_1s{{0.0, 0.0, 0.0}};
    std::array<double, 3> max_sigma_tau_le_1000s{{0.0, 0.0, 0.0}};
    std::vector<std::string> files;
};

/// Full pipeline: noise -> locked chain -> beat counting -> Allan analysis.
RunOutputs run_scenario(const Scenario& scenario, const std::string& out_dir);

struct TransferOutputs {
    int cause_channel = 1;
    std::vector<double> levels_hz;
    std::vector<double> ch2_lock_points_hz; ///< empty for a channel-2 sweep
    std::vector<double> ch3_lock_points_hz;
    std::vector<double> excluded_levels_hz;
    bool have_ch2 = false;
    TransferEstimate to_ch2;
    TransferEstimate to_ch3;
    std::vector<std::string> notes;
    std::vector<std::string> files;
};

/// Lock-point sweep: applies each level as the cause channel's lock offset,
/// runs the chain, regresses the settled downstream lock points. Levels that
/// lose lock are excluded and noted.
TransferOutputs run_transfer(const Scenario& scenario, int cause_channel,
                             const std::vector<double>& levels_hz,
                             const std::string& out_dir);

struct AdevOutputs {
    std::array<AllanCurve, 3> curves;
    std::vector<std::string> files;
};

/// Analysis-only: overlapping Allan deviation of an existing counter CSV.
AdevOutputs run_adev(const std::string& counter_csv, double max_tau_s, double skip_s,
                     const std::string& out_dir);

} // namespace trilock
