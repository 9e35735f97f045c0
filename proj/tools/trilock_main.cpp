#include <cstdio>
#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trilock/errors.hpp"
#include "trilock/scenario.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 1;
constexpr int exit_runtime = 2;
constexpr int exit_io = 3;

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::string mode;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool strict = false;
};

trilock::Scenario load(const CommonArgs& args) {
    auto sc = trilock::load_scenario(args.config_path);
    if (args.seed_set) {
        sc.apply_master_seed(args.seed);
    }
    if (args.mode == "waveform") {
        sc.servo.mode = trilock::FidelityMode::waveform;
    } else if (args.mode == "envelope") {
        sc.servo.mode = trilock::FidelityMode::envelope;
    } else if (!args.mode.empty()) {
        throw trilock::config_error("bad --mode '" + args.mode + "'");
    }
    trilock::validate_chain(sc.servo);
    return sc;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config) {
    auto* cfg = cmd->add_option("--config", args.config_path, "scenario configuration file");
    if (needs_config) {
        cfg->required();
    }
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--mode", args.mode, "override fidelity mode: envelope|waveform");
    cmd->add_option("--seed", args.seed, "override the master seed")
        ->each([&args](const std::string&) { args.seed_set = true; });
    cmd->add_flag("--strict", args.strict, "exit nonzero when a lock is lost");
}

int do_scan(const CommonArgs& args) {
    const auto sc = load(args);
    const auto out = trilock::run_scan(sc, args.out_dir);
    for (const auto& w : out.warnings) {
        std::cout << "warning: " << w << "\n";
    }
    std::printf("zero_crossing_hz = %.6g\n", out.zero_crossing_hz);
    std::printf("calibrated_slope_v_per_hz = %.6g\n", out.calibrated_slope_v_per_hz);
    std::printf("calibration_gain = %.6g\n", out.calibration_gain);
    for (const auto& f : out.files) {
        std::cout << "wrote " << f << "\n";
    }
    return exit_ok;
}

int do_run(const CommonArgs& args) {
    const auto sc = load(args);
    const auto out = trilock::run_scenario(sc, args.out_dir);
    bool lock_lost = false;
    for (int i = 0; i < 3; ++i) {
        const auto& cs = out.summary.ch[static_cast<std::size_t>(i)];
        lock_lost = lock_lost || cs.lock_lost;
        std::printf("ch%d: sigma(gate) = %.6g Hz, max sigma(tau<=1000 s) = %.6g Hz, lock_%s\n",
                    i + 1, out.sigma_at_1s[static_cast<std::size_t>(i)],
                    out.max_sigma_tau_le_1000s[static_cast<std::size_t>(i)],
                    cs.lock_lost ? "lost" : (cs.lock_acquired ? "acquired" : "pending"));
    }
    for (const auto& w : out.summary.warnings) {
        std::cout << "warning: " << w << "\n";
    }
    for (const auto& f : out.files) {
        std::cout << "wrote " << f << "\n";
    }
    if (lock_lost && args.strict) {
        std::cerr << "error: lock lost during the run (strict mode)\n";
        return exit_runtime;
    }
    return exit_ok;
}

int do_transfer(const CommonArgs& args, int channel, const std::string& levels_text) {
    auto sc = load(args);
    int cause = channel > 0 ? channel : sc.transfer_channel;
    std::vector<double> levels = sc.transfer_levels_hz;
    if (!levels_text.empty()) {
        levels.clear();
        std::string item;
        std::istringstream ss(levels_text);
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            try {
                levels.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw trilock::config_error("bad transfer level '" + item + "'");
            }
        }
    }
    const auto out = trilock::run_transfer(sc, cause, levels, args.out_dir);
    if (out.have_ch2) {
        std::printf("slope ch%d->ch2 = %.6g +- %.2g (95%% CI)\n", cause, out.to_ch2.slope,
                    out.to_ch2.ci_halfwidth);
    }
    std::printf("slope ch%d->ch3 = %.6g +- %.2g (95%% CI)\n", cause, out.to_ch3.slope,
                out.to_ch3.ci_halfwidth);
    for (const auto& n : out.notes) {
        std::cout << n << "\n";
    }
    for (const auto& f : out.files) {
        std::cout << "wrote " << f << "\n";
    }
    if (!out.excluded_levels_hz.empty() && args.strict) {
        std::cerr << "error: " << out.excluded_levels_hz.size()
                  << " level(s) lost lock (strict mode)\n";
        return exit_runtime;
    }
    return exit_ok;
}

int do_adev(const CommonArgs& args, const std::string& counter_path, double max_tau,
            double skip_s) {
    const auto out = trilock::run_adev(counter_path, max_tau, skip_s, args.out_dir);
    for (const auto& f : out.files) {
        std::cout << "wrote " << f << "\n";
    }
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"trilock: three-step Rydberg laser-stabilization chain simulator"};
    app.require_subcommand(1);

    CommonArgs scan_args, run_args, transfer_args, adev_args;
    int transfer_channel = 0;
    std::string transfer_levels;
    std::string counter_path;
    double adev_max_tau = 0.0;
    double adev_skip = 0.0;

    auto* scan = app.add_subcommand("scan", "axis-3 lineshape and calibrated error curve");
    add_common(scan, scan_args, true);
    auto* run = app.add_subcommand("run", "full pipeline: servo chain, counters, Allan analysis");
    add_common(run, run_args, true);
    auto* transfer = app.add_subcommand("transfer", "lock-point sweep and transfer factors");
    add_common(transfer, transfer_args, true);
    transfer->add_option("--channel", transfer_channel, "cause channel (1 or 2)");
    transfer->add_option("--levels", transfer_levels, "comma-separated detuning levels in Hz");
    auto* adev = app.add_subcommand("adev", "Allan analysis of an existing counter CSV");
    add_common(adev, adev_args, false);
    adev->add_option("--counter", counter_path, "counter CSV path")->required();
    adev->add_option("--max-tau", adev_max_tau, "largest tau in seconds (0 = span/10)");
    adev->add_option("--skip", adev_skip, "initial seconds to drop");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? exit_ok : exit_config;
    }

    try {
        if (scan->parsed()) return do_scan(scan_args);
        if (run->parsed()) return do_run(run_args);
        if (transfer->parsed()) return do_transfer(transfer_args, transfer_channel, transfer_levels);
        if (adev->parsed()) return do_adev(adev_args, counter_path, adev_max_tau, adev_skip);
        std::cerr << "error: no subcommand\n";
        return exit_config;
    } catch (const trilock::io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return exit_io;
    } catch (const trilock::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const trilock::invalid_spec_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return exit_runtime;
    }
}
