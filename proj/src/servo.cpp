#include "trilock/servo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "trilock/detector.hpp"
#include "trilock/errors.hpp"

namespace trilock {

void validate(const PidGains& gains) {
    if (!(gains.ki >= 0.0) || !std::isfinite(gains.ki)) {
        throw invalid_spec_error("PidGains: ki must be finite and >= 0");
    }
    if (!(gains.integrator_limit > 0.0)) {
        throw invalid_spec_error("PidGains: integrator limit must be positive");
    }
    if (!std::isfinite(gains.kp) || !std::isfinite(gains.kd)) {
        throw invalid_spec_error("PidGains: non-finite gain");
    }
}

double pid_update(PidState& state, double error_v, const PidGains& gains, double dt) {
    if (!(dt > 0.0)) {
        throw invalid_spec_error("pid_update: dt must be positive");
    }
    double i = state.integrator + gains.ki * gains.kp * error_v * dt;
    i = std::clamp(i, -gains.integrator_limit, gains.integrator_limit);
    state.integrator = i;
    const double d = gains.kd * (error_v - state.prev_error) / dt;
    state.prev_error = error_v;
    return gains.kp * error_v + i + d;
}

void validate(const Actuator& actuator) {
    if (actuator.gain_hz_per_v == 0.0 || !std::isfinite(actuator.gain_hz_per_v)) {
        throw invalid_spec_error("Actuator: gain must be nonzero");
    }
    if (!(actuator.bandwidth_hz > 0.0) || !(actuator.range_hz > 0.0)) {
        throw invalid_spec_error("Actuator: bandwidth and range must be positive");
    }
}

double actuator_response(ActuatorState& state, double command_v, const Actuator& actuator,
                         double dt, bool* saturated) {
    if (!(dt > 0.0)) {
        throw invalid_spec_error("actuator_response: dt must be positive");
    }
    const double a = std::exp(-2.0 * 3.14159265358979323846 * actuator.bandwidth_hz * dt);
    const double raw = a * state.filtered_hz + (1.0 - a) * actuator.gain_hz_per_v * command_v;
    const bool sat = std::abs(raw) > actuator.range_hz;
    state.filtered_hz = std::clamp(raw, -actuator.range_hz, actuator.range_hz);
    if (saturated) {
        *saturated = sat;
    }
    return state.filtered_hz;
}

ServoChainConfig ServoChainConfig::defaults() {
    ServoChainConfig cfg;
    const Actuator piezo{ActuatorKind::piezo, 5e7, 1e3, 5e8};
    const Actuator current{ActuatorKind::current, 1e7, 5e4, 2e7};

    auto& ch1 = cfg.channels[0];
    ch1.actuators = {piezo, current};
    ch1.gains = {{0.2, 2000.0, 0.0, 10.0}, {1.0, 2000.0, 0.0, 2.0}};
    ch1.dither = DitherSpec{}; // unused: dither-free polarization-spectroscopy lock

    auto& ch2 = cfg.channels[1];
    ch2.actuators = {piezo, current};
    ch2.gains = {{0.1, 2500.0, 0.0, 10.0}, {0.5, 2500.0, 0.0, 2.0}};
    ch2.dither = DitherSpec{1e6, 30e3, 0.0, 100e-6}; // small second-step modulation
    ch2.engage_time_s = 0.05;

    auto& ch3 = cfg.channels[2];
    ch3.actuators = {piezo};
    ch3.gains = {{0.6, 1500.0, 0.0, 10.0}};
    ch3.dither = DitherSpec{15e6, 90e3, 0.0, 100e-6};
    ch3.engage_time_s = 0.1;

    return cfg;
}

void validate_chain(const ServoChainConfig& config) {
    if (!(config.duration > 0.0) || !std::isfinite(config.duration)) {
        throw invalid_spec_error("ServoChainConfig: duration must be positive");
    }
    const double dt = config.effective_dt();
    if (!(dt > 0.0) || config.duration < 3.0 * dt) {
        throw invalid_spec_error("ServoChainConfig: need duration >= 3 dt");
    }
    if (config.mode == FidelityMode::waveform && config.duration > 10.0) {
        throw invalid_spec_error("ServoChainConfig: waveform mode is limited to <= 10 s runs; use envelope mode");
    }
    for (int i = 0; i < 3; ++i) {
        const auto& ch = config.channels[static_cast<std::size_t>(i)];
        validate(ch.noise);
        if (ch.actuators.size() != ch.gains.size() || ch.actuators.empty()) {
            throw invalid_spec_error("ServoChainConfig: actuator/gain lists must match");
        }
        for (const auto& a : ch.actuators) validate(a);
        for (const auto& g : ch.gains) validate(g);
        if (i == 2) {
            if (ch.actuators.size() != 1 || ch.actuators[0].kind != ActuatorKind::piezo) {
                throw invalid_spec_error("ServoChainConfig: channel 3 must have a piezo actuator only");
            }
        } else {
            if (ch.actuators.size() != 2 || ch.actuators[0].kind != ActuatorKind::piezo ||
                ch.actuators[1].kind != ActuatorKind::current) {
                throw invalid_spec_error(
                    "ServoChainConfig: channels 1-2 must have piezo + current actuators");
            }
        }
        if (i > 0) {
            validate(ch.dither);
            if (!(ch.dither.depth > 0.0)) {
                throw invalid_spec_error("ServoChainConfig: channels 2-3 need a nonzero dither depth");
            }
            if (config.mode == FidelityMode::waveform) {
                if (dt > ch.dither.tau_lp / 10.0) {
                    throw invalid_spec_error("ServoChainConfig: waveform mode needs dt <= tau_lp/10");
                }
                if (dt > 1.0 / (20.0 * ch.dither.f_mod)) {
                    throw invalid_spec_error("ServoChainConfig: waveform mode needs dt <= 1/(20 f_mod)");
                }
            }
        }
        if (!(ch.engage_time_s >= 0.0) || !std::isfinite(ch.lock_offset_hz) ||
            !std::isfinite(ch.static_disturbance_hz)) {
            throw invalid_spec_error("ServoChainConfig: bad engage time / offsets");
        }
        if (!(ch.slope_target_v_per_hz != 0.0) || !std::isfinite(ch.slope_target_v_per_hz)) {
            throw invalid_spec_error("ServoChainConfig: bad discriminator slope target");
        }
    }
    if (!(config.ch1_halfwidth_hz > 0.0)) {
        throw invalid_spec_error("ServoChainConfig: ch1 halfwidth must be positive");
    }
    if (!(config.table_range_hz > 0.0) || !(config.table_step_hz > 0.0) ||
        config.table_range_hz < 4.0 * config.table_step_hz) {
        throw invalid_spec_error("ServoChainConfig: bad table geometry");
    }
    if (config.dither_phases < 4 || config.dither_phases % 2 != 0) {
        throw invalid_spec_error("ServoChainConfig: dither_phases must be even and >= 4");
    }
}

namespace {

constexpr double pi = 3.14159265358979323846;

// ---- uniform-grid Catmull-Rom interpolation ----

inline void cr_weights(double t, double w[4]) {
    const double t2 = t * t;
    const double t3 = t2 * t;
    w[0] = -0.5 * t3 + t2 - 0.5 * t;
    w[1] = 1.5 * t3 - 2.5 * t2 + 1.0;
    w[2] = -1.5 * t3 + 2.0 * t2 + 0.5 * t;
    w[3] = 0.5 * t3 - 0.5 * t2;
}

struct Axis {
    double x0 = 0.0;
    double h = 1.0;
    int n = 0;

    // cubic neighborhood i-1..i+2 must stay inside the grid
    bool covers(double x) const {
        const double u = (x - x0) / h;
        return u >= 1.0 && u <= static_cast<double>(n - 3);
    }
    void locate(double x, int& i, double w[4]) const {
        const double u = (x - x0) / h;
        double fi = std::floor(u);
        i = static_cast<int>(fi);
        cr_weights(u - fi, w);
    }
};

struct Table1 {
    Axis ax;
    std::vector<double> v;

    double eval(double x) const {
        int i;
        double w[4];
        ax.locate(x, i, w);
        const double* p = &v[static_cast<std::size_t>(i - 1)];
        return w[0] * p[0] + w[1] * p[1] + w[2] * p[2] + w[3] * p[3];
    }
};

struct Table2 {
    Axis a1, a2;
    std::vector<double> v; // row-major [i1][i2]

    bool covers(double x1, double x2) const { return a1.covers(x1) && a2.covers(x2); }
    double eval(double x1, double x2) const {
        int i1, i2;
        double w1[4], w2[4];
        a1.locate(x1, i1, w1);
        a2.locate(x2, i2, w2);
        double acc = 0.0;
        for (int r = 0; r < 4; ++r) {
            const double* p =
                &v[static_cast<std::size_t>(i1 - 1 + r) * static_cast<std::size_t>(a2.n) +
                   static_cast<std::size_t>(i2 - 1)];
            acc += w1[r] * (w2[0] * p[0] + w2[1] * p[1] + w2[2] * p[2] + w2[3] * p[3]);
        }
        return acc;
    }
};

struct Table3 {
    Axis a1, a2, a3;
    std::vector<double> v; // row-major [i1][i2][i3]

    bool covers(double x1, double x2, double x3) const {
        return a1.covers(x1) && a2.covers(x2) && a3.covers(x3);
    }
    double eval(double x1, double x2, double x3) const {
        int i1, i2, i3;
        double w1[4], w2[4], w3[4];
        a1.locate(x1, i1, w1);
        a2.locate(x2, i2, w2);
        a3.locate(x3, i3, w3);
        const std::size_t stride2 = static_cast<std::size_t>(a3.n);
        const std::size_t stride1 = static_cast<std::size_t>(a2.n) * stride2;
        double acc = 0.0;
        for (int r = 0; r < 4; ++r) {
            double accr = 0.0;
            const std::size_t base1 = static_cast<std::size_t>(i1 - 1 + r) * stride1;
            for (int s = 0; s < 4; ++s) {
                const double* p = &v[base1 + static_cast<std::size_t>(i2 - 1 + s) * stride2 +
                                     static_cast<std::size_t>(i3 - 1)];
                accr += w2[s] * (w3[0] * p[0] + w3[1] * p[1] + w3[2] * p[2] + w3[3] * p[3]);
            }
            acc += w1[r] * accr;
        }
        return acc;
    }
};

// antisymmetric midpoint sine table (see lockin.cpp)
std::vector<double> make_sins(int n) {
    std::vector<double> s(static_cast<std::size_t>(n), 0.0);
    for (int j = 0; j < n / 2; ++j) {
        const double theta = 2.0 * pi * (static_cast<double>(j) + 0.5) / n;
        s[static_cast<std::size_t>(j)] = std::sin(theta);
        s[static_cast<std::size_t>(n - 1 - j)] = -s[static_cast<std::size_t>(j)];
    }
    return s;
}

// ---- coupled discriminators ----

class Discriminators {
public:
    Discriminators(const LadderScheme& scheme, const RydbergTarget& target,
                   const ServoChainConfig& cfg, bool use_table)
        : eval_(scheme, target),
          sins_(make_sins(cfg.dither_phases)),
          exc2_(cfg.channels[1].dither.excursion()),
          exc3_(cfg.channels[2].dither.excursion()),
          s1_(cfg.channels[0].slope_target_v_per_hz),
          w1_(cfg.ch1_halfwidth_hz),
          use_table_(use_table) {
        calibrate(cfg);
        if (use_table_) {
            build_tables(cfg);
        }
    }

    double e1(double delta) const {
        const double u = delta / w1_;
        return s1_ * delta / (1.0 + u * u);
    }

    double e2(double f1, double delta2) const {
        if (use_table_ && t2_.covers(f1, delta2)) {
            return g2_ * t2_.eval(f1, delta2);
        }
        if (use_table_) ++fallbacks_;
        return e2_direct(f1, delta2);
    }

    double e3(double f1, double f2, double delta3) const {
        if (use_table_ && t3_.covers(f1, f2, delta3)) {
            return g3_ * t3_.eval(f1, f2, delta3);
        }
        if (use_table_) ++fallbacks_;
        return e3_direct(f1, f2, delta3);
    }

    double e2_direct(double f1, double delta2) const {
        double acc = 0.0;
        for (double s : sins_) {
            acc += eval_.two_step(f1, delta2 + exc2_ * s) * s;
        }
        return g2_ * 2.0 * acc / static_cast<double>(sins_.size());
    }

    double e3_direct(double f1, double f2, double delta3) const {
        double acc = 0.0;
        for (double s : sins_) {
            acc += eval_.three_step(f1, f2, delta3 + exc3_ * s) * s;
        }
        return g3_ * 2.0 * acc / static_cast<double>(sins_.size());
    }

    // warm-started Newton root along the channel's own axis, for lock
    // monitoring
    double zero2(double f1, double init) const {
        return newton([&](double x) { return e2(f1, x); }, init);
    }
    double zero3(double f1, double f2, double init) const {
        return newton([&](double x) { return e3(f1, f2, x); }, init);
    }

    double capture(int ch) const { return capture_[static_cast<std::size_t>(ch)]; }
    double gain2() const { return g2_; }
    double gain3() const { return g3_; }
    std::uint64_t fallbacks() const { return fallbacks_; }
    const SignalEvaluator& signal() const { return eval_; }

private:
    template <class F>
    double newton(const F& fn, double z) const {
        const double h = 2e4;
        for (int it = 0; it < 6; ++it) {
            const double e0 = fn(z);
            const double de = (fn(z + h) - fn(z - h)) / (2.0 * h);
            if (de == 0.0 || !std::isfinite(de)) break;
            double step = -e0 / de;
            step = std::clamp(step, -1e6, 1e6);
            z += step;
            if (std::abs(step) < 100.0) break;
        }
        return z;
    }

    void calibrate(const ServoChainConfig& cfg) {
        const double h = 1e3;
        g2_ = 1.0;
        g3_ = 1.0;
        const double raw2 = (e2_direct(0.0, h) - e2_direct(0.0, -h)) / (2.0 * h);
        const double raw3 = (e3_direct(0.0, 0.0, h) - e3_direct(0.0, 0.0, -h)) / (2.0 * h);
        if (raw2 == 0.0 || !std::isfinite(raw2) || raw3 == 0.0 || !std::isfinite(raw3)) {
            throw calibration_error("servo discriminator calibration: degenerate raw slope");
        }
        g2_ = cfg.channels[1].slope_target_v_per_hz / raw2;
        g3_ = cfg.channels[2].slope_target_v_per_hz / raw3;

        capture_[0] = w1_;
        capture_[1] = scan_capture([&](double x) { return e2(0.0, x); }, exc2_ + 10e6);
        capture_[2] = scan_capture([&](double x) { return e3(0.0, 0.0, x); }, exc3_ + 10e6);
    }

    // distance from the zero crossing to the nearest flank extremum
    template <class F>
    double scan_capture(const F& fn, double range) const {
        const double step = 1e5;
        double best_pos = range, best_neg = range;
        double prev = fn(0.0);
        double peak = 0.0;
        for (double x = step; x <= range; x += step) {
            const double v = fn(x);
            if (std::abs(v) < std::abs(peak) && std::abs(peak) > 0.0) {
                best_pos = x - step;
                break;
            }
            peak = std::abs(v) > std::abs(peak) ? v : peak;
            prev = v;
        }
        (void)prev;
        peak = 0.0;
        for (double x = -step; x >= -range; x -= step) {
            const double v = fn(x);
            if (std::abs(v) < std::abs(peak) && std::abs(peak) > 0.0) {
                best_neg = -x - step;
                break;
            }
            peak = std::abs(v) > std::abs(peak) ? v : peak;
        }
        return std::max(2.0 * step, std::min(best_pos, best_neg));
    }

    void build_tables(const ServoChainConfig& cfg) {
        const double r = cfg.table_range_hz;
        const double h = cfg.table_step_hz;
        const int n = 2 * static_cast<int>(std::llround(r / h)) + 1;
        const Axis ax{-r, h, n};

        t2_.a1 = ax;
        t2_.a2 = ax;
        t2_.v.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
        const double saved_g2 = g2_;
        g2_ = 1.0; // store raw values; gain applied on evaluation
        for (int i = 0; i < n; ++i) {
            const double f1 = ax.x0 + i * h;
            for (int j = 0; j < n; ++j) {
                t2_.v[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                      static_cast<std::size_t>(j)] = e2_direct(f1, ax.x0 + j * h);
            }
        }
        g2_ = saved_g2;

        t3_.a1 = ax;
        t3_.a2 = ax;
        t3_.a3 = ax;
        t3_.v.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(n) *
                     static_cast<std::size_t>(n));
        // per (f1,f2): sample the three-step signal on a fine d3 grid once,
        // then dither-average by cubic interpolation for every table node
        const double pad = exc3_ + 8.0 * h;
        const double fine_h = std::min(1e5, h);
        const int fine_n = 2 * static_cast<int>(std::llround((r + pad) / fine_h)) + 5;
        Table1 fine;
        fine.ax = Axis{-(r + pad) - 2.0 * fine_h, fine_h, fine_n};
        fine.v.resize(static_cast<std::size_t>(fine_n));
        const std::size_t stride2 = static_cast<std::size_t>(n);
        const std::size_t stride1 = stride2 * stride2;
        for (int i = 0; i < n; ++i) {
            const double f1 = ax.x0 + i * h;
            for (int j = 0; j < n; ++j) {
                const double f2 = ax.x0 + j * h;
                for (int k = 0; k < fine_n; ++k) {
                    fine.v[static_cast<std::size_t>(k)] =
                        eval_.three_step(f1, f2, fine.ax.x0 + k * fine_h);
                }
                for (int k = 0; k < n; ++k) {
                    const double d3 = ax.x0 + k * h;
                    double acc = 0.0;
                    for (double s : sins_) {
                        acc += fine.eval(d3 + exc3_ * s) * s;
                    }
                    t3_.v[static_cast<std::size_t>(i) * stride1 +
                          static_cast<std::size_t>(j) * stride2 + static_cast<std::size_t>(k)] =
                        2.0 * acc / static_cast<double>(sins_.size());
                }
            }
        }
    }

    SignalEvaluator eval_;
    std::vector<double> sins_;
    double exc2_, exc3_;
    double s1_, w1_;
    double g2_ = 1.0, g3_ = 1.0;
    std::array<double, 3> capture_{};
    bool use_table_;
    Table2 t2_;
    Table3 t3_;
    mutable std::uint64_t fallbacks_ = 0;
};

struct RunningStats {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::uint64_t n = 0;
    void add(double x) {
        sum += x;
        sum_sq += x * x;
        ++n;
    }
    double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
    double rms() const { return n ? std::sqrt(sum_sq / static_cast<double>(n)) : 0.0; }
};

} // namespace

ChainRunResult run_locked_chain(const ServoChainConfig& config, const LadderScheme& scheme,
                                const RydbergTarget& target) {
    validate_chain(config);
    validate(scheme);
    validate(target);

    const double dt = config.effective_dt();
    const auto n_steps = static_cast<std::uint64_t>(std::llround(config.duration / dt));

    // decimated output traces
    std::uint64_t decim = 1;
    if (config.output_dt > 0.0) {
        const double ratio = config.output_dt / dt;
        decim = static_cast<std::uint64_t>(std::llround(ratio));
        if (decim == 0 || std::abs(ratio - static_cast<double>(decim)) > 1e-6) {
            throw invalid_spec_error("run_locked_chain: output_dt must be a multiple of dt");
        }
    } else {
        decim = std::max<std::uint64_t>(1, (n_steps + 499999) / 500000);
    }
    const std::uint64_t n_out = n_steps / decim;
    if (n_out < 2) {
        throw invalid_spec_error("run_locked_chain: output decimation leaves < 2 samples");
    }

    const bool envelope = config.mode == FidelityMode::envelope;
    const bool use_table =
        envelope && (config.envelope_eval == EnvelopeEval::table ||
                     (config.envelope_eval == EnvelopeEval::automatic && config.duration > 20.0));

    Discriminators disc(scheme, target, config, use_table);

    ChainRunResult result;
    RunSummary& summary = result.summary;
    summary.mode = config.mode;
    summary.dt = dt;
    summary.duration = config.duration;
    summary.output_dt = dt * static_cast<double>(decim);
    summary.discriminator_eval = envelope ? (use_table ? "table" : "direct") : "demod";

    // per-channel machinery
    std::array<NoiseStream, 3> noise{NoiseStream(config.channels[0].noise, dt),
                                     NoiseStream(config.channels[1].noise, dt),
                                     NoiseStream(config.channels[2].noise, dt)};
    std::array<std::vector<PidState>, 3> pid;
    std::array<std::vector<ActuatorState>, 3> act;
    std::array<std::vector<std::uint64_t>, 3> sat_count;
    std::array<std::uint64_t, 3> servo_steps{};
    for (int i = 0; i < 3; ++i) {
        pid[i].resize(config.channels[i].actuators.size());
        act[i].resize(config.channels[i].actuators.size());
        sat_count[i].assign(config.channels[i].actuators.size(), 0);
        summary.ch[i].capture_halfwidth_hz = disc.capture(i);
    }
    summary.ch[1].calibration_gain = disc.gain2();
    summary.ch[2].calibration_gain = disc.gain3();

    std::array<double, 3> f{}, corr{}, err{};
    std::array<bool, 3> engaged{}, lost{};
    std::array<double, 3> zero_est{};
    std::array<double, 3> out_of_range_s{};
    std::array<int, 3> acquire_streak{};
    std::array<LockinState, 3> lockin{};
    std::array<RunningStats, 3> err_stats, offset_stats, settle_stats;
    std::array<double, 3> block_sum{};
    for (int i = 0; i < 3; ++i) {
        result.traces[i].dt = summary.output_dt;
        result.traces[i].samples.reserve(n_out);
        result.traces[i].origin = "locked chain ch" + std::to_string(i + 1);
    }

    const double measure_window =
        config.measure_window_s > 0.0 ? config.measure_window_s : 0.5 * config.duration;
    const double measure_start = config.duration - measure_window;
    const std::uint64_t monitor_every = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(1e-3 / dt)));
    const double monitor_dt = static_cast<double>(monitor_every) * dt;

    const auto& ch_cfg = config.channels;
    const double omega2 = 2.0 * pi * ch_cfg[1].dither.f_mod;
    const double omega3 = 2.0 * pi * ch_cfg[2].dither.f_mod;
    const double lp_a2 = std::exp(-dt / ch_cfg[1].dither.tau_lp);
    const double lp_a3 = std::exp(-dt / ch_cfg[2].dither.tau_lp);

    for (std::uint64_t k = 0; k < n_steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        for (int i = 0; i < 3; ++i) {
            f[i] = noise[i].next() + ch_cfg[i].static_disturbance_hz + corr[i];
            if (!engaged[i] && !lost[i] && t >= ch_cfg[i].engage_time_s) {
                engaged[i] = true;
                summary.ch[i].engaged = true;
            }
        }

        // discriminator errors (idle channels skip the evaluation entirely)
        if (envelope) {
            err[0] = engaged[0] && !lost[0] ? disc.e1(f[0] - ch_cfg[0].lock_offset_hz) : 0.0;
            err[1] = engaged[1] && !lost[1]
                         ? disc.e2(f[0], f[1] - ch_cfg[1].lock_offset_hz)
                         : 0.0;
            err[2] = engaged[2] && !lost[2]
                         ? disc.e3(f[0], f[1], f[2] - ch_cfg[2].lock_offset_hz)
                         : 0.0;
        } else {
            err[0] = disc.e1(f[0] - ch_cfg[0].lock_offset_hz);
            const double s2 = std::sin(omega2 * t + ch_cfg[1].dither.phase);
            const double s3 = std::sin(omega3 * t + ch_cfg[2].dither.phase);
            const double f2_inst = f[1] + ch_cfg[1].dither.excursion() * s2;
            const double f3_inst = f[2] + ch_cfg[2].dither.excursion() * s3;
            const double x2 =
                disc.signal().two_step(f[0], f2_inst - ch_cfg[1].lock_offset_hz);
            const double x3 = disc.signal().three_step(f[0], f2_inst,
                                                       f3_inst - ch_cfg[2].lock_offset_hz);
            lockin[1].y = lp_a2 * lockin[1].y + (1.0 - lp_a2) * 2.0 * x2 * s2;
            lockin[2].y = lp_a3 * lockin[2].y + (1.0 - lp_a3) * 2.0 * x3 * s3;
            err[1] = disc.gain2() * lockin[1].y;
            err[2] = disc.gain3() * lockin[2].y;
        }

        // lock monitoring
        if (k % monitor_every == 0) {
            zero_est[0] = 0.0;
            if (engaged[1] && !lost[1]) zero_est[1] = disc.zero2(f[0], zero_est[1]);
            if (engaged[2] && !lost[2]) zero_est[2] = disc.zero3(f[0], f[1], zero_est[2]);
            for (int i = 0; i < 3; ++i) {
                if (!engaged[i] || lost[i]) continue;
                const double delta =
                    (f[i] - ch_cfg[i].lock_offset_hz) - zero_est[i];
                if (std::abs(delta) > disc.capture(i)) {
                    out_of_range_s[i] += monitor_dt;
                    acquire_streak[i] = 0;
                    if (out_of_range_s[i] > 0.1) {
                        lost[i] = true;
                        summary.ch[i].lock_lost = true;
                        summary.ch[i].lock_lost_t_s = t;
                        summary.warnings.push_back("ch" + std::to_string(i + 1) +
                                                   " lock lost at t=" + std::to_string(t) +
                                                   " s; continuing open loop");
                    }
                } else {
                    out_of_range_s[i] = 0.0;
                    if (!summary.ch[i].lock_acquired &&
                        std::abs(delta) <= 0.5 * disc.capture(i)) {
                        if (++acquire_streak[i] >= 20) {
                            summary.ch[i].lock_acquired = true;
                        }
                    } else if (!summary.ch[i].lock_acquired) {
                        acquire_streak[i] = 0;
                    }
                }
            }
        }

        // servo updates; lost/disengaged channels hold their last correction
        for (int i = 0; i < 3; ++i) {
            if (!engaged[i] || lost[i]) continue;
            ++servo_steps[i];
            err_stats[i].add(err[i]);
            double total = 0.0;
            for (std::size_t a = 0; a < pid[i].size(); ++a) {
                const double cmd = pid_update(pid[i][a], -err[i], ch_cfg[i].gains[a], dt);
                bool sat = false;
                total += actuator_response(act[i][a], cmd, ch_cfg[i].actuators[a], dt, &sat);
                if (sat) ++sat_count[i][a];
            }
            corr[i] = total;
        }

        // stats and decimation
        for (int i = 0; i < 3; ++i) {
            if (engaged[i] && !lost[i]) offset_stats[i].add(f[i]);
            if (t >= measure_start) settle_stats[i].add(f[i]);
            block_sum[i] += f[i];
        }
        if ((k + 1) % decim == 0 && result.traces[0].samples.size() < n_out) {
            for (int i = 0; i < 3; ++i) {
                result.traces[i].samples.push_back(block_sum[i] / static_cast<double>(decim));
                block_sum[i] = 0.0;
            }
        }
    }

    for (int i = 0; i < 3; ++i) {
        auto& cs = summary.ch[i];
        cs.rms_error_v = err_stats[i].rms();
        cs.rms_offset_hz = offset_stats[i].rms();
        cs.mean_offset_hz = settle_stats[i].mean();
        cs.saturation_fraction.resize(sat_count[i].size());
        for (std::size_t a = 0; a < sat_count[i].size(); ++a) {
            cs.saturation_fraction[a] =
                servo_steps[i] ? static_cast<double>(sat_count[i][a]) /
                                     static_cast<double>(servo_steps[i])
                               : 0.0;
        }
    }
    summary.table_fallbacks = disc.fallbacks();
    for (int i = 1; i < 3; ++i) {
        if (demod_ripple_warning(ch_cfg[i].dither)) {
            summary.warnings.push_back("ch" + std::to_string(i + 1) +
                                       " dither: f_mod*tau_lp < 1, expect demodulation ripple");
        }
    }
    return result;
}

void write_run_summary(const std::string& path, const RunSummary& summary) {
    std::ofstream fo(path);
    if (!fo) {
        throw io_error("cannot open for writing: " + path);
    }
    char buf[128];
    fo << "mode = " << (summary.mode == FidelityMode::envelope ? "envelope" : "waveform") << "\n";
    fo << "discriminator_eval = " << summary.discriminator_eval << "\n";
    std::snprintf(buf, sizeof(buf), "dt_s = %.17g\n", summary.dt);
    fo << buf;
    std::snprintf(buf, sizeof(buf), "duration_s = %.17g\n", summary.duration);
    fo << buf;
    std::snprintf(buf, sizeof(buf), "output_dt_s = %.17g\n", summary.output_dt);
    fo << buf;
    fo << "table_fallbacks = " << summary.table_fallbacks << "\n";
    for (int i = 0; i < 3; ++i) {
        const auto& cs = summary.ch[static_cast<std::size_t>(i)];
        const std::string p = "ch" + std::to_string(i + 1) + ".";
        fo << p << "engaged = " << (cs.engaged ? "true" : "false") << "\n";
        fo << p << "lock_acquired = " << (cs.lock_acquired ? "true" : "false") << "\n";
        fo << p << "lock_lost = " << (cs.lock_lost ? "true" : "false") << "\n";
        std::snprintf(buf, sizeof(buf), "lock_lost_t_s = %.17g\n", cs.lock_lost_t_s);
        fo << p << buf;
        std::snprintf(buf, sizeof(buf), "rms_error_v = %.17g\n", cs.rms_error_v);
        fo << p << buf;
        std::snprintf(buf, sizeof(buf), "rms_offset_hz = %.17g\n", cs.rms_offset_hz);
        fo << p << buf;
        std::snprintf(buf, sizeof(buf), "mean_offset_hz = %.17g\n", cs.mean_offset_hz);
        fo << p << buf;
        std::snprintf(buf, sizeof(buf), "capture_halfwidth_hz = %.17g\n", cs.capture_halfwidth_hz);
        fo << p << buf;
        std::snprintf(buf, sizeof(buf), "calibration_gain = %.17g\n", cs.calibration_gain);
        fo << p << buf;
        for (std::size_t a = 0; a < cs.saturation_fraction.size(); ++a) {
            std::snprintf(buf, sizeof(buf), "saturation_fraction_%zu = %.17g\n", a,
                          cs.saturation_fraction[a]);
            fo << p << buf;
        }
    }
    for (const auto& w : summary.warnings) {
        fo << "warning = " << w << "\n";
    }
    if (!fo) {
        throw io_error("write failed: " + path);
    }
}

} // namespace trilock
