#include <doctest.h>

#include <cmath>
#include <vector>

#include "trilock/allan.hpp"
#include "trilock/counter.hpp"
#include "trilock/errors.hpp"
#include "trilock/servo.hpp"

using namespace trilock;

namespace {

ServoChainConfig quiet_config(double duration) {
    auto cfg = ServoChainConfig::defaults();
    cfg.duration = duration;
    for (auto& ch : cfg.channels) {
        ch.noise = NoiseSpec{};
    }
    cfg.channels[0].engage_time_s = 0.0;
    cfg.channels[1].engage_time_s = 0.05;
    cfg.channels[2].engage_time_s = 0.1;
    return cfg;
}

// adev at tau = 1 s; the first gates cover lock acquisition and are dropped
// so the comparison sees the locked steady state
double adev_1s(const FrequencyTrace& tr, std::size_t skip_gates = 2) {
    auto readings = gated_readings(tr, 1.0, 0.0, 0);
    readings.erase(readings.begin(),
                   readings.begin() + static_cast<std::ptrdiff_t>(skip_gates));
    return overlapping_adev(readings, 1.0, {1}).sigmas[0];
}

} // namespace

TEST_CASE("pid quiescence, pure proportional, integrator closed form") {
    PidState st;
    PidGains g{2.0, 0.0, 0.0, 10.0};
    CHECK(pid_update(st, 0.0, g, 1e-3) == 0.0);
    CHECK(pid_update(st, 0.5, g, 1e-3) == doctest::Approx(1.0).epsilon(1e-12));

    PidState st2;
    PidGains gi{1.0, 10.0, 0.0, 10.0};
    double cmd = 0.0;
    for (int k = 0; k < 100; ++k) {
        cmd = pid_update(st2, 1.0, gi, 1e-3);
    }
    CHECK(st2.integrator == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(cmd == doctest::Approx(2.0).epsilon(1e-9)); // kp*e + I

    // anti-windup clamp
    PidState st3;
    PidGains gw{1.0, 1000.0, 0.0, 0.25};
    for (int k = 0; k < 10000; ++k) {
        pid_update(st3, 1.0, gw, 1e-3);
    }
    CHECK(st3.integrator == doctest::Approx(0.25).epsilon(1e-12));

    CHECK_THROWS_AS(pid_update(st3, 0.0, gw, 0.0), invalid_spec_error);
    PidGains bad;
    bad.ki = -1.0;
    CHECK_THROWS_AS(validate(bad), invalid_spec_error);
}

TEST_CASE("actuator: dc gain, single-pole step response, saturation") {
    Actuator a{ActuatorKind::piezo, 5e7, 1e3, 5e8};
    ActuatorState st;
    CHECK(actuator_response(st, 0.0, a, 1e-6) == 0.0);

    // step response checked at t = 1/(2 pi bw): 1 - e^-1 of final
    const double dt = 1e-7;
    const double t_probe = 1.0 / (2.0 * 3.14159265358979323846 * a.bandwidth_hz);
    const auto n_probe = static_cast<std::size_t>(std::llround(t_probe / dt));
    ActuatorState step;
    double corr = 0.0;
    for (std::size_t k = 0; k < n_probe; ++k) {
        corr = actuator_response(step, 1e-3, a, dt);
    }
    const double final_corr = a.gain_hz_per_v * 1e-3;
    CHECK(corr / final_corr == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(0.01));

    // long time: within 0.1% of dc gain
    for (int k = 0; k < 200000; ++k) {
        corr = actuator_response(step, 1e-3, a, dt);
    }
    CHECK(corr == doctest::Approx(final_corr).epsilon(1e-3));

    // saturation clamps and reports
    ActuatorState sat;
    bool flag = false;
    double clamped = 0.0;
    for (int k = 0; k < 100000; ++k) {
        clamped = actuator_response(sat, 100.0, a, 1e-4, &flag);
    }
    CHECK(clamped == a.range_hz);
    CHECK(flag);
}

TEST_CASE("chain validation rejects malformed configs") {
    auto cfg = ServoChainConfig::defaults();
    cfg.mode = FidelityMode::waveform;
    cfg.duration = 60.0;
    CHECK_THROWS_AS(validate_chain(cfg), invalid_spec_error); // waveform > 10 s

    cfg = ServoChainConfig::defaults();
    cfg.channels[2].actuators.push_back(Actuator{ActuatorKind::current, 1e7, 5e4, 2e7});
    cfg.channels[2].gains.push_back(PidGains{});
    CHECK_THROWS_AS(validate_chain(cfg), invalid_spec_error); // ch3 is piezo-only

    cfg = ServoChainConfig::defaults();
    cfg.channels[1].dither.depth = 0.0;
    CHECK_THROWS_AS(validate_chain(cfg), invalid_spec_error);

    cfg = ServoChainConfig::defaults();
    cfg.duration = -1.0;
    CHECK_THROWS_AS(validate_chain(cfg), invalid_spec_error);
}

TEST_CASE("quiet chain stays at zero") {
    const auto scheme = LadderScheme::rb85_default();
    const auto target = RydbergTarget::make(50, RydbergSeries::F7_2);
    auto cfg = quiet_config(2.0);
    const auto res = run_locked_chain(cfg, scheme, target);
    for (int i = 0; i < 3; ++i) {
        REQUIRE(res.traces[i].size() >= 2);
        for (double v : res.traces[i].samples) {
            CHECK(std::abs(v) < 1e-6);
        }
        CHECK(res.summary.ch[i].engaged);
        CHECK(!res.summary.ch[i].lock_lost);
    }
}

TEST_CASE("static first-step detuning propagates with the Doppler factors") {
    const auto scheme = LadderScheme::rb85_default();
    const auto target = RydbergTarget::make(50, RydbergSeries::F7_2);
    auto cfg = quiet_config(4.0);
    cfg.channels[0].lock_offset_hz = 1e6;
    cfg.measure_window_s = 1.5;
    const auto res = run_locked_chain(cfg, scheme, target);

    CHECK(res.summary.ch[0].mean_offset_hz == doctest::Approx(1e6).epsilon(1e-3));
    // lambda1/lambda2 = 1.00515, lambda1/lambda3 = 0.619048
    CHECK(res.summary.ch[1].mean_offset_hz ==
          doctest::Approx(1e6 * 780.0 / 776.0).epsilon(2e-3));
    CHECK(std::abs(res.summary.ch[2].mean_offset_hz - 1e6 * 780.0 / 1260.0) < 2e3);
}

TEST_CASE("transfer sweep reproduces the wavelength ratios") {
    const auto scheme = LadderScheme::rb85_default();
    const auto target = RydbergTarget::make(50, RydbergSeries::F7_2);
    std::vector<double> levels{-2e6, -1e6, 0.0, 1e6, 2e6};
    std::vector<double> ch2_points, ch3_points;
    for (double lv : levels) {
        auto cfg = quiet_config(4.0);
        cfg.channels[0].lock_offset_hz = lv;
        cfg.measure_window_s = 1.5;
        const auto res = run_locked_chain(cfg, scheme, target);
        REQUIRE(!res.summary.ch[1].lock_lost);
        REQUIRE(!res.summary.ch[2].lock_lost);
        ch2_points.push_back(res.summary.ch[1].mean_offset_hz);
        ch3_points.push_back(res.summary.ch[2].mean_offset_hz);
    }
    const auto t12 = transfer_factor(levels, ch2_points);
    const auto t13 = transfer_factor(levels, ch3_points);
    CHECK(t12.slope == doctest::Approx(780.0 / 776.0).epsilon(0.005));
    CHECK(t13.slope == doctest::Approx(780.0 / 1260.0).epsilon(0.005));
}

TEST_CASE("closed loop suppresses white FM by at least 10x at 1 s") {
    const auto scheme = LadderScheme::rb85_default();
    const auto target = RydbergTarget::make(50, RydbergSeries::F7_2);
    auto closed = ServoChainConfig::defaults();
    closed.duration = 40.0;
    closed.output_dt = 1e-2;
    for (int i = 0; i < 3; ++i) {
        closed.channels[i].noise.h0 = 1e6;
        closed.channels[i].noise.seed = 500 + static_cast<std::uint64_t>(i);
    }
    auto open = closed;
    for (auto& ch : open.channels) ch.engage_time_s = 1e12; // never engage

    const auto res_closed = run_locked_chain(closed, scheme, target);
    const auto res_open = run_locked_chain(open, scheme, target);
    for (int i = 0; i < 3; ++i) {
        const double a_open = adev_1s(res_open.traces[i]);
        const double a_closed = adev_1s(res_closed.traces[i]);
        CHECK(a_open / a_closed >= 10.0);
    }
}

TEST_CASE("identical config and seeds give identical traces") {
    const auto scheme = LadderScheme::rb85_default();
    const auto target = RydbergTarget::make(50, RydbergSeries::F7_2);
    auto cfg = ServoChainConfig::defaults();
    cfg.duration = 2.0;
    for (int i = 0; i < 3; ++i) {
        cfg.channels[i].noise.h0 = 1e5;
        cfg.channels[i].noise.h_rw = 1e7;
        cfg.channels[i].noise.seed = 42 + static_cast<std::uint64_t>(i);
    }
    const auto a = run_locked_chain(cfg, scheme, target);
    const auto b = run_locked_chain(cfg, scheme, target);
    for (int i = 0; i < 3; ++i) {
        REQUIRE(a.traces[i].size() == b.traces[i].size());
        for (std::size_t k = 0; k < a.traces[i].size(); ++k) {
            CHECK(a.traces[i].samples[k] == b.traces[i].samples[k]);
        }
    }
}

TEST_CASE("envelope and waveform modes agree on the settled chain") {
    const auto scheme = LadderScheme::rb85_default();
    const auto target = RydbergTarget::make(50, RydbergSeries::F7_2);

    auto env = quiet_config(0.5);
    env.channels[0].lock_offset_hz = 1e6;
    env.channels[0].engage_time_s = 0.0;
    env.channels[1].engage_time_s = 0.02;
    env.channels[2].engage_time_s = 0.04;
    env.measure_window_s = 0.2;

    auto wav = env;
    wav.mode = FidelityMode::waveform;

    const auto res_env = run_locked_chain(env, scheme, target);
    const auto res_wav = run_locked_chain(wav, scheme, target);
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(res_env.summary.ch[i].mean_offset_hz -
                       res_wav.summary.ch[i].mean_offset_hz) < 5e3);
    }
}

TEST_CASE("table-based envelope evaluation matches direct evaluation") {
    const auto scheme = LadderScheme::rb85_default();
    const auto target = RydbergTarget::make(50, RydbergSeries::F7_2);
    auto direct = quiet_config(0.8);
    direct.channels[0].lock_offset_hz = 1.5e6;
    direct.measure_window_s = 0.3;
    direct.envelope_eval = EnvelopeEval::direct;
    auto table = direct;
    table.envelope_eval = EnvelopeEval::table;

    const auto res_direct = run_locked_chain(direct, scheme, target);
    const auto res_table = run_locked_chain(table, scheme, target);
    CHECK(res_table.summary.discriminator_eval == "table");
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(res_direct.summary.ch[i].mean_offset_hz -
                       res_table.summary.ch[i].mean_offset_hz) < 2e3);
    }
}

TEST_CASE("constant disturbance is integrated away") {
    const auto scheme = LadderScheme::rb85_default();
    const auto target = RydbergTarget::make(50, RydbergSeries::F7_2);
    auto cfg = quiet_config(3.0);
    cfg.channels[1].static_disturbance_hz = 3e5;
    cfg.measure_window_s = 1.0;
    const auto res = run_locked_chain(cfg, scheme, target);
    CHECK(std::abs(res.summary.ch[1].mean_offset_hz) < 1e3);
    CHECK(!res.summary.ch[1].lock_lost);
}

TEST_CASE("setpoint far outside capture is flagged as lock lost") {
    const auto scheme = LadderScheme::rb85_default();
    const auto target = RydbergTarget::make(50, RydbergSeries::F7_2);
    auto cfg = quiet_config(1.0);
    cfg.channels[2].lock_offset_hz = 40e6; // far beyond the +-(excursion+width) capture
    const auto res = run_locked_chain(cfg, scheme, target);
    CHECK(res.summary.ch[2].lock_lost);
    CHECK(res.summary.ch[2].lock_lost_t_s >= 0.1);
    CHECK(res.summary.ch[2].lock_lost_t_s < 1.0);
    // run continued to the end
    CHECK(res.traces[2].size() >= 2);
    // the healthy channels kept their locks
    CHECK(!res.summary.ch[0].lock_lost);
    CHECK(!res.summary.ch[1].lock_lost);
}
