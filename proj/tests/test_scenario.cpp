#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "trilock/errors.hpp"
#include "trilock/scenario.hpp"

using namespace trilock;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string str() const { return path.string(); }
};

} // namespace

TEST_CASE("minimal scenario text parses with defaults") {
    const auto sc = scenario_from_text("name = minimal\n");
    CHECK(sc.name == "minimal");
    CHECK(sc.scheme.lambda1 == 780e-9);
    CHECK(sc.target.n == 50);
    CHECK(sc.servo.mode == FidelityMode::envelope);
    CHECK(sc.gate_s == 1.0);
    // channel seeds derive from the master seed
    CHECK(sc.servo.channels[0].noise.seed != sc.servo.channels[1].noise.seed);
}

TEST_CASE("unknown keys are rejected") {
    CHECK_THROWS_AS(scenario_from_text("name = x\nbogus_key = 1\n"), config_error);
    CHECK_THROWS_AS(scenario_from_text("[scheme]\nlambda9_m = 1\n"), config_error);
    CHECK_THROWS_AS(scenario_from_text("[scheme]\nlambda1_m = abc\n"), config_error);
    CHECK_THROWS_AS(scenario_from_text("name = x\nname = y\n"), config_error);
    CHECK_THROWS_AS(scenario_from_text("key_without_value\n"), config_error);
}

TEST_CASE("sections and overrides land in the right places") {
    const std::string text =
        "name = custom\n"
        "[scheme]\n"
        "gamma3_hz = 4e6\n"
        "[target]\n"
        "n = 63\n"
        "series = P\n"
        "[dither.ch3]\n"
        "depth_hz = 10e6\n"
        "[servo]\n"
        "duration_s = 25\n"
        "[servo.ch3.piezo]\n"
        "kp = 0.9\n"
        "[counter]\n"
        "fm_error_ch3_hz = 1e6\n"
        "[run]\n"
        "seed = 99\n";
    const auto sc = scenario_from_text(text);
    CHECK(sc.scheme.gamma3 == 4e6);
    CHECK(sc.target.n == 63);
    CHECK(sc.target.series == RydbergSeries::P3_2);
    CHECK(sc.target.quantum_defect == doctest::Approx(2.65));
    CHECK(sc.servo.channels[2].dither.depth == 10e6);
    CHECK(sc.servo.duration == 25.0);
    CHECK(sc.servo.channels[2].gains[0].kp == 0.9);
    CHECK(sc.fm_error_hz[2] == 1e6);
    CHECK(sc.seed == 99);
}

TEST_CASE("config echo carries provenance for every effective parameter") {
    const auto sc = scenario_from_text("[scheme]\ngamma2_hz = 3e6\n");
    bool found_user = false, found_paper = false, found_default = false;
    bool all_have_values = true;
    for (const auto& e : sc.echo) {
        if (e.key == "scheme.gamma2_hz") {
            CHECK(e.provenance == Provenance::user);
            found_user = true;
        }
        if (e.key == "dither.ch3.depth_hz") {
            CHECK(e.provenance == Provenance::paper);
            CHECK(e.value == "15000000");
            found_paper = true;
        }
        if (e.key == "dither.ch2.depth_hz") {
            CHECK(e.provenance == Provenance::defaulted);
            found_default = true;
        }
        all_have_values = all_have_values && !e.value.empty();
    }
    CHECK(found_user);
    CHECK(found_paper);
    CHECK(found_default);
    CHECK(all_have_values);
    // spot-check a few must-have echo lines
    auto has = [&](const char* k) {
        for (const auto& e : sc.echo) {
            if (e.key == k) return true;
        }
        return false;
    };
    CHECK(has("scheme.lambda1_m"));
    CHECK(has("servo.ch2.current.ki_per_s"));
    CHECK(has("counter.nominal_beat_hz"));
    CHECK(has("analysis.transfer_levels_hz"));
}

TEST_CASE("master seed derivation is stable and respects explicit seeds") {
    auto a = scenario_from_text("[run]\nseed = 5\n");
    auto b = scenario_from_text("[run]\nseed = 5\n");
    CHECK(a.servo.channels[0].noise.seed == b.servo.channels[0].noise.seed);
    auto c = scenario_from_text("[run]\nseed = 6\n");
    CHECK(a.servo.channels[0].noise.seed != c.servo.channels[0].noise.seed);

    auto d = scenario_from_text("[noise.ch2]\nseed = 12345\n[run]\nseed = 5\n");
    CHECK(d.servo.channels[1].noise.seed == 12345);
    CHECK(d.servo.channels[0].noise.seed == a.servo.channels[0].noise.seed);
}

TEST_CASE("scan pipeline writes curve files with a centered zero crossing") {
    TempDir dir("trilock_scan_test");
    auto sc = scenario_from_text("name = scan_test\n");
    const auto out = run_scan(sc, dir.str());
    CHECK(std::abs(out.zero_crossing_hz) <= 1e3);
    CHECK(out.calibrated_slope_v_per_hz == doctest::Approx(1e-8).epsilon(1e-6));
    CHECK(out.warnings.empty());
    for (const auto& f : out.files) {
        CHECK(std::filesystem::exists(f));
    }
    const auto curve_text =
        slurp((std::filesystem::path(dir.str()) / "error_curve_axis3.csv").string());
    CHECK(curve_text.rfind("detuning_hz,error_v", 0) == 0);
    const auto echo = slurp((std::filesystem::path(dir.str()) / "config_echo.txt").string());
    CHECK(echo.find("provenance: paper") != std::string::npos);
    CHECK(echo.find("provenance: default") != std::string::npos);
}

TEST_CASE("out-of-range target warns but still runs") {
    TempDir dir("trilock_scan_warn");
    auto sc = scenario_from_text("[target]\nn = 95\nseries = F\n");
    const auto out = run_scan(sc, dir.str());
    REQUIRE(out.warnings.size() == 1);
    CHECK(out.warnings[0].find("beyond demonstrated") != std::string::npos);
}

TEST_CASE("zero-noise run produces all-zero Allan deviations and exact reruns") {
    TempDir dir1("trilock_run_zero1");
    TempDir dir2("trilock_run_zero2");
    auto sc = scenario_from_text(
        "name = zero\n[servo]\nduration_s = 12\nenvelope_eval = direct\n[counter]\ngate_s = 0.1\n");
    const auto out1 = run_scenario(sc, dir1.str());
    const auto out2 = run_scenario(sc, dir2.str());
    for (int i = 0; i < 3; ++i) {
        for (double s : out1.adev[static_cast<std::size_t>(i)].sigmas) {
            CHECK(s == 0.0);
        }
    }
    // byte-identical reruns
    for (const char* name : {"trace_ch1.csv", "trace_ch2.csv", "trace_ch3.csv", "counter.csv",
                             "allan_ch1.csv", "allan_ch2.csv", "allan_ch3.csv"}) {
        const auto a = slurp((std::filesystem::path(dir1.str()) / name).string());
        const auto b = slurp((std::filesystem::path(dir2.str()) / name).string());
        CHECK(a == b);
    }
}

TEST_CASE("noisy run is deterministic in (config, seed) and seed changes outputs") {
    const std::string text =
        "name = noisy\n"
        "[noise.ch1]\nrandom_walk_fm_hz3 = 1e11\n"
        "[noise.ch2]\nrandom_walk_fm_hz3 = 1e11\n"
        "[noise.ch3]\nrandom_walk_fm_hz3 = 1e11\n"
        "[servo]\nduration_s = 8\nenvelope_eval = direct\n"
        "[counter]\ngate_s = 0.1\n";
    TempDir dir1("trilock_run_n1");
    TempDir dir2("trilock_run_n2");
    TempDir dir3("trilock_run_n3");
    auto sc = scenario_from_text(text);
    run_scenario(sc, dir1.str());
    run_scenario(sc, dir2.str());
    auto sc2 = scenario_from_text(text);
    sc2.apply_master_seed(222);
    run_scenario(sc2, dir3.str());
    const auto a = slurp((std::filesystem::path(dir1.str()) / "counter.csv").string());
    const auto b = slurp((std::filesystem::path(dir2.str()) / "counter.csv").string());
    const auto c = slurp((std::filesystem::path(dir3.str()) / "counter.csv").string());
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("transfer pipeline: slopes, report, level exclusion, preconditions") {
    TempDir dir("trilock_transfer");
    auto sc = scenario_from_text(
        "name = tr\n[servo]\nduration_s = 4\nenvelope_eval = direct\nmeasure_window_s = 1.5\n"
        "[servo.ch2]\nengage_time_s = 0.05\n[servo.ch3]\nengage_time_s = 0.1\n");
    const auto out = run_transfer(sc, 1, {-2e6, -1e6, 0.0, 1e6, 2e6}, dir.str());
    REQUIRE(out.have_ch2);
    CHECK(out.to_ch2.slope == doctest::Approx(780.0 / 776.0).epsilon(0.005));
    CHECK(out.to_ch3.slope == doctest::Approx(780.0 / 1260.0).epsilon(0.005));
    CHECK(out.excluded_levels_hz.empty());
    const auto report = slurp((std::filesystem::path(dir.str()) / "transfer_report.txt").string());
    CHECK(report.find("slope_to_ch3") != std::string::npos);

    CHECK_THROWS_AS(run_transfer(sc, 1, {1e6}, dir.str()), config_error);
    CHECK_THROWS_AS(run_transfer(sc, 3, {-1e6, 0.0, 1e6}, dir.str()), config_error);

    // a level far outside capture loses lock and is excluded
    TempDir dir2("trilock_transfer_excl");
    const auto out2 = run_transfer(sc, 1, {-1e6, -0.5e6, 0.0, 0.5e6, 40e6}, dir2.str());
    CHECK(out2.excluded_levels_hz.size() == 1);
    CHECK(out2.levels_hz.size() == 4);
    CHECK(!out2.notes.empty());
}

TEST_CASE("channel-2 sweep reports the model factor with the annotation") {
    TempDir dir("trilock_transfer_ch2");
    auto sc = scenario_from_text(
        "name = tr2\n[servo]\nduration_s = 4\nenvelope_eval = direct\nmeasure_window_s = 1.5\n"
        "[servo.ch2]\nengage_time_s = 0.05\n[servo.ch3]\nengage_time_s = 0.1\n");
    const auto out = run_transfer(sc, 2, {-0.5e6, 0.0, 0.5e6}, dir.str());
    CHECK(!out.have_ch2);
    // linewidth-weighted second-to-third-step transfer: between 0.4x and
    // lambda2/lambda3; the annotation about the measured ~0.1x must be present
    CHECK(out.to_ch3.slope > 0.4);
    CHECK(out.to_ch3.slope < 0.7);
    bool annotated = false;
    for (const auto& n : out.notes) {
        if (n.find("0.1x") != std::string::npos) annotated = true;
    }
    CHECK(annotated);
}

TEST_CASE("adev pipeline reads counter CSVs back") {
    TempDir dir("trilock_adev_io");
    auto sc = scenario_from_text(
        "name = a\n[noise.ch1]\nwhite_fm_hz2_per_hz = 1e6\n"
        "[noise.ch2]\nwhite_fm_hz2_per_hz = 1e6\n[noise.ch3]\nwhite_fm_hz2_per_hz = 1e6\n"
        "[servo]\nduration_s = 12\nenvelope_eval = direct\n[counter]\ngate_s = 0.1\n");
    const auto run_out = run_scenario(sc, dir.str());
    TempDir dir2("trilock_adev_only");
    const auto adev_out = run_adev(
        (std::filesystem::path(dir.str()) / "counter.csv").string(), 0.0, 0.0, dir2.str());
    for (int i = 0; i < 3; ++i) {
        REQUIRE(adev_out.curves[static_cast<std::size_t>(i)].size() > 0);
        CHECK(adev_out.curves[static_cast<std::size_t>(i)].sigmas[0] ==
              doctest::Approx(run_out.adev[static_cast<std::size_t>(i)].sigmas[0]).epsilon(1e-12));
    }
    CHECK_THROWS_AS(run_adev("nonexistent.csv", 0.0, 0.0, dir2.str()), io_error);
}
