#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "trilock/errors.hpp"
#include "trilock/ladder.hpp"

using namespace trilock;

TEST_CASE("lorentzian peak, half maximum and 1/5 point") {
    CHECK(lorentzian(0.0, 6e6) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(lorentzian(3e6, 6e6) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(lorentzian(6e6, 6e6) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK_THROWS_AS(lorentzian(1.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(lorentzian(1.0, -5.0), std::domain_error);
}

TEST_CASE("rydberg amplitude normalization and series ratio") {
    const auto f50 = RydbergTarget::make(50, RydbergSeries::F7_2);
    CHECK(rydberg_amplitude(f50) == doctest::Approx(1.0).epsilon(1e-12));

    // at equal effective quantum number the F series is exactly twice P
    RydbergTarget p_eq = RydbergTarget::make(50, RydbergSeries::P3_2);
    p_eq.quantum_defect = RydbergTarget::default_defect_f; // force equal n_eff
    CHECK(rydberg_amplitude(p_eq) / rydberg_amplitude(f50) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("rydberg amplitude n-scaling against the stated formula") {
    const auto p36 = RydbergTarget::make(36, RydbergSeries::P3_2);
    const auto p70 = RydbergTarget::make(70, RydbergSeries::P3_2);
    const double ratio = rydberg_amplitude(p36) / rydberg_amplitude(p70);
    const double expect = std::pow((70.0 - 2.65) / (36.0 - 2.65), 3.0);
    CHECK(ratio == doctest::Approx(expect).epsilon(1e-12));

    // strictly decreasing across the whole demonstrated P range
    double prev = rydberg_amplitude(RydbergTarget::make(36, RydbergSeries::P3_2));
    for (int n = 37; n <= 70; ++n) {
        const double amp = rydberg_amplitude(RydbergTarget::make(n, RydbergSeries::P3_2));
        CHECK(amp < prev);
        prev = amp;
    }
}

TEST_CASE("demonstrated-range warnings are advisory, never fatal") {
    CHECK(RydbergTarget::make(36, RydbergSeries::P3_2).warnings().empty());
    CHECK(RydbergTarget::make(70, RydbergSeries::P3_2).warnings().empty());
    CHECK(RydbergTarget::make(33, RydbergSeries::F7_2).warnings().empty());
    CHECK(RydbergTarget::make(90, RydbergSeries::F7_2).warnings().empty());

    CHECK(RydbergTarget::make(35, RydbergSeries::P3_2).warnings().size() == 1);
    CHECK(RydbergTarget::make(71, RydbergSeries::P3_2).warnings().size() == 1);
    CHECK(RydbergTarget::make(32, RydbergSeries::F7_2).warnings().size() == 1);
    CHECK(RydbergTarget::make(95, RydbergSeries::F7_2).warnings().size() == 1);

    // still usable: amplitude evaluates
    CHECK(rydberg_amplitude(RydbergTarget::make(95, RydbergSeries::F7_2)) > 0.0);

    RydbergTarget bad;
    bad.n = 2;
    bad.quantum_defect = 2.65;
    CHECK_THROWS_AS(validate(bad), invalid_spec_error);
}

TEST_CASE("scheme validation") {
    CHECK_NOTHROW(LadderScheme::rb85_default());
    LadderScheme s = LadderScheme::rb85_default();
    s.gamma2 = 0.0;
    CHECK_THROWS_AS(validate(s), invalid_spec_error);
    s = LadderScheme::rb85_default();
    s.c2 = 0.0;
    CHECK_THROWS_AS(validate(s), invalid_spec_error);
    s = LadderScheme::rb85_default();
    s.c3 = 1.5;
    CHECK_THROWS_AS(validate(s), invalid_spec_error);
    s = LadderScheme::rb85_default();
    s.temperature = -10.0;
    CHECK_THROWS_AS(validate(s), invalid_spec_error);

    // generic (non-Rb) orderings pass plain validation
    s = LadderScheme::rb85_default();
    s.lambda3 = 500e-9;
    CHECK_NOTHROW(validate(s));

    // thermal velocity spread for Rb-85 at 293 K
    CHECK(LadderScheme::rb85_default().sigma_v() == doctest::Approx(169.4).epsilon(0.01));
}
