#include <doctest.h>

#include <cmath>
#include <vector>

#include "trilock/allan.hpp"
#include "trilock/errors.hpp"
#include "trilock/noise.hpp"

using namespace trilock;

TEST_CASE("constant series has zero deviation at every tau") {
    std::vector<double> y(512, 20e6);
    const auto c = overlapping_adev(y, 1.0, {1, 2, 4, 8, 16, 32});
    REQUIRE(c.size() == 6);
    for (double s : c.sigmas) CHECK(s == 0.0);
}

TEST_CASE("alternating series gives a*sqrt(2) at the base gate") {
    const double a = 350.0;
    std::vector<double> y(1000);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = (i % 2 == 0) ? a : -a;
    const auto c = overlapping_adev(y, 2.0, {1});
    CHECK(c.sigmas[0] == doctest::Approx(a * std::sqrt(2.0)).epsilon(1e-12));
    CHECK(c.taus[0] == 2.0);
}

TEST_CASE("white-FM synthetic matches sqrt(h0/(2 tau)) over octaves") {
    const double h0 = 1e6;
    const std::vector<std::size_t> taus{1, 2, 4, 8, 16, 32, 64};
    std::vector<double> sum_var(taus.size(), 0.0);
    const int n_seeds = 6;
    for (int s = 0; s < n_seeds; ++s) {
        NoiseSpec spec;
        spec.h0 = h0;
        spec.seed = 9000 + static_cast<std::uint64_t>(s);
        const auto tr = synth_power_law_noise(spec, 1.0, 60000);
        const auto c = overlapping_adev(tr.samples, 1.0, taus);
        REQUIRE(c.size() == taus.size());
        for (std::size_t i = 0; i < taus.size(); ++i) sum_var[i] += c.sigmas[i] * c.sigmas[i];
    }
    for (std::size_t i = 0; i < taus.size(); ++i) {
        const double sigma = std::sqrt(sum_var[i] / n_seeds);
        const double expect = std::sqrt(h0 / (2.0 * static_cast<double>(taus[i])));
        CHECK(sigma == doctest::Approx(expect).epsilon(0.05));
    }
}

TEST_CASE("scale equivariance and offset invariance") {
    NoiseSpec spec;
    spec.h0 = 5e4;
    spec.h_rw = 1.0;
    spec.seed = 4;
    const auto tr = synth_power_law_noise(spec, 1.0, 20000);
    const std::vector<std::size_t> taus{1, 4, 16, 64};
    const auto base = overlapping_adev(tr.samples, 1.0, taus);

    const double c = -3.75;
    std::vector<double> scaled(tr.samples);
    for (auto& v : scaled) v *= c;
    const auto sc = overlapping_adev(scaled, 1.0, taus);
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(sc.sigmas[i] == doctest::Approx(std::abs(c) * base.sigmas[i]).epsilon(1e-12));
    }

    // moderate offset: invariance at the 1e-12 level
    std::vector<double> shifted(tr.samples);
    for (auto& v : shifted) v += 1e5;
    const auto sh = overlapping_adev(shifted, 1.0, taus);
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(sh.sigmas[i] == doctest::Approx(base.sigmas[i]).epsilon(1e-12));
    }
    // 20 MHz beat carrier: limited only by input rounding of the samples
    std::vector<double> beat(tr.samples);
    for (auto& v : beat) v += 20e6;
    const auto sb = overlapping_adev(beat, 1.0, taus);
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(sb.sigmas[i] == doctest::Approx(base.sigmas[i]).epsilon(1e-8));
    }
}

TEST_CASE("unsupported taus are omitted with a warning, never zero") {
    std::vector<double> y(20, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<double>(i % 3);
    const auto c = overlapping_adev(y, 1.0, {1, 2, 4, 16});
    CHECK(c.size() == 3); // tau=16 needs 32 readings
    CHECK(c.warnings.size() == 1);
    for (double s : c.sigmas) CHECK(s > 0.0);
}

TEST_CASE("n_pairs bookkeeping") {
    std::vector<double> y(100, 1.0);
    y[50] = 2.0;
    const auto c = overlapping_adev(y, 1.0, {1, 10});
    REQUIRE(c.size() == 2);
    CHECK(c.n_pairs[0] == 99);  // N - 2m + 1 = 100 - 2 + 1
    CHECK(c.n_pairs[1] == 81);  // 100 - 20 + 1
}

TEST_CASE("transfer factor: identity, exact wavelength ratios as synthetic data") {
    std::vector<double> cause{-2e6, -1e6, 0.0, 1e6, 2e6};
    const auto ident = transfer_factor(cause, cause);
    CHECK(ident.slope == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ident.ci_halfwidth < 1e-9);

    // sign-flip invariance
    std::vector<double> effect(cause.size());
    for (std::size_t i = 0; i < cause.size(); ++i) effect[i] = 0.619 * cause[i] + 120.0;
    const auto est = transfer_factor(cause, effect);
    CHECK(est.slope == doctest::Approx(0.619).epsilon(1e-12));
    std::vector<double> neg_cause(cause), neg_effect(effect);
    for (auto& v : neg_cause) v = -v;
    for (auto& v : neg_effect) v = -v;
    const auto est_neg = transfer_factor(neg_cause, neg_effect);
    CHECK(est_neg.slope == doctest::Approx(est.slope).epsilon(1e-12));

    CHECK_THROWS_AS(transfer_factor({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), estimation_error);
    CHECK_THROWS_AS(transfer_factor({1.0, 2.0}, {1.0, 2.0}), estimation_error);
}

TEST_CASE("cross correlation identities and null level") {
    NoiseSpec sa;
    sa.h0 = 1e4;
    sa.seed = 31;
    const auto a = synth_power_law_noise(sa, 1.0, 10000);

    std::vector<double> b(a.samples.size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = 2.0 * a.samples[i] + 5.0;
    CHECK(cross_correlation(a.samples, b) == doctest::Approx(1.0).epsilon(1e-12));

    for (std::size_t i = 0; i < b.size(); ++i) b[i] = -a.samples[i];
    CHECK(cross_correlation(a.samples, b) == doctest::Approx(-1.0).epsilon(1e-12));

    NoiseSpec sb;
    sb.h0 = 1e4;
    sb.seed = 32;
    const auto ind = synth_power_law_noise(sb, 1.0, 10000);
    CHECK(std::abs(cross_correlation(a.samples, ind.samples)) < 0.05);

    std::vector<double> flat(a.samples.size(), 3.0);
    CHECK_THROWS_AS(cross_correlation(a.samples, flat), estimation_error);
    CHECK_THROWS_AS(cross_correlation(flat, flat), estimation_error);
    std::vector<double> tiny(5, 1.0);
    CHECK_THROWS_AS(cross_correlation(tiny, tiny), estimation_error);
}
