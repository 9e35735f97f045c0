#include "trilock/allan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "trilock/errors.hpp"

namespace trilock {

double AllanCurve::sigma_at(double tau) const {
    for (std::size_t i = 0; i < taus.size(); ++i) {
        if (std::abs(taus[i] - tau) <= 1e-9 * tau) return sigmas[i];
    }
    throw estimation_error("AllanCurve: no sigma computed at requested tau");
}

AllanCurve overlapping_adev(const std::vector<double>& readings, double gate,
                            const std::vector<std::size_t>& tau_multiples) {
    if (!(gate > 0.0)) {
        throw invalid_spec_error("overlapping_adev: gate must be positive");
    }
    const std::size_t n = readings.size();
    if (n < 2) {
        throw invalid_spec_error("overlapping_adev: need at least 2 readings");
    }
    // center on the mean before prefix-summing: the deviation is offset-free
    // mathematically, and centering keeps it that way numerically for
    // readings sitting on a large carrier (e.g. a 20 MHz beat)
    double mean = 0.0;
    for (double r : readings) mean += r;
    mean /= static_cast<double>(n);
    // prefix sums: block mean over [i, i+m) is (p[i+m]-p[i])/m
    std::vector<double> p(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        p[i + 1] = p[i] + (readings[i] - mean);
    }

    AllanCurve curve;
    std::size_t last_m = 0;
    for (std::size_t m : tau_multiples) {
        if (m == 0 || m <= last_m) {
            throw invalid_spec_error("overlapping_adev: tau multiples must be strictly increasing and > 0");
        }
        last_m = m;
        if (n < 2 * m) {
            curve.warnings.push_back("tau=" + std::to_string(static_cast<double>(m) * gate) +
                                     "s omitted: series too short");
            continue;
        }
        const std::size_t pairs = n - 2 * m + 1;
        double acc = 0.0;
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i + 2 * m <= n; ++i) {
            const double d = (p[i + 2 * m] - 2.0 * p[i + m] + p[i]) * inv_m;
            acc += d * d;
        }
        const double avar = acc / (2.0 * static_cast<double>(pairs));
        curve.taus.push_back(static_cast<double>(m) * gate);
        curve.sigmas.push_back(std::sqrt(avar));
        curve.n_pairs.push_back(pairs);
    }
    return curve;
}

std::vector<std::size_t> octave_tau_multiples(std::size_t n_readings, double gate,
                                              double max_tau) {
    std::vector<std::size_t> ms;
    for (std::size_t m = 1; static_cast<double>(m) * gate <= max_tau && 2 * m <= n_readings;
         m *= 2) {
        ms.push_back(m);
    }
    return ms;
}

namespace {

// two-sided 95% Student t quantiles, dof 1..30
constexpr double t95_table[30] = {
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
    2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
    2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};

double t95(std::size_t dof) {
    if (dof == 0) return 0.0;
    if (dof <= 30) return t95_table[dof - 1];
    return 1.96;
}

} // namespace

TransferEstimate transfer_factor(const std::vector<double>& cause,
                                 const std::vector<double>& effect) {
    if (cause.size() != effect.size()) {
        throw estimation_error("transfer_factor: cause/effect length mismatch");
    }
    const std::size_t n = cause.size();
    std::vector<double> levels = cause;
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    if (levels.size() < 3) {
        throw estimation_error("transfer_factor: need >= 3 distinct cause levels");
    }

    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += cause[i];
        my += effect[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (cause[i] - mx) * (cause[i] - mx);
        sxy += (cause[i] - mx) * (effect[i] - my);
    }
    if (sxx <= 0.0) {
        throw estimation_error("transfer_factor: degenerate cause variance");
    }

    TransferEstimate est;
    est.n = n;
    est.slope = sxy / sxx;
    est.intercept = my - est.slope * mx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = effect[i] - (est.intercept + est.slope * cause[i]);
        ssr += r * r;
    }
    if (n > 2) {
        const double se = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
        est.ci_halfwidth = t95(n - 2) * se;
    }
    return est;
}

double cross_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw estimation_error("cross_correlation: length mismatch");
    }
    const std::size_t n = a.size();
    if (n < 10) {
        throw estimation_error("cross_correlation: need >= 10 samples");
    }
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
        sab += (a[i] - ma) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) {
        throw estimation_error("cross_correlation: zero variance series");
    }
    return sab / std::sqrt(saa * sbb);
}

void write_allan_csv(const std::string& path, const AllanCurve& curve) {
    std::ofstream f(path);
    if (!f) {
        throw io_error("cannot open for writing: " + path);
    }
    f << "tau_s,sigma_hz,n_pairs\n";
    char buf[96];
    for (std::size_t i = 0; i < curve.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%zu\n", curve.taus[i], curve.sigmas[i],
                      curve.n_pairs[i]);
        f << buf;
    }
    if (!f) {
        throw io_error("write failed: " + path);
    }
}

} // namespace trilock
