#include "trilock/lockin.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "trilock/errors.hpp"

namespace trilock {

namespace {

constexpr double pi = 3.14159265358979323846;

// Midpoint phase grid with exact antisymmetry: sin(th_{N-1-j}) == -sin(th_j)
// bit for bit, so even signals demodulate to exactly zero.
const std::vector<double>& sin_table(int n) {
    thread_local int cached_n = 0;
    thread_local std::vector<double> table;
    if (cached_n != n) {
        table.assign(static_cast<std::size_t>(n), 0.0);
        for (int j = 0; j < n / 2; ++j) {
            const double theta = 2.0 * pi * (static_cast<double>(j) + 0.5) / n;
            table[static_cast<std::size_t>(j)] = std::sin(theta);
            table[static_cast<std::size_t>(n - 1 - j)] = -table[static_cast<std::size_t>(j)];
        }
        cached_n = n;
    }
    return table;
}

} // namespace

void validate(const DitherSpec& dither) {
    if (!(dither.depth >= 0.0) || !std::isfinite(dither.depth)) {
        throw invalid_spec_error("DitherSpec: depth must be finite and >= 0");
    }
    if (!(dither.f_mod > 0.0) || !(dither.tau_lp > 0.0)) {
        throw invalid_spec_error("DitherSpec: f_mod and tau_lp must be positive");
    }
    if (!std::isfinite(dither.phase)) {
        throw invalid_spec_error("DitherSpec: non-finite phase");
    }
}

bool demod_ripple_warning(const DitherSpec& dither) {
    return dither.f_mod * dither.tau_lp < 1.0;
}

double dither_average(const std::function<double(double)>& signal, double center,
                      const DitherSpec& dither, int n_phases) {
    validate(dither);
    if (n_phases < 4 || n_phases % 2 != 0) {
        throw invalid_spec_error("dither_average: need an even phase count >= 4");
    }
    if (dither.depth == 0.0) {
        return 0.0;
    }
    const auto& sins = sin_table(n_phases);
    const double exc = dither.excursion();
    double acc = 0.0;
    for (int j = 0; j < n_phases; ++j) {
        const double s = sins[static_cast<std::size_t>(j)];
        acc += signal(center + exc * s) * s;
    }
    return 2.0 * acc / static_cast<double>(n_phases);
}

ErrorCurve static_error_curve(const LadderScheme& scheme, const RydbergTarget& target,
                              const DitherSpec& dither, int axis,
                              const std::vector<double>& grid, double fixed_a,
                              double fixed_b, int n_phases) {
    validate(dither);
    if (axis < 1 || axis > 3) {
        throw invalid_spec_error("static_error_curve: axis must be 1, 2 or 3");
    }
    if (grid.size() < 2) {
        throw invalid_spec_error("static_error_curve: grid needs >= 2 points");
    }
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (!(grid[i] > grid[i - 1])) {
            throw invalid_spec_error("static_error_curve: grid must be strictly increasing");
        }
    }
    if (n_phases < 64) {
        n_phases = 64;
    }

    // tight quadrature so odd symmetry survives to the 1e-9 level
    const double epsrel = 1e-11;
    auto signal = [&](double delta) {
        switch (axis) {
            case 1: return detector_signal(delta, fixed_a, fixed_b, scheme, target, epsrel);
            case 2: return detector_signal(fixed_a, delta, fixed_b, scheme, target, epsrel);
            default: return detector_signal(fixed_a, fixed_b, delta, scheme, target, epsrel);
        }
    };
    const std::function<double(double)> signal_fn = signal;

    ErrorCurve curve;
    curve.grid = grid;
    curve.values.reserve(grid.size());
    for (double g : grid) {
        curve.values.push_back(dither_average(signal_fn, g, dither, n_phases));
    }

    if (dither.depth == 0.0) {
        // no modulation, no first harmonic: degenerate all-zero curve
        curve.slope_at_zero = 0.0;
        curve.zero_crossing = 0.0;
        return curve;
    }

    // sign change closest to zero detuning is taken as the lock point
    std::size_t best = grid.size();
    double best_dist = 0.0;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        if (curve.values[i] == 0.0 ||
            (curve.values[i] < 0.0) != (curve.values[i + 1] < 0.0)) {
            const double mid = 0.5 * (grid[i] + grid[i + 1]);
            if (best == grid.size() || std::abs(mid) < best_dist) {
                best = i;
                best_dist = std::abs(mid);
            }
        }
    }
    if (best == grid.size()) {
        throw no_lock_point_error("static_error_curve: no sign change on the grid");
    }

    double lo = grid[best], hi = grid[best + 1];
    double flo = curve.values[best];
    for (int it = 0; it < 60 && hi - lo > 50.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = dither_average(signal_fn, mid, dither, n_phases);
        if (fm == 0.0) {
            lo = hi = mid;
            break;
        }
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    curve.zero_crossing = 0.5 * (lo + hi);

    const double h = 1e3;
    const double ep = dither_average(signal_fn, curve.zero_crossing + h, dither, n_phases);
    const double em = dither_average(signal_fn, curve.zero_crossing - h, dither, n_phases);
    curve.slope_at_zero = (ep - em) / (2.0 * h);
    return curve;
}

std::vector<double> demodulate(const std::vector<double>& detector_v, double dt,
                               const DitherSpec& dither, LockinState* state) {
    validate(dither);
    if (!(dt > 0.0)) {
        throw invalid_spec_error("demodulate: dt must be positive");
    }
    if (dt > 1.0 / (20.0 * dither.f_mod)) {
        throw sampling_error("demodulate: dt too coarse, need dt <= 1/(20 f_mod)");
    }
    LockinState local;
    LockinState& st = state ? *state : local;
    const double a = std::exp(-dt / dither.tau_lp);
    const double b = 1.0 - a;
    const double omega = 2.0 * pi * dither.f_mod;
    std::vector<double> out;
    out.reserve(detector_v.size());
    for (double x : detector_v) {
        const double t = static_cast<double>(st.sample_index) * dt;
        const double u = 2.0 * x * std::sin(omega * t + dither.phase);
        st.y = a * st.y + b * u;
        out.push_back(st.y);
        ++st.sample_index;
    }
    return out;
}

double calibrate_slope(const ErrorCurve& curve, double target_slope_v_per_hz) {
    if (curve.slope_at_zero == 0.0 || !std::isfinite(curve.slope_at_zero)) {
        throw calibration_error("calibrate_slope: curve slope is zero or non-finite");
    }
    if (!std::isfinite(target_slope_v_per_hz) || target_slope_v_per_hz == 0.0) {
        throw calibration_error("calibrate_slope: bad target slope");
    }
    return target_slope_v_per_hz / curve.slope_at_zero;
}

void write_error_curve_csv(const std::string& path, const ErrorCurve& curve) {
    std::ofstream f(path);
    if (!f) {
        throw io_error("cannot open for writing: " + path);
    }
    f << "detuning_hz,error_v\n";
    char buf[96];
    for (std::size_t i = 0; i < curve.grid.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", curve.grid[i], curve.values[i]);
        f << buf;
    }
    if (!f) {
        throw io_error("write failed: " + path);
    }
}

std::vector<double> symmetric_grid(double range_hz, std::size_t n) {
    if (!(range_hz > 0.0) || n < 2) {
        throw invalid_spec_error("symmetric_grid: bad range or point count");
    }
    std::vector<double> g(n);
    const double center = 0.5 * static_cast<double>(n - 1);
    const double step = range_hz / center;
    for (std::size_t j = 0; j < n; ++j) {
        g[j] = (static_cast<double>(j) - center) * step;
    }
    return g;
}

} // namespace trilock
