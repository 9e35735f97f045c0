#include "trilock/detector.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <vector>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

#include "trilock/errors.hpp"
#include "trilock/faddeeva.hpp"

namespace trilock {

namespace {

constexpr double pi = 3.14159265358979323846;
constexpr double domain_sigmas = 8.0; // Gaussian weight beyond this is < 1e-14

// Everything in velocity space: Lorentzian j has center a_j = +-d_j*lambda_j
// and HWHM b_j = gamma_j*lambda_j/2.
struct VelocityIntegrand {
    double inv_two_sigma_sq;
    double gauss_norm;
    double a1, b1, a2, b2, a3, b3;
    double c2, c3a; // c3a = c3 * rydberg amplitude
    bool with_third;

    double operator()(double v) const {
        const double w = gauss_norm * std::exp(-v * v * inv_two_sigma_sq);
        const double x1 = v - a1;
        const double x2 = v - a2;
        const double l1 = b1 * b1 / (x1 * x1 + b1 * b1);
        const double l2 = b2 * b2 / (x2 * x2 + b2 * b2);
        double term = c2;
        if (with_third) {
            const double x3 = v - a3;
            term += c3a * (b3 * b3 / (x3 * x3 + b3 * b3));
        }
        return w * l1 * l2 * term;
    }
};

double integrand_thunk(double v, void* params) {
    return (*static_cast<const VelocityIntegrand*>(params))(v);
}

struct WorkspaceDeleter {
    void operator()(gsl_integration_workspace* w) const { gsl_integration_workspace_free(w); }
};

constexpr std::size_t workspace_limit = 2048;

gsl_integration_workspace* workspace() {
    static const int handler_off = [] {
        gsl_set_error_handler_off();
        return 0;
    }();
    (void)handler_off;
    thread_local std::unique_ptr<gsl_integration_workspace, WorkspaceDeleter> ws(
        gsl_integration_workspace_alloc(workspace_limit));
    return ws.get();
}

double integrate_velocity(VelocityIntegrand q, double sigma_v, double epsrel, double scale) {
    const double v_max = domain_sigmas * sigma_v;
    std::vector<double> pts;
    pts.push_back(-v_max);
    double centers[3] = {q.a1, q.a2, q.with_third ? q.a3 : q.a1};
    const int n_centers = q.with_third ? 3 : 2;
    std::vector<double> interior;
    for (int i = 0; i < n_centers; ++i) {
        if (std::abs(centers[i]) < v_max * (1.0 - 1e-9)) {
            interior.push_back(centers[i]);
        }
    }
    std::sort(interior.begin(), interior.end());
    const double dedup_tol = 1e-9 * sigma_v;
    for (double c : interior) {
        if (pts.size() == 1 || c - pts.back() > dedup_tol) {
            pts.push_back(c);
        }
    }
    pts.push_back(v_max);

    gsl_function f;
    f.function = &integrand_thunk;
    f.params = &q;
    double result = 0.0, abserr = 0.0;
    const double epsabs = 1e-16 * scale;
    const int rc = gsl_integration_qagp(&f, pts.data(), pts.size(), epsabs, epsrel,
                                        workspace_limit, workspace(), &result, &abserr);
    if (rc != GSL_SUCCESS && abserr > 100.0 * std::max(epsabs, epsrel * std::abs(result))) {
        std::ostringstream msg;
        msg << "velocity quadrature failed: " << gsl_strerror(rc) << " (result=" << result
            << ", abserr=" << abserr << ", epsrel=" << epsrel << ", split points=" << pts.size()
            << ")";
        throw numeric_error(msg.str());
    }
    return result;
}

VelocityIntegrand make_integrand(double d1, double d2, double d3, const LadderScheme& s,
                                 double c3a, bool with_third) {
    if (!std::isfinite(d1) || !std::isfinite(d2) || !std::isfinite(d3)) {
        throw invalid_spec_error("detector_signal: non-finite detuning");
    }
    const double sigma = s.sigma_v();
    VelocityIntegrand q;
    q.inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
    q.gauss_norm = 1.0 / (sigma * std::sqrt(2.0 * pi));
    q.a1 = d1 * s.lambda1;
    q.b1 = 0.5 * s.gamma1 * s.lambda1;
    q.a2 = d2 * s.lambda2;
    q.b2 = 0.5 * s.gamma2 * s.lambda2;
    // counter-propagating third beam flips the sign of its Doppler term
    q.a3 = (s.copropagating ? 1.0 : -1.0) * d3 * s.lambda3;
    q.b3 = 0.5 * s.gamma3 * s.lambda3;
    q.c2 = s.c2;
    q.c3a = c3a;
    q.with_third = with_third;
    return q;
}

// ---- closed form via partial fractions and the Faddeeva function ----

// Int W(v) * prod_j b_j^2 / ((v-a_j)^2 + b_j^2) dv
//   = prod_j b_j^2 * 2 * sum_j Re[ c_j * H(z_j) ],  z_j = a_j + i b_j,
// c_j the residue factor and H(z) = i sqrt(pi) w(z/(sqrt2 sigma)) / (sqrt2 sigma).
// Returns NaN when poles nearly coincide (caller falls back to quadrature).
double lorentzian_product_gauss(const std::complex<double>* z, int k, double sigma) {
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            const double sep = std::abs(z[i] - z[j]);
            if (sep < 1e-4 * (z[i].imag() + z[j].imag())) {
                return std::numeric_limits<double>::quiet_NaN();
            }
        }
    }
    const double s2 = std::sqrt(2.0) * sigma;
    const std::complex<double> h_pref(0.0, std::sqrt(pi) / s2);
    double acc = 0.0;
    for (int j = 0; j < k; ++j) {
        std::complex<double> denom(0.0, 2.0 * z[j].imag()); // z_j - conj(z_j)
        for (int m = 0; m < k; ++m) {
            if (m == j) continue;
            denom *= (z[j] - z[m]) * (z[j] - std::conj(z[m]));
        }
        const std::complex<double> h = h_pref * faddeeva_w(z[j] / s2);
        acc += (h / denom).real();
    }
    double pref = 2.0;
    for (int j = 0; j < k; ++j) {
        pref *= z[j].imag() * z[j].imag();
    }
    return pref * acc;
}

} // namespace

double detector_signal(double d1_hz, double d2_hz, double d3_hz, const LadderScheme& scheme,
                       const RydbergTarget& target, double epsrel) {
    validate(scheme);
    const double c3a = scheme.c3 * rydberg_amplitude(target);
    const auto q = make_integrand(d1_hz, d2_hz, d3_hz, scheme, c3a, true);
    // gain stays outside the quadrature so the result is exactly linear in it
    const double scale = scheme.c2 + c3a;
    return scheme.gain * integrate_velocity(q, scheme.sigma_v(), epsrel, scale);
}

double two_step_signal(double d1_hz, double d2_hz, const LadderScheme& scheme, double epsrel) {
    validate(scheme);
    const auto q = make_integrand(d1_hz, d2_hz, 0.0, scheme, 0.0, false);
    return scheme.gain * integrate_velocity(q, scheme.sigma_v(), epsrel, scheme.c2);
}

double detector_signal_fast(double d1_hz, double d2_hz, double d3_hz,
                            const LadderScheme& scheme, const RydbergTarget& target) {
    const double sigma = scheme.sigma_v();
    const double c3a = scheme.c3 * rydberg_amplitude(target);
    const auto q = make_integrand(d1_hz, d2_hz, d3_hz, scheme, c3a, true);
    const std::complex<double> z12[2] = {{q.a1, q.b1}, {q.a2, q.b2}};
    const std::complex<double> z123[3] = {{q.a1, q.b1}, {q.a2, q.b2}, {q.a3, q.b3}};
    const double i12 = lorentzian_product_gauss(z12, 2, sigma);
    const double i123 = lorentzian_product_gauss(z123, 3, sigma);
    if (std::isnan(i12) || std::isnan(i123)) {
        return detector_signal(d1_hz, d2_hz, d3_hz, scheme, target);
    }
    return scheme.gain * (scheme.c2 * i12 + c3a * i123);
}

double two_step_signal_fast(double d1_hz, double d2_hz, const LadderScheme& scheme) {
    const double sigma = scheme.sigma_v();
    const auto q = make_integrand(d1_hz, d2_hz, 0.0, scheme, 0.0, false);
    const std::complex<double> z12[2] = {{q.a1, q.b1}, {q.a2, q.b2}};
    const double i12 = lorentzian_product_gauss(z12, 2, sigma);
    if (std::isnan(i12)) {
        return two_step_signal(d1_hz, d2_hz, scheme);
    }
    return scheme.gain * scheme.c2 * i12;
}

SignalEvaluator::SignalEvaluator(const LadderScheme& scheme, const RydbergTarget& target)
    : scheme_(scheme), target_(target) {
    validate(scheme);
    c3a_ = scheme.c3 * rydberg_amplitude(target);
    sigma_ = scheme.sigma_v();
}

double SignalEvaluator::three_step(double d1_hz, double d2_hz, double d3_hz) const {
    const auto q = make_integrand(d1_hz, d2_hz, d3_hz, scheme_, c3a_, true);
    const std::complex<double> z123[3] = {{q.a1, q.b1}, {q.a2, q.b2}, {q.a3, q.b3}};
    const std::complex<double> z12[2] = {{q.a1, q.b1}, {q.a2, q.b2}};
    const double i12 = lorentzian_product_gauss(z12, 2, sigma_);
    const double i123 = lorentzian_product_gauss(z123, 3, sigma_);
    if (std::isnan(i12) || std::isnan(i123)) {
        return detector_signal(d1_hz, d2_hz, d3_hz, scheme_, target_);
    }
    return scheme_.gain * (scheme_.c2 * i12 + c3a_ * i123);
}

double SignalEvaluator::two_step(double d1_hz, double d2_hz) const {
    const auto q = make_integrand(d1_hz, d2_hz, 0.0, scheme_, 0.0, false);
    const std::complex<double> z12[2] = {{q.a1, q.b1}, {q.a2, q.b2}};
    const double i12 = lorentzian_product_gauss(z12, 2, sigma_);
    if (std::isnan(i12)) {
        return two_step_signal(d1_hz, d2_hz, scheme_);
    }
    return scheme_.gain * scheme_.c2 * i12;
}

std::vector<LineshapePoint> scan_lineshape(const LadderScheme& scheme,
                                           const RydbergTarget& target, int axis,
                                           double range_hz, double fixed_a, double fixed_b,
                                           std::size_t n_points) {
    if (axis < 1 || axis > 3) {
        throw invalid_spec_error("scan_lineshape: axis must be 1, 2 or 3");
    }
    if (!(range_hz > 0.0)) {
        throw invalid_spec_error("scan_lineshape: range must be positive");
    }
    if (n_points < 51) {
        throw invalid_spec_error("scan_lineshape: need at least 51 points");
    }
    std::vector<LineshapePoint> out;
    out.reserve(n_points);
    const double center = 0.5 * static_cast<double>(n_points - 1);
    const double step = range_hz / center;
    for (std::size_t j = 0; j < n_points; ++j) {
        // symmetric grid: delta(n-1-j) == -delta(j) exactly
        const double delta = (static_cast<double>(j) - center) * step;
        double d1 = fixed_a, d2 = fixed_b, d3 = 0.0;
        switch (axis) {
            case 1: d1 = delta; d2 = fixed_a; d3 = fixed_b; break;
            case 2: d1 = fixed_a; d2 = delta; d3 = fixed_b; break;
            default: d1 = fixed_a; d2 = fixed_b; d3 = delta; break;
        }
        out.push_back({delta, detector_signal(d1, d2, d3, scheme, target)});
    }
    return out;
}

void write_lineshape_csv(const std::string& path, const std::vector<LineshapePoint>& curve) {
    std::ofstream f(path);
    if (!f) {
        throw io_error("cannot open for writing: " + path);
    }
    f << "detuning_hz,signal_v\n";
    char buf[96];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", p.detuning_hz, p.signal_v);
        f << buf;
    }
    if (!f) {
        throw io_error("write failed: " + path);
    }
}

} // namespace trilock
