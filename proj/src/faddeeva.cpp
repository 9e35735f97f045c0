#include "trilock/faddeeva.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace trilock {

namespace {

constexpr int weideman_n = 48;
constexpr double pi = 3.14159265358979323846;

// Rational-expansion coefficients (Weideman 1994). The setup discretizes
// exp(-t^2)(L^2+t^2) on a tangent grid and takes the real DFT; done once.
struct WeidemanTable {
    double big_l;
    std::array<double, weideman_n> poly; // highest degree first

    WeidemanTable() {
        const int n = weideman_n;
        const int m = 2 * n;
        const int m2 = 4 * n;
        big_l = std::sqrt(n / std::sqrt(2.0));

        std::vector<double> f(static_cast<std::size_t>(m2), 0.0);
        for (int i = 1; i < m2; ++i) {
            const double theta = static_cast<double>(i - m) * pi / m;
            const double t = big_l * std::tan(0.5 * theta);
            f[static_cast<std::size_t>(i)] = std::exp(-t * t) * (big_l * big_l + t * t);
        }
        // fftshift then real part of the DFT
        std::vector<double> g(static_cast<std::size_t>(m2));
        for (int i = 0; i < m2; ++i) {
            g[static_cast<std::size_t>(i)] = f[static_cast<std::size_t>((i + m2 / 2) % m2)];
        }
        for (int j = 1; j <= n; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m2; ++i) {
                acc += g[static_cast<std::size_t>(i)] * std::cos(2.0 * pi * j * i / m2);
            }
            // a[j]/m2, reordered so poly[0] carries the highest power
            poly[static_cast<std::size_t>(n - j)] = acc / m2;
        }
    }
};

} // namespace

std::complex<double> faddeeva_w(std::complex<double> z) {
    static const WeidemanTable tab;
    const std::complex<double> iz(-z.imag(), z.real());
    const std::complex<double> denom = tab.big_l - iz;
    const std::complex<double> zz = (tab.big_l + iz) / denom;
    std::complex<double> p = tab.poly[0];
    for (int k = 1; k < weideman_n; ++k) {
        p = p * zz + tab.poly[static_cast<std::size_t>(k)];
    }
    const double inv_sqrt_pi = 0.5641895835477562869;
    return 2.0 * p / (denom * denom) + inv_sqrt_pi / denom;
}

} // namespace trilock
