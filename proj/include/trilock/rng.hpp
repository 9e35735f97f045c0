#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace trilock {

/// SplitMix64 mixing step. Used only to derive substream seeds, never as the
/// main generator.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Fixed seed-splitting rule: one master seed plus a component tag yields an
/// independent substream seed. Adding a component to a simulation never
/// perturbs the samples drawn by another component.
constexpr std::uint64_t substream_seed(std::uint64_t master, std::uint64_t tag) {
    return splitmix64(splitmix64(master) ^ splitmix64(~tag));
}

/// Component tags for substream derivation. Values are part of the
/// reproducibility contract; do not renumber.
namespace seed_tag {
inline constexpr std::uint64_t white_fm = 1;
inline constexpr std::uint64_t flicker_fm = 2;
inline constexpr std::uint64_t random_walk_fm = 3;
inline constexpr std::uint64_t counter_fm_base = 100; // +channel index
inline constexpr std::uint64_t channel_base = 1000;   // +channel index, then component
} // namespace seed_tag

/// Deterministic unit-Gaussian stream: mt19937_64 (fully specified by the
/// standard) mapped to (0,1] and fed through Box-Muller. Same seed, same
/// sequence on every platform up to libm rounding.
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open_closed();
        const double u2 = uniform_open_closed();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * pi_ * u2;
        spare_ = mag * std::sin(ang);
        have_spare_ = true;
        return mag * std::cos(ang);
    }

private:
    // Top 53 bits shifted into (0,1]; never returns 0, so log() is safe.
    double uniform_open_closed() {
        const std::uint64_t x = engine_();
        return static_cast<double>((x >> 11) + 1) * 0x1.0p-53;
    }

    static constexpr double pi_ = 3.14159265358979323846;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Deterministic uniform stream on [-bound, +bound].
class UniformStream {
public:
    UniformStream(std::uint64_t seed, double bound) : engine_(seed), bound_(bound) {}

    double next() {
        const std::uint64_t x = engine_();
        const double u = static_cast<double>(x >> 11) * 0x1.0p-53; // [0,1)
        return bound_ * (2.0 * u - 1.0);
    }

private:
    std::mt19937_64 engine_;
    double bound_;
};

} // namespace trilock
