#include "trilock/counter.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "trilock/errors.hpp"
#include "trilock/rng.hpp"

namespace trilock {

FrequencyTrace beat_trace(const FrequencyTrace& laser, double nominal_offset_hz) {
    if (!(nominal_offset_hz >= 0.0) || !std::isfinite(nominal_offset_hz)) {
        throw invalid_spec_error("beat_trace: nominal offset must be finite and >= 0");
    }
    FrequencyTrace out;
    out.dt = laser.dt;
    out.origin = "beat vs comb line, nominal " + std::to_string(nominal_offset_hz) + " Hz";
    out.samples.resize(laser.samples.size());
    for (std::size_t k = 0; k < laser.samples.size(); ++k) {
        out.samples[k] = std::abs(nominal_offset_hz + laser.samples[k]);
    }
    return out;
}

std::vector<double> gated_readings(const FrequencyTrace& beat, double gate,
                                   double fm_error_bound_hz, std::uint64_t seed) {
    if (!(beat.dt > 0.0) || !(gate > 0.0)) {
        throw counter_config_error("gated_readings: dt and gate must be positive");
    }
    if (!(fm_error_bound_hz >= 0.0) || !std::isfinite(fm_error_bound_hz)) {
        throw counter_config_error("gated_readings: fm error bound must be finite and >= 0");
    }
    const double ratio = gate / beat.dt;
    const auto m = static_cast<std::size_t>(std::llround(ratio));
    if (m == 0 || std::abs(ratio - static_cast<double>(m)) > 1e-6) {
        throw counter_config_error("gated_readings: gate must be an integer multiple of dt");
    }
    const std::size_t n_gates = beat.samples.size() / m;
    if (n_gates < 2) {
        throw counter_config_error("gated_readings: trace must span at least two gates");
    }

    std::vector<double> readings(n_gates);
    for (std::size_t g = 0; g < n_gates; ++g) {
        // compensated summation keeps gate means exact to ~1e-15 relative
        double sum = 0.0, comp = 0.0;
        for (std::size_t j = g * m; j < (g + 1) * m; ++j) {
            const double y = beat.samples[j] - comp;
            const double t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        readings[g] = sum / static_cast<double>(m);
    }
    if (fm_error_bound_hz > 0.0) {
        UniformStream err(substream_seed(seed, seed_tag::counter_fm_base), fm_error_bound_hz);
        for (auto& r : readings) {
            r += err.next();
        }
    }
    return readings;
}

CounterSeries synchronize(const std::array<std::vector<double>, 3>& per_channel, double gate,
                          double t0, const std::array<bool, 3>& fm_flags) {
    const std::size_t n = per_channel[0].size();
    for (const auto& ch : per_channel) {
        if (ch.size() != n) {
            throw synchronization_error("synchronize: channel reading counts differ");
        }
    }
    if (!(gate > 0.0)) {
        throw synchronization_error("synchronize: gate must be positive");
    }
    CounterSeries series;
    series.gate = gate;
    series.t0 = t0;
    series.fm_flags = fm_flags;
    series.readings = per_channel;
    return series;
}

void write_counter_csv(const std::string& path, const CounterSeries& series) {
    std::ofstream f(path);
    if (!f) {
        throw io_error("cannot open for writing: " + path);
    }
    f << "t_s,ch1_hz,ch2_hz,ch3_hz\n";
    char buf[160];
    for (std::size_t k = 0; k < series.size(); ++k) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", series.timestamp(k),
                      series.readings[0][k], series.readings[1][k], series.readings[2][k]);
        f << buf;
    }
    if (!f) {
        throw io_error("write failed: " + path);
    }
}

CounterSeries read_counter_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw io_error("cannot open for reading: " + path);
    }
    std::string line;
    if (!std::getline(f, line)) {
        throw io_error("empty counter CSV: " + path);
    }
    CounterSeries series;
    std::vector<double> ts;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        double t = 0.0, a = 0.0, b = 0.0, c = 0.0;
        char c1 = 0, c2 = 0, c3 = 0;
        if (!(ss >> t >> c1 >> a >> c2 >> b >> c3 >> c) || c1 != ',' || c2 != ',' || c3 != ',') {
            throw io_error("malformed counter CSV row in " + path + ": " + line);
        }
        ts.push_back(t);
        series.readings[0].push_back(a);
        series.readings[1].push_back(b);
        series.readings[2].push_back(c);
    }
    if (ts.size() < 2) {
        throw io_error("counter CSV needs at least 2 rows: " + path);
    }
    series.t0 = ts[0];
    series.gate = ts[1] - ts[0];
    return series;
}

} // namespace trilock
