#include "trilock/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "trilock/errors.hpp"

namespace trilock {

FrequencyTrace compose(const std::vector<FrequencyTrace>& traces) {
    if (traces.empty()) {
        throw invalid_spec_error("compose: empty trace list");
    }
    const double dt = traces.front().dt;
    const std::size_t n = traces.front().size();
    for (const auto& t : traces) {
        if (t.dt != dt || t.size() != n) {
            throw shape_error("compose: traces must share dt and length");
        }
    }
    FrequencyTrace out;
    out.dt = dt;
    out.origin = "compose";
    out.samples.resize(n);
    std::vector<double> vals(traces.size());
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t j = 0; j < traces.size(); ++j) {
            vals[j] = traces[j].samples[k];
        }
        // canonical summation order: result independent of input ordering
        std::sort(vals.begin(), vals.end());
        double s = 0.0;
        for (double v : vals) s += v;
        out.samples[k] = s;
    }
    return out;
}

FrequencyTrace add_drift(const FrequencyTrace& trace, double rate_hz_per_s) {
    if (!std::isfinite(rate_hz_per_s)) {
        throw invalid_spec_error("add_drift: non-finite rate");
    }
    FrequencyTrace out = trace;
    for (std::size_t k = 0; k < out.samples.size(); ++k) {
        out.samples[k] += rate_hz_per_s * static_cast<double>(k) * out.dt;
    }
    return out;
}

void write_trace_csv(const std::string& path, const FrequencyTrace& trace) {
    std::ofstream f(path);
    if (!f) {
        throw io_error("cannot open for writing: " + path);
    }
    f << "t_s,offset_hz\n";
    char buf[96];
    for (std::size_t k = 0; k < trace.samples.size(); ++k) {
        const double t = static_cast<double>(k) * trace.dt;
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", t, trace.samples[k]);
        f << buf;
    }
    if (!f) {
        throw io_error("write failed: " + path);
    }
}

FrequencyTrace read_trace_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw io_error("cannot open for reading: " + path);
    }
    std::string line;
    if (!std::getline(f, line)) {
        throw io_error("empty trace CSV: " + path);
    }
    FrequencyTrace out;
    out.origin = "csv:" + path;
    double t0 = 0.0, t1 = 0.0;
    std::size_t row = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        double t = 0.0, v = 0.0;
        char comma = 0;
        if (!(ss >> t >> comma >> v) || comma != ',') {
            throw io_error("malformed trace CSV row in " + path + ": " + line);
        }
        if (row == 0) t0 = t;
        if (row == 1) t1 = t;
        out.samples.push_back(v);
        ++row;
    }
    if (out.samples.size() < 2) {
        throw io_error("trace CSV needs at least 2 rows: " + path);
    }
    out.dt = t1 - t0;
    return out;
}

} // namespace trilock
