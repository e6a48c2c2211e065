#include "nvmag/trace.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "nvmag/error.hpp"

namespace nvmag {

namespace {

static_assert(std::endian::native == std::endian::little, "binary trace I/O assumes little-endian host");

void check_trace(const ReflectionTrace& trace) {
    if (!(trace.sample_rate > 0.0)) throw Error("trace: sample rate must be positive");
}

double rate_from_times(const std::vector<double>& t, const std::string& path) {
    if (t.size() < 2) throw Error("trace: need at least two samples to infer the rate: " + path);
    const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
    if (!(dt > 0.0)) throw Error("trace: time column is not increasing: " + path);
    for (std::size_t k = 1; k < t.size(); ++k) {
        if (std::abs((t[k] - t[k - 1]) - dt) > 1e-6 * dt + 1e-15) {
            throw Error("trace: time column is not uniformly sampled: " + path);
        }
    }
    return 1.0 / dt;
}

}  // namespace

void write_trace_csv(const ReflectionTrace& trace, const std::string& path) {
    check_trace(trace);
    std::ofstream os(path);
    if (!os) throw Error("trace: cannot open for writing: " + path);
    os << "t_seconds,re,im\n" << std::setprecision(17);
    for (std::size_t k = 0; k < trace.samples.size(); ++k) {
        os << trace.time(k) << ',' << trace.samples[k].real() << ',' << trace.samples[k].imag() << '\n';
    }
    if (!os) throw Error("trace: write failed: " + path);
}

ReflectionTrace read_trace_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("trace: cannot open: " + path);
    std::string line;
    std::getline(is, line);
    if (line.rfind("t_seconds,re,im", 0) != 0) throw Error("trace: bad CSV header in " + path);
    std::vector<double> t;
    ReflectionTrace tr;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        double tt, re, im;
        if (!(ls >> tt >> re >> im)) {
            throw Error("trace: malformed row " + std::to_string(lineno) + " in " + path);
        }
        t.push_back(tt);
        tr.samples.emplace_back(re, im);
    }
    tr.sample_rate = rate_from_times(t, path);
    tr.t0 = t.front();
    return tr;
}

void write_trace_binary(const ReflectionTrace& trace, const std::string& path) {
    check_trace(trace);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("trace: cannot open for writing: " + path);
    std::ostringstream hdr;
    hdr << std::setprecision(17) << "nvmag-trace v1 sample_rate=" << trace.sample_rate << " t0=" << trace.t0
        << " count=" << trace.samples.size() << '\n';
    os << hdr.str();
    for (std::size_t k = 0; k < trace.samples.size(); ++k) {
        const double rec[3] = {trace.time(k), trace.samples[k].real(), trace.samples[k].imag()};
        os.write(reinterpret_cast<const char*>(rec), sizeof rec);
    }
    if (!os) throw Error("trace: write failed: " + path);
}

ReflectionTrace read_trace_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("trace: cannot open: " + path);
    std::string line;
    std::getline(is, line);
    std::istringstream hs(line);
    std::string magic, version, f_rate, f_t0, f_count;
    hs >> magic >> version >> f_rate >> f_t0 >> f_count;
    if (magic != "nvmag-trace" || version != "v1" || f_rate.rfind("sample_rate=", 0) != 0 ||
        f_t0.rfind("t0=", 0) != 0 || f_count.rfind("count=", 0) != 0) {
        throw Error("trace: bad binary header in " + path);
    }
    ReflectionTrace tr;
    tr.sample_rate = std::stod(f_rate.substr(12));
    tr.t0 = std::stod(f_t0.substr(3));
    const auto count = static_cast<std::size_t>(std::stoull(f_count.substr(6)));
    check_trace(tr);
    tr.samples.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
        double rec[3];
        if (!is.read(reinterpret_cast<char*>(rec), sizeof rec)) {
            throw Error("trace: truncated binary payload in " + path);
        }
        tr.samples[k] = {rec[1], rec[2]};
    }
    return tr;
}

}  // namespace nvmag
