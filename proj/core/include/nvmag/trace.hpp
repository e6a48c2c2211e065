#pragma once

#include <string>
#include <vector>

#include "nvmag/types.hpp"

namespace nvmag {

/// Complex baseband time series of the reflected signal.
struct ReflectionTrace {
    double sample_rate = 0.0;
    double t0 = 0.0;
    std::vector<cplx> samples;

    double time(std::size_t k) const { return t0 + static_cast<double>(k) / sample_rate; }
    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// CSV with header "t_seconds,re,im".
void write_trace_csv(const ReflectionTrace& trace, const std::string& path);
ReflectionTrace read_trace_csv(const std::string& path);

/// Binary record: one text line
///   "nvmag-trace v1 sample_rate=<hz> t0=<s> count=<n>\n"
/// followed by count little-endian float64 triplets (t, re, im).
void write_trace_binary(const ReflectionTrace& trace, const std::string& path);
ReflectionTrace read_trace_binary(const std::string& path);

}  // namespace nvmag
