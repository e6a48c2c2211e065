#include "nvmag/spectrum.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>

#include "nvmag/error.hpp"

namespace nvmag {

namespace {

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct PlanGuard {
    fftw_plan plan = nullptr;
    ~PlanGuard() {
        if (plan) {
            std::lock_guard lock(planner_mutex());
            fftw_destroy_plan(plan);
        }
    }
};

template <class T>
struct FftwBuffer {
    T* ptr;
    explicit FftwBuffer(std::size_t n) : ptr(static_cast<T*>(fftw_malloc(sizeof(T) * std::max<std::size_t>(n, 1)))) {
        if (!ptr) throw Error("fft: allocation failed");
    }
    ~FftwBuffer() { fftw_free(ptr); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
};

}  // namespace

std::vector<cplx> rfft(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n == 0) throw Error("rfft: empty input");
    FftwBuffer<double> in(n);
    FftwBuffer<fftw_complex> out(n / 2 + 1);
    PlanGuard g;
    {
        std::lock_guard lock(planner_mutex());
        g.plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.ptr, out.ptr, FFTW_ESTIMATE);
    }
    std::copy(x.begin(), x.end(), in.ptr);
    fftw_execute(g.plan);
    std::vector<cplx> res(n / 2 + 1);
    for (std::size_t k = 0; k < res.size(); ++k) res[k] = {out.ptr[k][0], out.ptr[k][1]};
    return res;
}

std::vector<double> irfft(std::span<const cplx> half, std::size_t n) {
    if (n == 0 || half.size() != n / 2 + 1) throw Error("irfft: need n/2 + 1 input bins");
    FftwBuffer<fftw_complex> in(half.size());
    FftwBuffer<double> out(n);
    PlanGuard g;
    {
        std::lock_guard lock(planner_mutex());
        g.plan = fftw_plan_dft_c2r_1d(static_cast<int>(n), in.ptr, out.ptr, FFTW_ESTIMATE);
    }
    for (std::size_t k = 0; k < half.size(); ++k) {
        in.ptr[k][0] = half[k].real();
        in.ptr[k][1] = half[k].imag();
    }
    fftw_execute(g.plan);
    return std::vector<double>(out.ptr, out.ptr + n);
}

std::vector<cplx> fft(std::span<const cplx> x) {
    const std::size_t n = x.size();
    if (n == 0) throw Error("fft: empty input");
    FftwBuffer<fftw_complex> in(n);
    FftwBuffer<fftw_complex> out(n);
    PlanGuard g;
    {
        std::lock_guard lock(planner_mutex());
        g.plan = fftw_plan_dft_1d(static_cast<int>(n), in.ptr, out.ptr, FFTW_FORWARD, FFTW_ESTIMATE);
    }
    for (std::size_t k = 0; k < n; ++k) {
        in.ptr[k][0] = x[k].real();
        in.ptr[k][1] = x[k].imag();
    }
    fftw_execute(g.plan);
    std::vector<cplx> res(n);
    for (std::size_t k = 0; k < n; ++k) res[k] = {out.ptr[k][0], out.ptr[k][1]};
    return res;
}

std::vector<double> Psd::asd() const {
    std::vector<double> a(psd.size());
    std::transform(psd.begin(), psd.end(), a.begin(), [](double p) { return std::sqrt(p); });
    return a;
}

Psd welch_psd(std::span<const double> x, double sample_rate, std::size_t segment_samples, double overlap) {
    if (!(sample_rate > 0.0)) throw Error("welch_psd: sample rate must be positive");
    if (segment_samples < 8 || segment_samples > x.size()) {
        throw Error("welch_psd: segment length must be between 8 samples and the series length");
    }
    if (overlap < 0.0 || overlap >= 1.0) throw Error("welch_psd: overlap must lie in [0, 1)");
    const std::size_t n = segment_samples;
    const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n * (1.0 - overlap))));

    std::vector<double> w(n);
    double wss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        w[k] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(k) / static_cast<double>(n));
        wss += w[k] * w[k];
    }

    FftwBuffer<double> in(n);
    FftwBuffer<fftw_complex> out(n / 2 + 1);
    PlanGuard g;
    {
        std::lock_guard lock(planner_mutex());
        g.plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.ptr, out.ptr, FFTW_ESTIMATE);
    }

    Psd res;
    res.df = sample_rate / static_cast<double>(n);
    res.psd.assign(n / 2 + 1, 0.0);
    for (std::size_t start = 0; start + n <= x.size(); start += hop) {
        double mean = 0.0;
        for (std::size_t k = 0; k < n; ++k) mean += x[start + k];
        mean /= static_cast<double>(n);
        for (std::size_t k = 0; k < n; ++k) in.ptr[k] = (x[start + k] - mean) * w[k];
        fftw_execute(g.plan);
        for (std::size_t k = 0; k < res.psd.size(); ++k) {
            res.psd[k] += out.ptr[k][0] * out.ptr[k][0] + out.ptr[k][1] * out.ptr[k][1];
        }
        ++res.segments;
    }
    const double scale = 1.0 / (sample_rate * wss * res.segments);
    res.freqs.resize(res.psd.size());
    for (std::size_t k = 0; k < res.psd.size(); ++k) {
        const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
        res.psd[k] *= scale * (edge ? 1.0 : 2.0);
        res.freqs[k] = static_cast<double>(k) * res.df;
    }
    return res;
}

double median_asd(const Psd& psd, double f_lo, double f_hi, std::span<const double> exclude,
                  double exclude_halfwidth) {
    std::vector<double> v;
    for (std::size_t k = 0; k < psd.freqs.size(); ++k) {
        const double f = psd.freqs[k];
        if (f < f_lo || f > f_hi) continue;
        const bool skip = std::any_of(exclude.begin(), exclude.end(),
                                      [&](double e) { return std::abs(f - e) <= exclude_halfwidth; });
        if (!skip) v.push_back(std::sqrt(psd.psd[k]));
    }
    if (v.empty()) throw Error("median_asd: no bins in band");
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(v.begin(), mid);
    return 0.5 * (lower + upper);
}

cplx tone_phasor(std::span<const double> x, double sample_rate, double f) {
    if (x.empty()) throw Error("tone_phasor: empty input");
    cplx acc{0.0, 0.0};
    const double w = kTwoPi * f / sample_rate;
    for (std::size_t k = 0; k < x.size(); ++k) {
        acc += x[k] * std::polar(1.0, -w * static_cast<double>(k));
    }
    return 2.0 * acc / static_cast<double>(x.size());
}

}  // namespace nvmag
