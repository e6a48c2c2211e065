#pragma once

#include <span>
#include <vector>

#include "nvmag/types.hpp"

namespace nvmag {

/// Forward real FFT, unnormalized; returns n/2 + 1 bins.
std::vector<cplx> rfft(std::span<const double> x);

/// Inverse of rfft for an output of length n, unnormalized (sum without 1/n).
std::vector<double> irfft(std::span<const cplx> half, std::size_t n);

/// Forward complex FFT, unnormalized.
std::vector<cplx> fft(std::span<const cplx> x);

/// One-sided power spectral density on a uniform frequency grid.
struct Psd {
    double df = 0.0;
    std::vector<double> freqs;
    std::vector<double> psd;
    int segments = 0;

    std::vector<double> asd() const;
};

/// Welch estimate with a Hann window. segment_samples must fit in x at least
/// once; the mean is removed per segment.
Psd welch_psd(std::span<const double> x, double sample_rate, std::size_t segment_samples,
              double overlap = 0.5);

/// Median of the ASD over [f_lo, f_hi], skipping bins within exclude_halfwidth
/// of any frequency in exclude.
double median_asd(const Psd& psd, double f_lo, double f_hi, std::span<const double> exclude = {},
                  double exclude_halfwidth = 1.0);

/// Single-bin complex amplitude of x at frequency f (Hz), normalized so a
/// sinusoid A cos(2 pi f t + phi) sampled over an integer number of periods
/// returns A e^{i phi}.
cplx tone_phasor(std::span<const double> x, double sample_rate, double f);

}  // namespace nvmag
