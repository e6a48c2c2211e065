#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nvmag/cavity.hpp"
#include "nvmag/constants.hpp"
#include "nvmag/geometry.hpp"
#include "nvmag/types.hpp"

namespace nvmag {

/// B(t) = Re{ b0_vec (1 + a(t) + i phi(t)) e^{i omega_m t} }.
///
/// The noise series are optional; when present they are sampled on the grid
/// t = k / sample_rate and linearly interpolated in between.
struct BiasWaveform {
    Vec3 b0_vec = Vec3::Zero();  // T, peak amplitude
    double omega_m = 0.0;        // rad/s
    std::vector<double> amp_noise;
    std::vector<double> phase_noise;
    double sample_rate = 0.0;  // Hz, grid of the noise series
    double duration = 0.0;     // s

    void validate() const;
    Vec3 at(double t) const;
    double period() const { return kTwoPi / omega_m; }
};

std::vector<Vec3> evaluate_bias(const BiasWaveform& w, std::span<const double> t_grid);

enum class NoiseKind { amplitude, phase, field };
enum class PsdUnits { dbc_per_hz, si };

/// One-sided PSD on a frequency grid in Hz. dBc/Hz values L convert to a
/// fractional-amplitude (or rad^2) PSD of 2 * 10^(L/10) per Hz; SI values are
/// taken as given (T^2/Hz for field noise).
struct NoiseSpectrum {
    std::vector<double> freqs;
    std::vector<double> psd;
    NoiseKind kind = NoiseKind::amplitude;
    PsdUnits units = PsdUnits::dbc_per_hz;

    void validate() const;
    /// Linear one-sided PSD at f, interpolated log-log between grid points
    /// (linearly where a neighbour is zero), zero outside the grid.
    double linear_psd(double f) const;
};

NoiseSpectrum flat_spectrum(double level, double f_lo, double f_hi, NoiseKind kind,
                            PsdUnits units = PsdUnits::dbc_per_hz);

/// Two columns: freq_hz and either psd_dbc_per_hz or psd_si (header names
/// select the units).
NoiseSpectrum read_noise_spectrum_csv(const std::string& path, NoiseKind kind);
void write_noise_spectrum_csv(const NoiseSpectrum& spec, const std::string& path);

struct NoiseRealization {
    std::vector<double> samples;
    double sample_rate = 0.0;
    NoiseSpectrum source;
};

/// Frequency-domain shaping of white Gaussian noise. For a fixed seed and
/// length the per-bin random draws are identical, so realizations of nested
/// bands are nested: narrowing the band only removes components.
NoiseRealization colored_noise(const NoiseSpectrum& spec, double sample_rate, double duration, std::uint64_t seed);

/// Fills kBranches frequencies ordered [transition][line] for field b:
/// omega = D -+ gamma b.n_i + m a_hf, transition_index(i, +-1), m = -1, 0, 1.
void spin_frequencies(const NvBasis& basis, const Vec3& b, const PhysicalConstants& pc, std::span<double> out);

/// Per-branch traces for a sampled field.
std::vector<std::vector<double>> spin_frequency_traces(const NvBasis& basis, std::span<const Vec3> field,
                                                       const PhysicalConstants& pc);

/// Three orthogonal sinusoids, amplitude_rms * sqrt(2) * sin(2 pi f t) per axis.
struct TestField {
    Vec3 amplitude_rms = Vec3::Zero();  // T
    Vec3 freq_hz = Vec3::Zero();

    Vec3 at(double t) const;
};

std::vector<Vec3> test_field(const Vec3& amplitudes_rms, const Vec3& freqs_hz, std::span<const double> t_grid);

}  // namespace nvmag
