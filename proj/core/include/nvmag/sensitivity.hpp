#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nvmag/calibration.hpp"
#include "nvmag/chain.hpp"
#include "nvmag/spectrum.hpp"

namespace nvmag {

/// One-sided ASD with its estimator settings (Hann window, Welch averaging).
struct AmplitudeSpectralDensity {
    std::vector<double> freqs;
    std::vector<double> asd;
    double df = 0.0;
    double segment_seconds = 0.0;
    double overlap = 0.5;
    int segments = 0;
    const char* window = "hann";
};

/// Requires at least 8 (overlapping) segments.
AmplitudeSpectralDensity estimate_asd(std::span<const double> x, double sample_rate, double segment_seconds = 1.0,
                                      double overlap = 0.5);

struct FlatBand {
    double f_lo = 10.0;
    double f_hi = 900.0;
    std::vector<double> exclude;  // tone frequencies to skip
    double exclude_halfwidth = 1.0;
    double segment_seconds = 1.0;
};

/// Median ASD over the band, skipping excluded tones.
double flat_band_floor(const AmplitudeSpectralDensity& a, const FlatBand& band);

/// Component o of a tau stream. Invalid frames are filled by linear
/// interpolation between the neighbouring valid frames.
std::vector<double> tau_series(std::span<const TauVector> taus, int orientation);

/// Real part of the one-sided cross spectral density of the three tau
/// components, averaged over the flat band (1/Hz).
Mat3 tau_cross_psd(std::span<const TauVector> taus, double frame_rate, const FlatBand& band);

/// Single-axis floors (T/sqrt(Hz)) of orientations 1..3; scale holds
/// |B0 . n_i| converting tau to field along each axis.
Vec3 axis_floors(std::span<const TauVector> taus, double frame_rate, const Vec3& scale, const FlatBand& band);

struct OrthogonalBounds {
    Vec3 eigenvalues = Vec3::Zero();  // ascending, T^2/Hz
    Mat3 directions = Mat3::Identity();  // columns, lab frame
    Mat3 covariance = Mat3::Zero();     // (I+C) A sigma2 A^T (I+C)^T
    Vec3 sensitivities() const { return eigenvalues.cwiseMax(0.0).cwiseSqrt(); }
};

/// Eigen-decomposition of the field-noise covariance; sigma2 must be
/// symmetric positive semidefinite.
OrthogonalBounds orthogonal_bounds(const Mat3& sigma2, const CalibrationResult& cal);

struct SensitivityReport {
    Vec3 axis_floor = Vec3::Zero();
    Mat3 sigma2 = Mat3::Zero();
    OrthogonalBounds bounds;
};

SensitivityReport sensitivity_report(std::span<const TauVector> taus, double frame_rate, const CalibrationResult& cal,
                                     const Vec3& scale, const FlatBand& band);

/// Line amplitudes at harmonics n = 1..count of omega_m predicted from one
/// half bias period of |y| (samples starting at a bias extremum). comb is the
/// field-free line; field_gain is the odd-harmonic line per second of
/// alternating peak-time shift.
struct HarmonicSpectrum {
    std::vector<double> freqs;
    std::vector<double> comb;
    std::vector<double> field_gain;
};

HarmonicSpectrum harmonic_model(std::span<const double> half_period, double sample_rate, double omega_m, int count);

/// Line amplitudes of a periodic record (integer number of bias periods) at
/// harmonics n = 1..count of omega_m.
std::vector<double> harmonic_lines(std::span<const double> x, double sample_rate, double omega_m, int count);

struct BandwidthPoint {
    double bandwidth = 0.0;  // Hz
    Vec3 floor = Vec3::Zero();  // T/sqrt(Hz), orientations 1..3
};

struct SweepOptions {
    double duration = 4.0;  // s of tau per point
    FlatBand band{10.0, 900.0, {}, 1.0, 0.5};
    NoisePlacement placement = NoisePlacement::reflected;
    int threads = 1;
};

/// Band-limited amplitude noise (level in dBc/Hz over [0, bandwidth]) per
/// point through the full chain. Every point shares the seed, so a narrower
/// band is a subset of a wider one. bandwidth 0 runs without noise.
std::vector<BandwidthPoint> noise_bandwidth_sweep(const SensorModel& model, const BiasWaveform& bias,
                                                  double psd_dbc, std::span<const double> bandwidths,
                                                  std::uint64_t seed, const SweepOptions& opt = {});

void write_asd_csv(const AmplitudeSpectralDensity& a, const std::string& path);

}  // namespace nvmag
