#pragma once

#include <string>
#include <vector>

#include "nvmag/calibration.hpp"
#include "nvmag/chain.hpp"
#include "nvmag/config.hpp"
#include "nvmag/sensitivity.hpp"

namespace nvmag {

/// Sensor, bias and chain settings built from a config.
struct Scenario {
    ReferenceSetup setup;
    ChainOptions chain;
};

Scenario make_scenario(const ExperimentConfig& cfg);

/// Frames of warm-up plus duration, as simulation time (s).
double record_span(const Scenario& sc, double duration);

/// Realization of a configured noise source on a grid, or empty when the
/// source is disabled.
std::vector<double> realize_noise(const NoiseSettings& n, double sample_rate, double duration, std::uint64_t seed);

/// Lab-frame test field: one sinusoid per axis.
FieldFn test_field_fn(const Vec3& amplitude_rms, const Vec3& freqs);

struct VectorRun {
    ResponseMatrix response;
    CalibrationResult cal;
    HyperfineFit hyperfine;
    std::vector<TauVector> cal_taus;
    std::vector<TauVector> val_taus;
    std::vector<Vec3> reconstruction;  // validation record, lab frame (T)
    Vec3 val_freqs = Vec3::Zero();     // per lab axis
    Vec3 val_amplitude = Vec3::Zero();
    Mat3 tone_matrix = Mat3::Zero();   // [axis][tone] rms amplitude of the reconstruction
};

/// Calibrates on the configured stimulus, then reconstructs an independent
/// record with the tone frequencies permuted among the axes.
VectorRun vector_calibration(const ExperimentConfig& cfg);

struct BiasNoiseRun {
    std::vector<double> freqs;
    std::array<std::vector<double>, 3> measured;   // tau ASD per orientation
    std::array<std::vector<double>, 3> predicted;  // H_amp |a| + H_phase |phi| combined in quadrature
};

/// Injects the configured bias amplitude/phase noise and compares the tau
/// ASD with the analytic transfer functions.
BiasNoiseRun bias_noise_response(const ExperimentConfig& cfg);

struct HarmonicRun {
    std::vector<double> freqs;
    std::vector<double> no_field;
    std::vector<double> with_field;
    HarmonicSpectrum model;
};

/// Spectrum of |y| at the first cfg.harmonics harmonics without and with a
/// slow field along lab x.
HarmonicRun harmonic_placement(const ExperimentConfig& cfg, double field_rms, double field_freq);

/// Single-axis floors with and without the configured MW noise.
struct FloorRun {
    Vec3 noiseless = Vec3::Zero();
    Vec3 noisy = Vec3::Zero();
};
FloorRun noise_floors(const ExperimentConfig& cfg);

std::vector<std::string> experiment_names();
std::string experiment_description(const std::string& name);

/// Runs the named experiment, writing CSVs, a summary and a manifest into
/// cfg.output_dir. Returns the summary text.
std::string run_experiment(const ExperimentConfig& cfg);

}  // namespace nvmag
