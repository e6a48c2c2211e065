#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "nvmag/cavity.hpp"
#include "nvmag/constants.hpp"
#include "nvmag/geometry.hpp"
#include "nvmag/synth.hpp"
#include "nvmag/trace.hpp"

namespace nvmag {

/// Everything needed to turn a total magnetic field into a reflected trace.
struct SensorModel {
    SpinCavityParams params;
    NvBasis basis = canonical_basis();  // NV axes expressed in the lab frame
    PhysicalConstants constants;
    SimConfig sim;
    cplx drive_amplitude{1.0, 0.0};
};

using FieldFn = std::function<Vec3(double)>;

enum class NoisePlacement { drive, reflected };

/// Multiplicative MW noise (1 + a(t)) e^{i phi(t)}, applied either to the
/// incident drive or to the reflected signal. Either series may be empty.
struct MwNoise {
    std::vector<double> amplitude;
    std::vector<double> phase;
    double sample_rate = 0.0;
    NoisePlacement placement = NoisePlacement::drive;

    cplx factor(double t) const;
};

class NoisyDrive final : public DriveSource {
public:
    NoisyDrive(cplx amplitude, const MwNoise* noise);
    cplx at(double t) const override;

private:
    cplx amplitude_;
    const MwNoise* noise_;
};

/// Spin frequencies computed on the fly from bias + external field.
class FieldDrivenFrequencies final : public SpinFrequencySource {
public:
    FieldDrivenFrequencies(const NvBasis& basis, const PhysicalConstants& pc, const BiasWaveform& bias,
                           FieldFn external);
    void at(double t, std::span<double> omega_s) const override;

private:
    NvBasis basis_;
    PhysicalConstants pc_;
    const BiasWaveform& bias_;
    FieldFn external_;
};

/// Incremental synthesis; successive next() calls continue the same run.
/// The bias, noise and field callable must outlive the stream.
class SensorStream {
public:
    SensorStream(const SensorModel& model, const BiasWaveform& bias, FieldFn external, const MwNoise* noise);
    void next(std::span<cplx> out);
    double time() const { return sim_.time(); }
    double sample_rate() const { return sample_rate_; }

private:
    double sample_rate_;
    NoisyDrive drive_;
    const MwNoise* out_noise_ = nullptr;
    FieldDrivenFrequencies freqs_;
    Simulator sim_;
};

/// Full synthetic sensor output over duration seconds. external may be empty
/// (no field); noise may be null.
ReflectionTrace synthesize_reflection(const SensorModel& model, const BiasWaveform& bias, const FieldFn& external,
                                      const MwNoise* noise, double duration);

/// Same with the external field given as samples on the trace grid.
ReflectionTrace synthesize_reflection(const SensorModel& model, const BiasWaveform& bias,
                                      std::span<const Vec3> external_field, const MwNoise* noise);

/// A reproduction-scale sensor resembling the hardware: 2 kHz bias of 25 G rms
/// along lab z, a diamond tilted so the four projections are distinct, and
/// a high-Q resonator detuned above D so three orientations cross it.
struct ReferenceSetup {
    SensorModel model;
    BiasWaveform bias;
    Mat3 u;                  // diamond-to-lab rotation (lab = u * diamond)
    Vec3 bias_dir_diamond;   // unit bias direction in the canonical diamond frame
};

struct ReferenceParams {
    double bias_rms = 25e-4;      // T
    double bias_freq = 2e3;       // Hz
    double offset_field = 1.2e-3; // T, (omega_c - D) / gamma
    double kappa_c0 = kTwoPi * 97.3e3;
    double kappa_c1 = kTwoPi * 48.7e3;
    double v_cav = 1e-7;  // m^3
    double n_spins = 1.2e13;
    double kappa_s = kTwoPi * 1.2e6;
    double kappa_op = kTwoPi * 1e3;
    double n_cav = 2e10;
    double adiabatic_detuning = 20.0;
    int substeps = 0;  // 0: 1 at >= 2 Msps, else 2
};

ReferenceSetup reference_setup(double sample_rate, const ReferenceParams& p = {});

}  // namespace nvmag
