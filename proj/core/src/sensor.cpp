#include "nvmag/sensor.hpp"

#include <cmath>

#include <Eigen/Geometry>

#include "nvmag/error.hpp"

namespace nvmag {

namespace {

double interp(const std::vector<double>& s, double x) {
    if (s.empty()) return 0.0;
    if (x <= 0.0) return s.front();
    const auto i = static_cast<std::size_t>(x);
    if (i + 1 >= s.size()) return s.back();
    const double f = x - static_cast<double>(i);
    return s[i] + f * (s[i + 1] - s[i]);
}

}  // namespace

cplx MwNoise::factor(double t) const {
    const double x = t * sample_rate;
    return (1.0 + interp(amplitude, x)) * std::polar(1.0, interp(phase, x));
}

NoisyDrive::NoisyDrive(cplx amplitude, const MwNoise* noise) : amplitude_(amplitude), noise_(noise) {
    if (noise_ && (!noise_->amplitude.empty() || !noise_->phase.empty()) && !(noise_->sample_rate > 0.0)) {
        throw Error("MwNoise: sample rate must be positive");
    }
    if (noise_ && noise_->placement != NoisePlacement::drive) noise_ = nullptr;
}

cplx NoisyDrive::at(double t) const {
    if (!noise_) return amplitude_;
    return amplitude_ * noise_->factor(t);
}

FieldDrivenFrequencies::FieldDrivenFrequencies(const NvBasis& basis, const PhysicalConstants& pc,
                                               const BiasWaveform& bias, FieldFn external)
    : basis_(basis), pc_(pc), bias_(bias), external_(std::move(external)) {
    bias_.validate();
}

void FieldDrivenFrequencies::at(double t, std::span<double> omega_s) const {
    Vec3 b = bias_.at(t);
    if (external_) b += external_(t);
    spin_frequencies(basis_, b, pc_, omega_s);
}

SensorStream::SensorStream(const SensorModel& model, const BiasWaveform& bias, FieldFn external,
                           const MwNoise* noise)
    : sample_rate_(model.sim.sample_rate),
      drive_(model.drive_amplitude, noise),
      out_noise_(noise && noise->placement == NoisePlacement::reflected ? noise : nullptr),
      freqs_(model.basis, model.constants, bias, std::move(external)),
      sim_(model.params, model.sim) {}

void SensorStream::next(std::span<cplx> out) {
    const std::size_t k0 = sim_.samples_done();
    sim_.run(drive_, freqs_, out);
    if (!out_noise_) return;
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] *= out_noise_->factor(static_cast<double>(k0 + k) / sample_rate_);
    }
}

ReflectionTrace synthesize_reflection(const SensorModel& model, const BiasWaveform& bias, const FieldFn& external,
                                      const MwNoise* noise, double duration) {
    if (!(duration > 0.0)) throw Error("synthesize_reflection: duration must be positive");
    if (noise && noise->sample_rate > 0.0 && noise->sample_rate != model.sim.sample_rate) {
        throw Error("synthesize_reflection: MW noise sample rate differs from the simulation rate");
    }
    SensorStream stream(model, bias, external, noise);
    ReflectionTrace tr;
    tr.sample_rate = model.sim.sample_rate;
    tr.samples.resize(static_cast<std::size_t>(std::llround(duration * tr.sample_rate)));
    stream.next(tr.samples);
    return tr;
}

ReflectionTrace synthesize_reflection(const SensorModel& model, const BiasWaveform& bias,
                                      std::span<const Vec3> external_field, const MwNoise* noise) {
    if (external_field.empty()) throw Error("synthesize_reflection: empty external field series");
    const double fs = model.sim.sample_rate;
    std::vector<Vec3> field(external_field.begin(), external_field.end());
    FieldFn fn = [field = std::move(field), fs](double t) -> Vec3 {
        const double x = std::max(0.0, t * fs);
        const auto i = static_cast<std::size_t>(x);
        if (i + 1 >= field.size()) return field.back();
        const double f = x - static_cast<double>(i);
        return field[i] + f * (field[i + 1] - field[i]);
    };
    return synthesize_reflection(model, bias, fn, noise, static_cast<double>(external_field.size()) / fs);
}

ReferenceSetup reference_setup(double sample_rate, const ReferenceParams& prm) {
    if (!(sample_rate > 0.0)) throw Error("reference_setup: sample rate must be positive");
    ReferenceSetup s;
    const PhysicalConstants pc;
    const NvBasis canon = canonical_basis();

    // Diamond-frame bias direction from target projections on axes 1..3
    // (axis 4 follows since the axes sum to zero).
    const Vec4 proj(0.85, -0.61, -0.44, 0.20);
    Vec3 b = 0.75 * (canon.n4() * proj);
    b.normalize();
    s.bias_dir_diamond = b;

    // Rows of u: the bias direction maps onto lab z; the rest is an arbitrary
    // but fixed roll about it.
    Vec3 r1 = Vec3(1.0, 0.0, 0.0).cross(b).normalized();
    const double roll = 0.35;
    r1 = Eigen::AngleAxisd(roll, b) * r1;
    const Vec3 r2 = b.cross(r1);
    s.u.row(0) = r1.transpose();
    s.u.row(1) = r2.transpose();
    s.u.row(2) = b.transpose();

    auto& m = s.model;
    m.constants = pc;
    m.basis = rotate_basis(canon, s.u);

    const double b0 = prm.bias_rms * std::sqrt(2.0);
    const double delta_c = pc.gamma_e * prm.offset_field;
    auto& cav = m.params.cavity;
    cav.kappa_c0 = prm.kappa_c0;
    cav.kappa_c1 = prm.kappa_c1;
    cav.omega_c = pc.d_zfs + delta_c;
    cav.omega_d = cav.omega_c;

    for (int i = 0; i < kOrientations; ++i) {
        const double p = canon.axis(i).dot(b);
        const double n_perp = std::sqrt(std::max(0.0, 1.0 - p * p));
        for (int sign : {+1, -1}) {
            auto& t = m.params.transitions[static_cast<std::size_t>(transition_index(i, sign))];
            t.n_perp = n_perp;
            t.g_s = single_spin_coupling(pc.gamma_e, n_perp, cav.omega_c, prm.v_cav);
            t.n_spins = prm.n_spins;
            t.kappa_s = prm.kappa_s;
            t.kappa_op = prm.kappa_op;
            t.n_cav = prm.n_cav;
        }
    }

    s.bias.b0_vec = Vec3(0.0, 0.0, b0);
    s.bias.omega_m = kTwoPi * prm.bias_freq;
    s.bias.sample_rate = sample_rate;

    m.sim.sample_rate = sample_rate;
    m.sim.substeps = prm.substeps > 0 ? prm.substeps : (sample_rate >= 2e6 ? 1 : 2);
    m.sim.adiabatic_detuning = prm.adiabatic_detuning;
    m.params.validate();
    return s;
}

}  // namespace nvmag
