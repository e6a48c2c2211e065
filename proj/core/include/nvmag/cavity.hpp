#pragma once

#include <array>
#include <span>
#include <vector>

#include "nvmag/types.hpp"

namespace nvmag {

/// Dielectric resonator rates. Everything is angular frequency (rad/s).
struct CavityParams {
    double kappa_c0 = 0.0;  // intrinsic loss
    double kappa_c1 = 0.0;  // input coupling
    double omega_c = 0.0;   // resonance
    double omega_d = 0.0;   // drive

    double kappa_c() const { return kappa_c0 + kappa_c1; }
    void validate() const;
};

/// One m_s=0 <-> m_s=+-1 transition of one NV orientation.
struct SpinTransitionParams {
    double g_s = 0.0;       // single spin-photon coupling, rad/s (already includes n_perp)
    double n_spins = 0.0;   // effective polarized spin count
    double kappa_s = 0.0;   // spin linewidth, rad/s
    double kappa_op = 0.0;  // optical repolarization rate, rad/s
    double n_cav = 0.0;     // mean intracavity photon number
    double n_perp = 1.0;    // transverse geometric factor used to build g_s

    void validate() const;
};

inline constexpr int kOrientations = 4;
inline constexpr int kTransitions = 8;     // 4 orientations x (+, -)
inline constexpr int kHyperfineLines = 3;  // m_I = -1, 0, +1
inline constexpr int kBranches = kTransitions * kHyperfineLines;

/// Transition index for orientation i (0-based) and sign (+1 / -1).
constexpr int transition_index(int orientation, int sign) {
    return 2 * orientation + (sign > 0 ? 0 : 1);
}

struct SpinCavityParams {
    CavityParams cavity;
    std::array<SpinTransitionParams, kTransitions> transitions{};
    // Fraction of each transition's spins in each hyperfine line.
    std::array<double, kHyperfineLines> hyperfine_weights{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    // When set, n_cav follows photons_per_unit_amplitude * |x1|^2 every step
    // instead of the fixed per-transition value.
    bool self_consistent_ncav = false;
    double photons_per_unit_amplitude = 0.0;

    void validate() const;
};

/// g_s = (gamma n_perp / 2) sqrt(hbar omega_c mu0 / V_cav).
double single_spin_coupling(double gamma, double n_perp, double omega_c, double v_cav);

/// Saturated spin-photon interaction term of one transition.
cplx spin_term(const SpinTransitionParams& p, double omega_d, double omega_s);

/// Composite reflection coefficient for a given summed interaction term.
cplx reflection_coefficient(const CavityParams& c, cplx pi_sum);

/// Sum of spin_term over all branches, each hyperfine line weighted.
/// omega_s holds kBranches frequencies ordered [transition][line].
cplx total_spin_term(const SpinCavityParams& params, std::span<const double> omega_s);

/// Integrator state in the frame rotating at omega_d.
///
/// x1 is the intracavity field scaled so the reflected envelope is
/// y = x1 - x (x the incident envelope). Per branch, x2 is the spin coherence
/// (in spins times field units) and x3 the depolarized population.
struct SimState {
    cplx x1{0.0, 0.0};
    std::vector<cplx> x2 = std::vector<cplx>(kBranches, cplx{0.0, 0.0});
    std::vector<double> x3 = std::vector<double>(kBranches, 0.0);
};

/// Incident envelope at arbitrary time.
class DriveSource {
public:
    virtual ~DriveSource() = default;
    virtual cplx at(double t) const = 0;
};

/// Spin transition frequencies (rad/s) at arbitrary time, kBranches values
/// ordered [transition][hyperfine line].
class SpinFrequencySource {
public:
    virtual ~SpinFrequencySource() = default;
    virtual void at(double t, std::span<double> omega_s) const = 0;
};

class ConstantDrive final : public DriveSource {
public:
    explicit ConstantDrive(cplx value = {1.0, 0.0}) : value_(value) {}
    cplx at(double) const override { return value_; }

private:
    cplx value_;
};

/// Uniformly sampled drive, linearly interpolated between samples.
class SampledDrive final : public DriveSource {
public:
    SampledDrive(std::vector<cplx> samples, double sample_rate, double t0 = 0.0);
    cplx at(double t) const override;

private:
    std::vector<cplx> samples_;
    double sample_rate_;
    double t0_;
};

/// Materialized frequency traces (one vector per branch, equal lengths),
/// linearly interpolated between samples.
class SampledFrequencies final : public SpinFrequencySource {
public:
    SampledFrequencies(std::vector<std::vector<double>> traces, double sample_rate, double t0 = 0.0);
    void at(double t, std::span<double> omega_s) const override;
    std::size_t length() const { return length_; }

private:
    std::vector<std::vector<double>> traces_;
    double sample_rate_;
    double t0_;
    std::size_t length_ = 0;
};

class ConstantFrequencies final : public SpinFrequencySource {
public:
    explicit ConstantFrequencies(std::vector<double> omega_s);
    void at(double, std::span<double> omega_s) const override;

private:
    std::vector<double> omega_s_;
};

struct SimConfig {
    double sample_rate = 1e6;  // output samples per second
    int substeps = 1;          // integrator steps per output sample
    // Branches detuned by more than this many kappa_s follow their
    // instantaneous steady state instead of being integrated. 0 disables.
    double adiabatic_detuning = 0.0;
};

/// Fixed-step exponential Runge-Kutta (ETD-RK4) integrator of the
/// three-integrator-per-branch spin-cavity model. The fast linear parts
/// (cavity detuning and decay, spin detuning and decay) are integrated
/// exactly; couplings and depolarization go through the RK4 stages. Steady
/// states of the ODE are fixed points of the scheme, so constant spin
/// frequencies converge to exactly reflection_coefficient * drive.
///
/// See docs/cavity_model.md for the equations.
class Simulator {
public:
    Simulator(const SpinCavityParams& params, SimConfig config, SimState initial = {});

    /// Writes out.size() output samples starting at the current time and
    /// advances by that many sample periods. Throws on non-finite state.
    void run(const DriveSource& drive, const SpinFrequencySource& freqs, std::span<cplx> out);

    const SimState& state() const { return state_; }
    double time() const { return t_; }
    std::size_t samples_done() const { return n_done_; }

private:
    SpinCavityParams params_;
    SimConfig config_;
    SimState state_;
    double t_ = 0.0;
    std::size_t n_done_ = 0;

    // Per-branch constants.
    std::array<double, kBranches> g2_{};
    std::array<double, kBranches> n_branch_{};
    std::array<double, kBranches> kappa_s_{};
    std::array<double, kBranches> kappa_op_{};
    std::array<double, kBranches> n_cav_{};
};

}  // namespace nvmag
