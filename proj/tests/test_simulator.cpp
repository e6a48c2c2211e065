#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <limits>
#include <vector>

#include "nvmag/cavity.hpp"
#include "nvmag/error.hpp"
#include "oracle.hpp"

using namespace nvmag;

namespace {

const double kWc = kTwoPi * 2.9e9;

SpinCavityParams base_params() {
    SpinCavityParams p;
    p.cavity = {kTwoPi * 97.3e3, kTwoPi * 48.7e3, kWc, kWc};
    for (auto& t : p.transitions) {
        t.g_s = 0.2;
        t.n_spins = 1e12;
        t.kappa_s = kTwoPi * 1.5e6;
        t.kappa_op = kTwoPi * 1e3;
        t.n_cav = 1e10;
        t.n_perp = 0.8;
    }
    return p;
}

class LambdaFrequencies final : public SpinFrequencySource {
public:
    explicit LambdaFrequencies(std::function<void(double, std::span<double>)> f) : f_(std::move(f)) {}
    void at(double t, std::span<double> w) const override { f_(t, w); }

private:
    std::function<void(double, std::span<double>)> f_;
};

class LambdaDrive final : public DriveSource {
public:
    explicit LambdaDrive(std::function<cplx(double)> f) : f_(std::move(f)) {}
    cplx at(double t) const override { return f_(t); }

private:
    std::function<cplx(double)> f_;
};

cplx oracle_gamma(const SpinCavityParams& p, const std::vector<double>& ws) {
    cplx pi = 0.0;
    for (int tr = 0; tr < kTransitions; ++tr) {
        const auto& t = p.transitions[static_cast<std::size_t>(tr)];
        for (int line = 0; line < 3; ++line) {
            pi += oracle::pi_term(t.g_s, t.n_spins * p.hyperfine_weights[static_cast<std::size_t>(line)], t.kappa_s,
                                  t.kappa_op, t.n_cav, p.cavity.omega_d - ws[static_cast<std::size_t>(3 * tr + line)]);
        }
    }
    return oracle::gamma(p.cavity.kappa_c0, p.cavity.kappa_c1, p.cavity.omega_c, p.cavity.omega_d, pi);
}

}  // namespace

TEST(Simulator, SteadyStateMatchesClosedFormOnDetuningGrid) {
    const double kc2 = 0.5 * kTwoPi * 146e3;
    const double ks = kTwoPi * 1.5e6;
    const cplx x{0.7, 0.2};
    for (double dc : {-2.0, -1.0, 0.0, 0.5, 2.0}) {
        for (double ds : {-3.0, -1.0, 0.0, 0.4, 3.0}) {
            auto p = base_params();
            p.cavity.omega_d = kWc + dc * kc2;
            std::vector<double> ws(kBranches);
            for (int k = 0; k < kBranches; ++k) {
                // One branch at the grid detuning, the rest spread around it.
                ws[static_cast<std::size_t>(k)] = p.cavity.omega_d - ds * ks - (k - 7) * 0.37 * ks;
            }
            Simulator sim(p, SimConfig{2e6, 1, 0.0});
            std::vector<cplx> out(8000);
            sim.run(ConstantDrive(x), ConstantFrequencies(ws), out);
            const cplx want = oracle_gamma(p, ws);
            EXPECT_LT(std::abs(out.back() / x - want), 1e-6 * std::abs(want)) << "dc " << dc << " ds " << ds;
        }
    }
}

TEST(Simulator, AdiabaticEliminationKeepsFixedPoint) {
    auto p = base_params();
    std::vector<double> ws(kBranches);
    for (int k = 0; k < kBranches; ++k) ws[static_cast<std::size_t>(k)] = kWc - (k - 5) * kTwoPi * 2e6;
    Simulator sim(p, SimConfig{2e6, 1, 5.0});
    std::vector<cplx> out(8000);
    sim.run(ConstantDrive(1.0), ConstantFrequencies(ws), out);
    const cplx want = oracle_gamma(p, ws);
    EXPECT_LT(std::abs(out.back() - want), 1e-6 * std::abs(want));
}

TEST(Simulator, BareCavityStepResponse) {
    auto p = base_params();
    for (auto& t : p.transitions) t.g_s = 0.0;
    p.cavity.omega_d = kWc + kTwoPi * 30e3;
    const double fs = 1e6;
    Simulator sim(p, SimConfig{fs, 1, 0.0});
    std::vector<cplx> out(200);
    sim.run(ConstantDrive(1.0), ConstantFrequencies(std::vector<double>(kBranches, kWc)), out);
    const cplx lam(0.5 * p.cavity.kappa_c(), p.cavity.omega_d - p.cavity.omega_c);
    for (std::size_t n = 0; n < out.size(); ++n) {
        const double t = static_cast<double>(n) / fs;
        const cplx x1 = p.cavity.kappa_c1 / lam * (1.0 - std::exp(-lam * t));
        EXPECT_LT(std::abs(out[n] - (x1 - 1.0)), 1e-9);
    }
}

TEST(Simulator, FreeDecayIsExponential) {
    auto p = base_params();
    for (auto& t : p.transitions) t.g_s = 0.0;
    SimState s0;
    s0.x1 = {0.6, -0.8};
    const double fs = 1e6;
    Simulator sim(p, SimConfig{fs, 2, 0.0}, s0);
    std::vector<cplx> out(100);
    sim.run(ConstantDrive(0.0), ConstantFrequencies(std::vector<double>(kBranches, kWc)), out);
    for (std::size_t n = 1; n < out.size(); ++n) {
        const double t = static_cast<double>(n) / fs;
        EXPECT_NEAR(std::abs(out[n]), std::exp(-0.5 * p.cavity.kappa_c() * t), 1e-12);
        EXPECT_LT(std::abs(out[n]), std::abs(out[n - 1]));
    }
}

TEST(Simulator, DepolarizationMonotoneAndBounded) {
    auto p = base_params();
    p.transitions[0].n_cav = 1e12;
    std::vector<double> ws(kBranches, kWc + kTwoPi * 50e6);
    ws[1] = kWc;  // transition 0, centre line: resonant with the drive
    Simulator sim(p, SimConfig{2e6, 1, 0.0});
    std::vector<cplx> one(1);
    double prev = 0.0;
    const double n_line = p.transitions[0].n_spins / 3.0;
    for (int k = 0; k < 4000; ++k) {
        sim.run(ConstantDrive(1.0), ConstantFrequencies(ws), one);
        const double x3 = sim.state().x3[1];
        EXPECT_GE(x3, prev - 1e-9 * n_line);
        EXPECT_LE(x3, n_line);
        prev = x3;
    }
    EXPECT_GT(prev, 0.1 * n_line);
}

TEST(Simulator, SecondCrossingSmallerAtHighPower) {
    // One transition swept through the drive twice, 40 us apart; the spins
    // depolarized by the first crossing have not recovered by the second.
    auto p = base_params();
    for (auto& t : p.transitions) t.g_s = 0.0;
    p.transitions[0].g_s = 0.2;
    p.transitions[0].n_spins = 1e13;
    p.transitions[0].n_cav = 2e11;
    const double fs = 2e6, rate = kTwoPi * 2e12;  // rad/s per s
    const double t1 = 100e-6, t2 = 140e-6, tm = 0.5 * (t1 + t2);
    LambdaFrequencies f([&](double t, std::span<double> w) {
        std::fill(w.begin(), w.end(), kWc + kTwoPi * 1e9);
        // Triangle: down through the drive at t1, turning at tm, back up at t2.
        const double d = t < tm ? rate * (t1 - t) : rate * (t - t2);
        for (int line = 0; line < 3; ++line) w[static_cast<std::size_t>(line)] = kWc + d + (line - 1) * kTwoPi * 2.2e6;
    });
    Simulator sim(p, SimConfig{fs, 1, 0.0});
    std::vector<cplx> out(static_cast<std::size_t>(200e-6 * fs));
    sim.run(ConstantDrive(1.0), f, out);
    const cplx base = out[static_cast<std::size_t>(50e-6 * fs)];
    double peak1 = 0.0, peak2 = 0.0;
    for (std::size_t n = 0; n < out.size(); ++n) {
        const double t = static_cast<double>(n) / fs;
        const double dev = std::abs(out[n] - base);
        (t < tm ? peak1 : peak2) = std::max(t < tm ? peak1 : peak2, dev);
    }
    EXPECT_GT(peak1, 0.0);
    EXPECT_LT(peak2, 0.95 * peak1);
}

TEST(Simulator, NonFiniteStateReported) {
    auto p = base_params();
    Simulator sim(p, SimConfig{2e6, 1, 0.0});
    LambdaDrive bad([](double t) { return t > 1e-5 ? cplx(std::numeric_limits<double>::quiet_NaN(), 0.0) : cplx(1.0); });
    std::vector<cplx> out(100);
    EXPECT_THROW(sim.run(bad, ConstantFrequencies(std::vector<double>(kBranches, kWc)), out), Error);
}

TEST(Simulator, CoarseStepRejected) {
    auto p = base_params();
    EXPECT_THROW(Simulator(p, SimConfig{1e4, 1, 0.0}), Error);
    EXPECT_THROW(Simulator(p, SimConfig{2e6, 0, 0.0}), Error);
}

TEST(Simulator, SampledSourcesInterpolate) {
    SampledDrive d({cplx(0.0), cplx(2.0, 2.0)}, 10.0);
    EXPECT_NEAR(std::abs(d.at(0.05) - cplx(1.0, 1.0)), 0.0, 1e-15);
    std::vector<std::vector<double>> tr(kBranches, std::vector<double>{1.0, 3.0});
    SampledFrequencies f(tr, 10.0);
    std::vector<double> w(kBranches);
    f.at(0.025, w);
    EXPECT_NEAR(w[5], 1.5, 1e-15);
    EXPECT_THROW(SampledFrequencies(std::vector<std::vector<double>>(3), 10.0), Error);
}

TEST(Simulator, SelfConsistentPhotonNumberRuns) {
    auto p = base_params();
    p.self_consistent_ncav = true;
    p.photons_per_unit_amplitude = 1e10;
    Simulator sim(p, SimConfig{2e6, 1, 0.0});
    std::vector<cplx> out(2000);
    sim.run(ConstantDrive(1.0), ConstantFrequencies(std::vector<double>(kBranches, kWc)), out);
    EXPECT_TRUE(std::isfinite(std::abs(out.back())));
    EXPECT_LE(std::abs(out.back()), 1.0 + 1e-9);
}
