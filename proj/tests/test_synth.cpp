#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <numeric>

#include "nvmag/error.hpp"
#include "nvmag/sensor.hpp"
#include "nvmag/spectrum.hpp"
#include "nvmag/synth.hpp"
#include "nvmag/trace.hpp"
#include "oracle.hpp"

using namespace nvmag;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("nvmag_test_" + name)).string();
}

}  // namespace

TEST(Synth, BiasWaveformCleanAndNoisy) {
    BiasWaveform w;
    w.b0_vec = Vec3(0, 0, 2e-3);
    w.omega_m = kTwoPi * 2e3;
    EXPECT_LT((w.at(0.0) - w.b0_vec).norm(), 1e-18);
    EXPECT_LT((w.at(125e-6)).norm(), 1e-15);
    w.sample_rate = 1e3;
    w.amp_noise = std::vector<double>(10, 0.1);
    w.phase_noise = std::vector<double>(10, 0.0);
    EXPECT_LT((w.at(0.0) - 1.1 * w.b0_vec).norm(), 1e-18);
    w.phase_noise = std::vector<double>(10, 0.01);
    // Re{b0 (1 + a + i phi) e^{i w t}} at w t = pi/2 is -b0 phi.
    EXPECT_LT((w.at(125e-6) + 0.01 * w.b0_vec).norm(), 1e-12);
    w.phase_noise.resize(5);
    EXPECT_THROW(w.validate(), Error);
    BiasWaveform bad;
    EXPECT_THROW(bad.validate(), Error);
}

TEST(Synth, DbcConversion) {
    const auto s = flat_spectrum(-110.0, 10.0, 1e3, NoiseKind::amplitude);
    EXPECT_NEAR(s.linear_psd(100.0), 2e-11, 1e-24);
    EXPECT_EQ(s.linear_psd(5.0), 0.0);
    EXPECT_EQ(s.linear_psd(2e3), 0.0);
}

TEST(Synth, LogLogInterpolation) {
    NoiseSpectrum s;
    s.freqs = {10.0, 1000.0};
    s.psd = {1e-10, 1e-14};
    s.units = PsdUnits::si;
    // Power law f^-2 between the points.
    EXPECT_NEAR(s.linear_psd(100.0), 1e-12, 1e-24);
}

TEST(Synth, NoiseSpectrumCsvRoundTrip) {
    NoiseSpectrum s;
    s.freqs = {1.0, 10.0, 1e4};
    s.psd = {-100.0, -120.0, -150.0};
    const auto path = tmp_path("spec.csv");
    write_noise_spectrum_csv(s, path);
    const auto r = read_noise_spectrum_csv(path, NoiseKind::phase);
    EXPECT_EQ(r.freqs, s.freqs);
    EXPECT_EQ(r.psd, s.psd);
    EXPECT_EQ(r.units, PsdUnits::dbc_per_hz);
    EXPECT_EQ(r.kind, NoiseKind::phase);
    std::remove(path.c_str());
}

TEST(Synth, ColoredNoiseMatchesTargetPsd) {
    const double fs = 1e4;
    const auto s = flat_spectrum(-90.0, 100.0, 2000.0, NoiseKind::amplitude);
    const auto n = colored_noise(s, fs, 20.0, 5);
    const Psd p = welch_psd(n.samples, fs, 2000);
    double in = 0.0, out = 0.0;
    int ni = 0, no = 0;
    for (std::size_t k = 0; k < p.freqs.size(); ++k) {
        if (p.freqs[k] > 200.0 && p.freqs[k] < 1900.0) {
            in += p.psd[k];
            ++ni;
        } else if (p.freqs[k] > 2200.0) {
            out += p.psd[k];
            ++no;
        }
    }
    EXPECT_NEAR(in / ni, 2e-9, 0.05 * 2e-9);
    EXPECT_LT(out / no, 1e-3 * 2e-9);
    // Variance equals the integrated PSD.
    const double var = std::inner_product(n.samples.begin(), n.samples.end(), n.samples.begin(), 0.0) /
                       static_cast<double>(n.samples.size());
    EXPECT_NEAR(var, 2e-9 * 1900.0, 0.05 * 2e-9 * 1900.0);
}

TEST(Synth, ColoredNoiseDeterministicAndNested) {
    const double fs = 1e4;
    const auto wide = colored_noise(flat_spectrum(-90.0, 0.0, 2000.0, NoiseKind::amplitude), fs, 2.0, 9);
    const auto again = colored_noise(flat_spectrum(-90.0, 0.0, 2000.0, NoiseKind::amplitude), fs, 2.0, 9);
    EXPECT_EQ(wide.samples, again.samples);
    const auto narrow = colored_noise(flat_spectrum(-90.0, 0.0, 500.0, NoiseKind::amplitude), fs, 2.0, 9);
    // The narrow band is the low-pass part of the wide one.
    const auto wn = rfft(wide.samples), nn = rfft(narrow.samples);
    for (std::size_t k = 1; k < wn.size(); ++k) {
        const double f = static_cast<double>(k) * fs / static_cast<double>(wide.samples.size());
        if (f < 499.0) EXPECT_LT(std::abs(wn[k] - nn[k]), 1e-9 * std::abs(wn[k]) + 1e-15);
        if (f > 501.0) EXPECT_LT(std::abs(nn[k]), 1e-12);
    }
    EXPECT_THROW(colored_noise(flat_spectrum(-90.0, 0.0, 6000.0, NoiseKind::amplitude), fs, 1.0, 1), Error);
}

TEST(Synth, SpinFrequenciesFollowZeeman) {
    const PhysicalConstants pc;
    std::mt19937_64 rng(31);
    const NvBasis b = rotate_basis(canonical_basis(), oracle::random_rotation(rng));
    const Vec3 field = oracle::random_vector(rng, 2e-3);
    std::vector<double> w(kBranches);
    spin_frequencies(b, field, pc, w);
    for (int i = 0; i < 4; ++i) {
        const double bn = field.dot(b.axis(i));
        for (int sign : {1, -1}) {
            for (int m = -1; m <= 1; ++m) {
                const double want = kTwoPi * 2.87e9 - sign * kTwoPi * 28e9 * bn + m * kTwoPi * 2.22e6;
                EXPECT_NEAR(w[static_cast<std::size_t>(3 * transition_index(i, sign) + m + 1)], want, 1e-3);
            }
        }
    }
}

TEST(Synth, TestFieldIsRmsScaled) {
    TestField tf{Vec3(1e-6, 2e-6, 3e-6), Vec3(10.0, 20.0, 40.0)};
    const Vec3 b = tf.at(1.0 / 40.0);
    EXPECT_NEAR(b[0], 1e-6 * std::sqrt(2.0) * std::sin(kTwoPi * 0.25), 1e-18);
    EXPECT_NEAR(b[2], 0.0, 1e-18);
}

TEST(Synth, ZeroBiasGivesConstantTrace) {
    auto s = reference_setup(2e6);
    s.bias.b0_vec = Vec3::Zero();
    const auto tr = synthesize_reflection(s.model, s.bias, FieldFn{}, nullptr, 6e-3);
    const cplx last = tr.samples.back();
    for (std::size_t k = tr.samples.size() / 2; k < tr.samples.size(); ++k) {
        EXPECT_LT(std::abs(tr.samples[k] - last), 1e-9);
    }
}

TEST(Synth, ReflectedNoiseMultipliesOutput) {
    auto s = reference_setup(2e6);
    const auto clean = synthesize_reflection(s.model, s.bias, FieldFn{}, nullptr, 1e-3);
    MwNoise n;
    n.sample_rate = 2e6;
    n.placement = NoisePlacement::reflected;
    n.amplitude.resize(clean.samples.size());
    for (std::size_t k = 0; k < n.amplitude.size(); ++k) n.amplitude[k] = 1e-3 * std::sin(0.1 * static_cast<double>(k));
    const auto noisy = synthesize_reflection(s.model, s.bias, FieldFn{}, &n, 1e-3);
    for (std::size_t k = 0; k < clean.samples.size(); ++k) {
        EXPECT_LT(std::abs(noisy.samples[k] - clean.samples[k] * (1.0 + n.amplitude[k])), 1e-12);
    }
}

TEST(Synth, TraceIoRoundTrip) {
    ReflectionTrace tr;
    tr.sample_rate = 1e6;
    tr.t0 = 0.5;
    for (int k = 0; k < 50; ++k) tr.samples.emplace_back(0.1 * k, -0.3 * k + 1e-7);
    const auto bin = tmp_path("trace.bin"), csv = tmp_path("trace.csv");
    write_trace_binary(tr, bin);
    const auto b = read_trace_binary(bin);
    EXPECT_EQ(b.samples, tr.samples);
    EXPECT_EQ(b.sample_rate, tr.sample_rate);
    EXPECT_EQ(b.t0, tr.t0);
    write_trace_csv(tr, csv);
    const auto c = read_trace_csv(csv);
    ASSERT_EQ(c.samples.size(), tr.samples.size());
    for (std::size_t k = 0; k < tr.samples.size(); ++k) EXPECT_LT(std::abs(c.samples[k] - tr.samples[k]), 1e-12);
    EXPECT_NEAR(c.sample_rate, tr.sample_rate, 1e-3);
    std::remove(bin.c_str());
    std::remove(csv.c_str());
}
