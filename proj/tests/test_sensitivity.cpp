#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nvmag/error.hpp"
#include "nvmag/sensitivity.hpp"
#include "oracle.hpp"

using namespace nvmag;

namespace {

std::vector<double> white(std::size_t n, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sigma);
    std::vector<double> x(n);
    for (double& v : x) v = g(rng);
    return x;
}

double median(std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
    return v[v.size() / 2];
}

CalibrationResult cal_with(const Mat3& a, const Mat3& c = Mat3::Zero()) {
    CalibrationResult cal;
    cal.a_matrix = a;
    cal.c_matrix = c;
    return cal;
}

Mat3 random_psd(std::mt19937_64& rng) {
    Mat3 l = Mat3::Zero();
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j <= i; ++j) l(i, j) = g(rng);
    }
    return l * l.transpose() * 1e-8;
}

}  // namespace

TEST(Asd, WhiteNoiseLevelAndParseval) {
    const double fs = 2e3, sigma = 3e-4;
    const auto x = white(static_cast<std::size_t>(20 * fs), sigma, 1);
    const auto a = estimate_asd(x, fs, 1.0);
    EXPECT_GE(a.segments, 8);
    EXPECT_EQ(std::string(a.window), "hann");
    std::vector<double> band;
    double power = 0.0;
    for (std::size_t k = 0; k < a.freqs.size(); ++k) {
        if (a.freqs[k] > 5.0 && a.freqs[k] < 0.5 * fs - 5.0) band.push_back(a.asd[k]);
        power += a.asd[k] * a.asd[k] * a.df;
    }
    EXPECT_NEAR(median(band), sigma * std::sqrt(2.0 / fs), 0.05 * sigma * std::sqrt(2.0 / fs));
    EXPECT_NEAR(power, sigma * sigma, 0.05 * sigma * sigma);
}

TEST(Asd, ToneCarriesItsRmsPower) {
    const double fs = 2e3, f0 = 123.0, amp = 2e-3;
    std::vector<double> x(static_cast<std::size_t>(16 * fs));
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = amp * std::cos(kTwoPi * f0 * static_cast<double>(k) / fs);
    const auto a = estimate_asd(x, fs, 1.0);
    std::size_t peak = 0;
    double power = 0.0;
    for (std::size_t k = 0; k < a.asd.size(); ++k) {
        if (a.asd[k] > a.asd[peak]) peak = k;
        power += a.asd[k] * a.asd[k] * a.df;
    }
    EXPECT_NEAR(a.freqs[peak], f0, a.df);
    EXPECT_NEAR(std::sqrt(power), amp / std::sqrt(2.0), 0.05 * amp / std::sqrt(2.0));
}

TEST(Asd, ZeroSeriesAndShortSeries) {
    const std::vector<double> z(20000, 0.0);
    const auto a = estimate_asd(z, 2e3, 1.0);
    for (double v : a.asd) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(estimate_asd(std::vector<double>(4000, 1.0), 2e3, 1.0), Error);
}

TEST(Asd, FlatBandSkipsTones) {
    const double fs = 2e3;
    auto x = white(static_cast<std::size_t>(20 * fs), 1e-4, 4);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += 1.0 * std::sin(kTwoPi * 25.0 * static_cast<double>(k) / fs);
    const auto a = estimate_asd(x, fs, 1.0);
    FlatBand band{20.0, 30.0, {25.0}, 1.5, 1.0};
    EXPECT_LT(flat_band_floor(a, band), 1e-4 * std::sqrt(2.0 / fs) * 2.0);
    band.exclude.clear();
    EXPECT_LT(flat_band_floor(a, band), 1e-4 * std::sqrt(2.0 / fs) * 2.0);
    band.f_lo = 24.5;
    band.f_hi = 25.5;
    EXPECT_GT(flat_band_floor(a, band), 1e-2);
}

TEST(TauSeries, InvalidFramesInterpolated) {
    std::vector<TauVector> t(5);
    for (std::size_t k = 0; k < t.size(); ++k) {
        t[k].tau = Vec3::Constant(static_cast<double>(k));
        t[k].valid = {true, true, true};
    }
    t[2].tau[1] = 100.0;
    t[2].valid[1] = false;
    const auto s = tau_series(t, 1);
    EXPECT_DOUBLE_EQ(s[2], 2.0);
}

TEST(Bounds, ScaledOrthogonalA) {
    std::mt19937_64 rng(3);
    const Mat3 r = oracle::random_rotation(rng);
    const Vec3 sv(2e-3, 1e-3, 5e-4);
    const Mat3 a = r * sv.asDiagonal();
    const double s2 = 4e-10;
    const auto b = orthogonal_bounds(Mat3::Identity() * s2, cal_with(a));
    std::array<double, 3> want{sv[2] * sv[2] * s2, sv[1] * sv[1] * s2, sv[0] * sv[0] * s2};
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(b.eigenvalues[i], want[static_cast<std::size_t>(i)], 1e-12 * want[2]);
    EXPECT_NEAR(b.sensitivities()[2], sv[0] * std::sqrt(s2), 1e-9 * sv[0] * std::sqrt(s2));
}

TEST(Bounds, ZeroCovariance) {
    const auto b = orthogonal_bounds(Mat3::Zero(), cal_with(Mat3::Identity() * 1e-3));
    EXPECT_EQ(b.eigenvalues, Vec3::Zero());
}

TEST(Bounds, RejectsNonSymmetricAndIndefinite) {
    Mat3 s = Mat3::Identity();
    s(0, 1) = 0.5;
    EXPECT_THROW(orthogonal_bounds(s, cal_with(Mat3::Identity())), Error);
    Mat3 neg = Mat3::Identity();
    neg(2, 2) = -0.5;
    EXPECT_THROW(orthogonal_bounds(neg, cal_with(Mat3::Identity())), Error);
}

TEST(Bounds, RandomDirectionsStayInside) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        Mat3 a = oracle::random_rotation(rng) * oracle::random_vector(rng, 1e-3).cwiseAbs().asDiagonal();
        Mat3 c = Mat3::Zero();
        std::uniform_real_distribution<double> u(-0.15, 0.15);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) c(i, j) = u(rng);
        }
        const Mat3 sigma2 = random_psd(rng);
        const auto b = orthogonal_bounds(sigma2, cal_with(a, c));
        const Mat3 g = (Mat3::Identity() + c) * a;
        const Mat3 cov = g * sigma2 * g.transpose();
        const double lo = b.eigenvalues[0], hi = b.eigenvalues[2];
        for (int k = 0; k < 100; ++k) {
            const Vec3 v = oracle::random_unit(rng);
            const double q = v.dot(cov * v);
            EXPECT_GE(q, lo - 1e-12 * hi);
            EXPECT_LE(q, hi + 1e-12 * hi);
        }
        for (int i = 0; i < 3; ++i) {
            const Vec3 e = b.directions.col(i);
            EXPECT_NEAR(e.dot(cov * e), b.eigenvalues[i], 1e-12 * hi);
        }
    }
}

TEST(Harmonics, HalfPeriodicSignalOnlyEven) {
    const double fs = 2e6, wm = kTwoPi * 2e3;
    const std::size_t len = 1000;
    // Pulses at every half period, one per bias crossing.
    auto shape = [](double x) { return 1.0 / (1.0 + x * x); };
    std::vector<double> y(len * 10);
    for (std::size_t k = 0; k < y.size(); ++k) {
        const double ph = std::fmod(static_cast<double>(k), 500.0);
        y[k] = 0.4 + 0.1 * shape((ph - 150.0) / 6.0) + 0.07 * shape((ph - 330.0) / 9.0);
    }
    const auto lines = harmonic_lines(y, fs, wm, 50);
    const auto model = harmonic_model(std::span<const double>(y).subspan(0, 500), fs, wm, 50);
    for (int n = 1; n <= 50; ++n) {
        const auto k = static_cast<std::size_t>(n - 1);
        if (n % 2 == 1) {
            EXPECT_LT(lines[k], 1e-12);
            EXPECT_LT(model.comb[k], 1e-12);
            EXPECT_GT(model.field_gain[k], 0.0);
        } else {
            EXPECT_NEAR(lines[k], model.comb[k], 1e-9 + 1e-6 * lines[k]);
            EXPECT_EQ(model.field_gain[k], 0.0);
        }
    }
}

TEST(Harmonics, AlternatingShiftAppearsOnOddLines) {
    // Pulses pushed later on one half and earlier on the other, as a static
    // field does, put a line at odd harmonics of size field_gain * shift.
    const double fs = 2e6, wm = kTwoPi * 2e3;
    auto shape = [](double x) { return 1.0 / (1.0 + x * x); };
    auto half = [&](double shift) {
        std::vector<double> h(500);
        for (std::size_t k = 0; k < h.size(); ++k) h[k] = 0.1 * shape((static_cast<double>(k) - 200.0 - shift * fs) / 12.0);
        return h;
    };
    const double d = 2e-8;
    std::vector<double> y;
    for (int p = 0; p < 10; ++p) {
        const auto a = half(d), b = half(-d);
        y.insert(y.end(), a.begin(), a.end());
        y.insert(y.end(), b.begin(), b.end());
    }
    const auto lines = harmonic_lines(y, fs, wm, 9);
    const auto model = harmonic_model(half(0.0), fs, wm, 9);
    for (int n : {1, 3, 5, 7, 9}) {
        const auto k = static_cast<std::size_t>(n - 1);
        EXPECT_NEAR(lines[k], model.field_gain[k] * d, 0.02 * lines[k]);
    }
}

TEST(Harmonics, SimulatedCombFollowsHalfPeriodEnvelope) {
    auto s = reference_setup(2e6);
    const double span = 30.0 * s.bias.period();
    const auto tr = synthesize_reflection(s.model, s.bias, FieldFn{}, nullptr, span);
    const std::size_t len = frame_length(2e6, s.bias.omega_m);
    std::vector<double> y;
    for (std::size_t k = 10 * len; k < 30 * len; ++k) y.push_back(std::abs(tr.samples[k]));
    const auto lines = harmonic_lines(y, 2e6, s.bias.omega_m, 50);
    const auto model = harmonic_model(std::span<const double>(y).subspan(y.size() - len, len / 2), 2e6, s.bias.omega_m, 50);
    double even_max = 0.0;
    for (int n = 2; n <= 50; n += 2) even_max = std::max(even_max, lines[static_cast<std::size_t>(n - 1)]);
    for (int n = 1; n <= 50; ++n) {
        const auto k = static_cast<std::size_t>(n - 1);
        if (n % 2 == 1) {
            EXPECT_LT(lines[k], 1e-3 * even_max) << "n = " << n;
        } else {
            EXPECT_LT(std::abs(20.0 * std::log10(lines[k] / model.comb[k])), 3.0) << "n = " << n;
        }
    }
}
