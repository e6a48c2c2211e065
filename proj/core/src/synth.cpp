#include "nvmag/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "nvmag/error.hpp"
#include "nvmag/spectrum.hpp"

namespace nvmag {

namespace {

double interp_series(const std::vector<double>& s, double x) {
    if (s.empty()) return 0.0;
    if (x <= 0.0) return s.front();
    const auto i = static_cast<std::size_t>(x);
    if (i + 1 >= s.size()) return s.back();
    const double f = x - static_cast<double>(i);
    return s[i] + f * (s[i + 1] - s[i]);
}

}  // namespace

void BiasWaveform::validate() const {
    if (!(omega_m > 0.0)) throw Error("BiasWaveform: omega_m must be positive");
    const bool noisy = !amp_noise.empty() || !phase_noise.empty();
    if (noisy && !(sample_rate > 0.0)) throw Error("BiasWaveform: noise series need a positive sample rate");
    if (!amp_noise.empty() && !phase_noise.empty() && amp_noise.size() != phase_noise.size()) {
        throw Error("BiasWaveform: amplitude and phase noise series differ in length");
    }
    if (noisy && duration > 0.0) {
        const auto need = static_cast<std::size_t>(std::floor(duration * sample_rate));
        const std::size_t have = std::max(amp_noise.size(), phase_noise.size());
        if (have < need) throw Error("BiasWaveform: noise series shorter than the waveform duration");
    }
}

Vec3 BiasWaveform::at(double t) const {
    const double c = std::cos(omega_m * t);
    if (amp_noise.empty() && phase_noise.empty()) return b0_vec * c;
    const double x = t * sample_rate;
    const double a = interp_series(amp_noise, x);
    const double phi = interp_series(phase_noise, x);
    return b0_vec * ((1.0 + a) * c - phi * std::sin(omega_m * t));
}

std::vector<Vec3> evaluate_bias(const BiasWaveform& w, std::span<const double> t_grid) {
    w.validate();
    std::vector<Vec3> out;
    out.reserve(t_grid.size());
    for (double t : t_grid) {
        if (w.duration > 0.0 && (t < 0.0 || t > w.duration)) throw Error("evaluate_bias: time outside waveform");
        out.push_back(w.at(t));
    }
    return out;
}

void NoiseSpectrum::validate() const {
    if (freqs.empty() || freqs.size() != psd.size()) throw Error("NoiseSpectrum: grid and values must be non-empty and equal length");
    for (std::size_t k = 0; k < freqs.size(); ++k) {
        if (!std::isfinite(freqs[k]) || freqs[k] < 0.0) throw Error("NoiseSpectrum: frequencies must be finite and non-negative");
        if (k > 0 && !(freqs[k] > freqs[k - 1])) throw Error("NoiseSpectrum: frequencies must be strictly increasing");
        if (!std::isfinite(psd[k])) throw Error("NoiseSpectrum: PSD values must be finite");
        if (units == PsdUnits::si && psd[k] < 0.0) throw Error("NoiseSpectrum: SI PSD must be non-negative");
    }
}

double NoiseSpectrum::linear_psd(double f) const {
    auto lin = [&](std::size_t k) { return units == PsdUnits::dbc_per_hz ? 2.0 * std::pow(10.0, psd[k] / 10.0) : psd[k]; };
    if (f < freqs.front() || f > freqs.back()) return 0.0;
    if (freqs.size() == 1) return lin(0);
    const auto it = std::upper_bound(freqs.begin(), freqs.end(), f);
    std::size_t hi = static_cast<std::size_t>(it - freqs.begin());
    if (hi >= freqs.size()) hi = freqs.size() - 1;
    const std::size_t lo = hi - 1;
    const double s0 = lin(lo), s1 = lin(hi);
    const double f0 = freqs[lo], f1 = freqs[hi];
    if (s0 > 0.0 && s1 > 0.0 && f0 > 0.0) {
        const double u = std::log(f / f0) / std::log(f1 / f0);
        return std::exp(std::log(s0) + u * (std::log(s1) - std::log(s0)));
    }
    return s0 + (f - f0) / (f1 - f0) * (s1 - s0);
}

NoiseSpectrum flat_spectrum(double level, double f_lo, double f_hi, NoiseKind kind, PsdUnits units) {
    NoiseSpectrum s;
    s.freqs = {f_lo, f_hi};
    s.psd = {level, level};
    s.kind = kind;
    s.units = units;
    s.validate();
    return s;
}

NoiseSpectrum read_noise_spectrum_csv(const std::string& path, NoiseKind kind) {
    std::ifstream is(path);
    if (!is) throw Error("noise spectrum: cannot open: " + path);
    std::string line;
    std::getline(is, line);
    NoiseSpectrum s;
    s.kind = kind;
    if (line.find("psd_dbc_per_hz") != std::string::npos) {
        s.units = PsdUnits::dbc_per_hz;
    } else if (line.find("psd_si") != std::string::npos) {
        s.units = PsdUnits::si;
    } else {
        throw Error("noise spectrum: header must name psd_dbc_per_hz or psd_si: " + path);
    }
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        double f, p;
        if (!(ls >> f >> p)) throw Error("noise spectrum: malformed row in " + path);
        s.freqs.push_back(f);
        s.psd.push_back(p);
    }
    s.validate();
    return s;
}

void write_noise_spectrum_csv(const NoiseSpectrum& spec, const std::string& path) {
    spec.validate();
    std::ofstream os(path);
    if (!os) throw Error("noise spectrum: cannot open for writing: " + path);
    os << "freq_hz," << (spec.units == PsdUnits::dbc_per_hz ? "psd_dbc_per_hz" : "psd_si") << '\n'
       << std::setprecision(17);
    for (std::size_t k = 0; k < spec.freqs.size(); ++k) os << spec.freqs[k] << ',' << spec.psd[k] << '\n';
}

NoiseRealization colored_noise(const NoiseSpectrum& spec, double sample_rate, double duration, std::uint64_t seed) {
    spec.validate();
    if (!(sample_rate > 0.0) || !(duration > 0.0)) throw Error("colored_noise: sample rate and duration must be positive");
    if (spec.freqs.back() > 0.5 * sample_rate) throw Error("colored_noise: requested band exceeds Nyquist");
    const auto n = static_cast<std::size_t>(std::llround(duration * sample_rate));
    if (n < 2) throw Error("colored_noise: duration too short");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<cplx> bins(n / 2 + 1, cplx{0.0, 0.0});
    const double df = sample_rate / static_cast<double>(n);
    for (std::size_t k = 1; k < bins.size(); ++k) {
        const double g1 = gauss(rng);
        const double g2 = gauss(rng);
        if (n % 2 == 0 && k == n / 2) continue;
        const double s = spec.linear_psd(static_cast<double>(k) * df);
        if (s <= 0.0) continue;
        const double c = std::sqrt(static_cast<double>(n) * s * sample_rate / 2.0);
        bins[k] = c * cplx{g1, g2} / std::sqrt(2.0);
    }
    NoiseRealization r;
    r.samples = irfft(bins, n);
    for (double& v : r.samples) v /= static_cast<double>(n);
    r.sample_rate = sample_rate;
    r.source = spec;
    return r;
}

void spin_frequencies(const NvBasis& basis, const Vec3& b, const PhysicalConstants& pc, std::span<double> out) {
    if (out.size() != static_cast<std::size_t>(kBranches)) throw Error("spin_frequencies: need kBranches outputs");
    for (int i = 0; i < kOrientations; ++i) {
        const double shift = pc.gamma_e * basis.axis(i).dot(b);
        for (int sign : {+1, -1}) {
            const double center = pc.d_zfs - sign * shift;
            const int tr = transition_index(i, sign);
            for (int line = 0; line < kHyperfineLines; ++line) {
                out[static_cast<std::size_t>(tr * kHyperfineLines + line)] = center + (line - 1) * pc.a_hf;
            }
        }
    }
}

std::vector<std::vector<double>> spin_frequency_traces(const NvBasis& basis, std::span<const Vec3> field,
                                                       const PhysicalConstants& pc) {
    std::vector<std::vector<double>> traces(kBranches, std::vector<double>(field.size()));
    std::array<double, kBranches> w{};
    for (std::size_t n = 0; n < field.size(); ++n) {
        spin_frequencies(basis, field[n], pc, w);
        for (int k = 0; k < kBranches; ++k) traces[static_cast<std::size_t>(k)][n] = w[static_cast<std::size_t>(k)];
    }
    return traces;
}

Vec3 TestField::at(double t) const {
    Vec3 b;
    for (int j = 0; j < 3; ++j) b[j] = std::sqrt(2.0) * amplitude_rms[j] * std::sin(kTwoPi * freq_hz[j] * t);
    return b;
}

std::vector<Vec3> test_field(const Vec3& amplitudes_rms, const Vec3& freqs_hz, std::span<const double> t_grid) {
    const TestField tf{amplitudes_rms, freqs_hz};
    std::vector<Vec3> out;
    out.reserve(t_grid.size());
    for (double t : t_grid) out.push_back(tf.at(t));
    return out;
}

}  // namespace nvmag
