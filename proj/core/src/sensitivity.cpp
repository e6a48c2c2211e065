#include "nvmag/sensitivity.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <thread>

#include "nvmag/error.hpp"

namespace nvmag {

namespace {

std::size_t welch_segments(std::size_t n, std::size_t seg, double overlap) {
    if (seg == 0 || n < seg) return 0;
    const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(seg * (1.0 - overlap))));
    return (n - seg) / hop + 1;
}

bool excluded(double f, const FlatBand& band) {
    for (double e : band.exclude) {
        if (std::abs(f - e) <= band.exclude_halfwidth) return true;
    }
    return false;
}

}  // namespace

AmplitudeSpectralDensity estimate_asd(std::span<const double> x, double sample_rate, double segment_seconds,
                                      double overlap) {
    if (!(sample_rate > 0.0) || !(segment_seconds > 0.0)) throw Error("estimate_asd: rates must be positive");
    if (!(overlap >= 0.0 && overlap < 1.0)) throw Error("estimate_asd: overlap must be in [0, 1)");
    const auto seg = static_cast<std::size_t>(std::llround(segment_seconds * sample_rate));
    if (welch_segments(x.size(), seg, overlap) < 8) {
        throw Error("estimate_asd: series too short for 8 segments of " + std::to_string(segment_seconds) + " s");
    }
    const Psd p = welch_psd(x, sample_rate, seg, overlap);
    AmplitudeSpectralDensity a;
    a.freqs = p.freqs;
    a.asd = p.asd();
    a.df = p.df;
    a.segment_seconds = segment_seconds;
    a.overlap = overlap;
    a.segments = p.segments;
    return a;
}

double flat_band_floor(const AmplitudeSpectralDensity& a, const FlatBand& band) {
    std::vector<double> v;
    for (std::size_t k = 0; k < a.freqs.size(); ++k) {
        if (a.freqs[k] >= band.f_lo && a.freqs[k] <= band.f_hi && !excluded(a.freqs[k], band)) v.push_back(a.asd[k]);
    }
    if (v.empty()) throw Error("flat_band_floor: no bins in band");
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

std::vector<double> tau_series(std::span<const TauVector> taus, int orientation) {
    if (orientation < 0 || orientation > 2) throw Error("tau_series: orientation must be 0..2");
    const auto o = static_cast<std::size_t>(orientation);
    std::vector<double> out(taus.size(), 0.0);
    std::ptrdiff_t last = -1;
    for (std::size_t k = 0; k < taus.size(); ++k) {
        if (!taus[k].valid[o]) continue;
        const double v = taus[k].tau[orientation];
        out[k] = v;
        if (last < 0) {
            std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(k), v);
        } else {
            const double v0 = out[static_cast<std::size_t>(last)];
            const double span = static_cast<double>(static_cast<std::ptrdiff_t>(k) - last);
            for (auto j = last + 1; j < static_cast<std::ptrdiff_t>(k); ++j) {
                out[static_cast<std::size_t>(j)] = v0 + (v - v0) * static_cast<double>(j - last) / span;
            }
        }
        last = static_cast<std::ptrdiff_t>(k);
    }
    if (last < 0) throw Error("tau_series: no valid frames for orientation " + std::to_string(orientation + 1));
    std::fill(out.begin() + last + 1, out.end(), out[static_cast<std::size_t>(last)]);
    return out;
}

Mat3 tau_cross_psd(std::span<const TauVector> taus, double frame_rate, const FlatBand& band) {
    const auto seg = static_cast<std::size_t>(std::llround(band.segment_seconds * frame_rate));
    const std::size_t nseg = welch_segments(taus.size(), seg, 0.5);
    if (nseg < 8) throw Error("tau_cross_psd: record too short for 8 segments");
    const std::size_t hop = std::max<std::size_t>(1, seg / 2);
    std::array<std::vector<double>, 3> x;
    for (int o = 0; o < 3; ++o) x[static_cast<std::size_t>(o)] = tau_series(taus, o);
    std::vector<double> w(seg);
    double w2 = 0.0;
    for (std::size_t k = 0; k < seg; ++k) {
        w[k] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(k) / static_cast<double>(seg));
        w2 += w[k] * w[k];
    }
    const double df = frame_rate / static_cast<double>(seg);
    std::vector<std::size_t> bins;
    for (std::size_t b = 1; b <= seg / 2; ++b) {
        const double f = static_cast<double>(b) * df;
        if (f >= band.f_lo && f <= band.f_hi && !excluded(f, band)) bins.push_back(b);
    }
    if (bins.empty()) throw Error("tau_cross_psd: no bins in band");
    Mat3 s = Mat3::Zero();
    std::vector<double> buf(seg);
    for (std::size_t g = 0; g < nseg; ++g) {
        std::array<std::vector<cplx>, 3> spec;
        for (std::size_t o = 0; o < 3; ++o) {
            const double* p = x[o].data() + g * hop;
            double mean = 0.0;
            for (std::size_t k = 0; k < seg; ++k) mean += p[k];
            mean /= static_cast<double>(seg);
            for (std::size_t k = 0; k < seg; ++k) buf[k] = (p[k] - mean) * w[k];
            spec[o] = rfft(buf);
        }
        for (std::size_t b : bins) {
            for (int i = 0; i < 3; ++i) {
                for (int j = 0; j < 3; ++j) {
                    s(i, j) += std::real(spec[static_cast<std::size_t>(i)][b] * std::conj(spec[static_cast<std::size_t>(j)][b]));
                }
            }
        }
    }
    s *= 2.0 / (frame_rate * w2) / static_cast<double>(nseg * bins.size());
    return 0.5 * (s + s.transpose());
}

Vec3 axis_floors(std::span<const TauVector> taus, double frame_rate, const Vec3& scale, const FlatBand& band) {
    Vec3 out;
    for (int o = 0; o < 3; ++o) {
        const auto x = tau_series(taus, o);
        const auto a = estimate_asd(x, frame_rate, band.segment_seconds);
        out[o] = flat_band_floor(a, band) * std::abs(scale[o]);
    }
    return out;
}

OrthogonalBounds orthogonal_bounds(const Mat3& sigma2, const CalibrationResult& cal) {
    const double norm = sigma2.norm();
    if (!sigma2.allFinite()) throw Error("orthogonal_bounds: non-finite covariance");
    if ((sigma2 - sigma2.transpose()).norm() > 1e-12 * norm) throw Error("orthogonal_bounds: covariance is not symmetric");
    if (norm > 0.0) {
        Eigen::SelfAdjointEigenSolver<Mat3> es(sigma2);
        if (es.eigenvalues().minCoeff() < -1e-12 * norm) {
            throw Error("orthogonal_bounds: covariance is not positive semidefinite");
        }
    }
    const Mat3 g = (Mat3::Identity() + cal.c_matrix) * cal.a_matrix;
    OrthogonalBounds b;
    b.covariance = g * sigma2 * g.transpose();
    b.covariance = 0.5 * (b.covariance + b.covariance.transpose());
    Eigen::SelfAdjointEigenSolver<Mat3> es(b.covariance);
    b.eigenvalues = es.eigenvalues();
    b.directions = es.eigenvectors();
    return b;
}

SensitivityReport sensitivity_report(std::span<const TauVector> taus, double frame_rate, const CalibrationResult& cal,
                                     const Vec3& scale, const FlatBand& band) {
    SensitivityReport r;
    r.axis_floor = axis_floors(taus, frame_rate, scale, band);
    r.sigma2 = tau_cross_psd(taus, frame_rate, band);
    r.bounds = orthogonal_bounds(r.sigma2, cal);
    return r;
}

HarmonicSpectrum harmonic_model(std::span<const double> half_period, double sample_rate, double omega_m, int count) {
    if (half_period.size() < 4) throw Error("harmonic_model: half period too short");
    if (!(sample_rate > 0.0) || !(omega_m > 0.0) || count < 1) throw Error("harmonic_model: bad arguments");
    const std::size_t m = half_period.size();
    const double dt = 1.0 / sample_rate;
    const double period = kTwoPi / omega_m;
    // Derivative of the half-period-periodic signal by central differences.
    std::vector<double> ds(m);
    for (std::size_t k = 0; k < m; ++k) {
        ds[k] = (half_period[(k + 1) % m] - half_period[(k + m - 1) % m]) / (2.0 * dt);
    }
    HarmonicSpectrum h;
    for (int n = 1; n <= count; ++n) {
        const double w = n * omega_m;
        cplx s{0.0, 0.0}, d{0.0, 0.0};
        for (std::size_t k = 0; k < m; ++k) {
            const cplx e = std::polar(dt, -w * static_cast<double>(k) * dt);
            s += half_period[k] * e;
            d += ds[k] * e;
        }
        h.freqs.push_back(w / kTwoPi);
        h.comb.push_back(2.0 / period * std::sqrt(std::max(0.0, 2.0 + 2.0 * std::cos(kPi * n))) * std::abs(s));
        h.field_gain.push_back(2.0 / period * std::sqrt(std::max(0.0, 2.0 - 2.0 * std::cos(kPi * n))) * std::abs(d));
    }
    return h;
}

std::vector<double> harmonic_lines(std::span<const double> x, double sample_rate, double omega_m, int count) {
    std::vector<double> out;
    for (int n = 1; n <= count; ++n) out.push_back(std::abs(tone_phasor(x, sample_rate, n * omega_m / kTwoPi)));
    return out;
}

std::vector<BandwidthPoint> noise_bandwidth_sweep(const SensorModel& model, const BiasWaveform& bias,
                                                  double psd_dbc, std::span<const double> bandwidths,
                                                  std::uint64_t seed, const SweepOptions& opt) {
    const double fs = model.sim.sample_rate;
    for (double b : bandwidths) {
        if (!(b >= 0.0) || b > 0.5 * fs) throw Error("noise_bandwidth_sweep: bandwidth outside [0, Nyquist]");
    }
    const ChainOptions copt;
    MagnetometerChain base(model, bias, copt);
    base.prepare();
    const Vec3 scale = bias_projections(model, bias).cwiseAbs();
    const double total = (static_cast<double>(copt.warmup_frames) + std::ceil(opt.duration * base.frame_rate()) + 2.0) *
                         bias.period();

    std::vector<BandwidthPoint> out(bandwidths.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < bandwidths.size(); i = next++) {
            try {
                MagnetometerChain chain = base;
                MwNoise noise;
                noise.placement = opt.placement;
                noise.sample_rate = fs;
                if (bandwidths[i] > 0.0) {
                    const auto spec = flat_spectrum(psd_dbc, 0.0, bandwidths[i], NoiseKind::amplitude);
                    noise.amplitude = colored_noise(spec, fs, total, seed).samples;
                }
                const auto taus = chain.run(FieldFn{}, &noise, opt.duration);
                out[i].bandwidth = bandwidths[i];
                out[i].floor = axis_floors(taus, chain.frame_rate(), scale, opt.band);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int nthreads = std::max(1, std::min<int>(opt.threads, static_cast<int>(bandwidths.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return out;
}

void write_asd_csv(const AmplitudeSpectralDensity& a, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw Error("write_asd_csv: cannot open " + path);
    os << "freq_hz,asd\n" << std::setprecision(12);
    for (std::size_t k = 0; k < a.freqs.size(); ++k) os << a.freqs[k] << ',' << a.asd[k] << '\n';
    if (!os) throw Error("write_asd_csv: write failed " + path);
}

}  // namespace nvmag
