#include "nvmag/experiment.hpp"

#include <ceres/version.h>
#include <fftw3.h>
#include <openssl/opensslv.h>

#include <Eigen/Core>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "nvmag/error.hpp"

#ifndef NVMAG_VERSION
#define NVMAG_VERSION "unknown"
#endif

namespace nvmag {

Scenario make_scenario(const ExperimentConfig& cfg) {
    Scenario sc;
    sc.setup = reference_setup(cfg.sample_rate, cfg.sensor);
    sc.chain.warmup_frames = cfg.warmup_frames;
    sc.chain.template_frames = cfg.template_frames;
    return sc;
}

double record_span(const Scenario& sc, double duration) {
    const double f_m = sc.setup.bias.omega_m / kTwoPi;
    return (static_cast<double>(sc.chain.warmup_frames) + std::ceil(duration * f_m) + 2.0) / f_m;
}

std::vector<double> realize_noise(const NoiseSettings& n, double sample_rate, double duration, std::uint64_t seed) {
    if (!n.enabled()) return {};
    const NoiseSpectrum spec =
        n.file.empty() ? flat_spectrum(n.level_dbc, n.f_lo, n.f_hi, n.kind) : read_noise_spectrum_csv(n.file, n.kind);
    return colored_noise(spec, sample_rate, duration, seed).samples;
}

namespace {

NoiseSpectrum spectrum_of(const NoiseSettings& n) {
    return n.file.empty() ? flat_spectrum(n.level_dbc, n.f_lo, n.f_hi, n.kind) : read_noise_spectrum_csv(n.file, n.kind);
}

MwNoise make_mw_noise(const ExperimentConfig& cfg, const Scenario& sc, double duration, std::uint64_t seed) {
    MwNoise mw;
    mw.sample_rate = cfg.sample_rate;
    mw.placement = cfg.mw_noise.placement;
    auto x = realize_noise(cfg.mw_noise, cfg.sample_rate, record_span(sc, duration), seed);
    if (cfg.mw_noise.kind == NoiseKind::phase) {
        mw.phase = std::move(x);
    } else {
        mw.amplitude = std::move(x);
    }
    return mw;
}

std::vector<LinearizedFrame> clean_linearized(const Scenario& sc, const Pipeline& p) {
    const double period = sc.setup.bias.period();
    const std::size_t n = sc.chain.warmup_frames + sc.chain.template_frames;
    const auto tr = synthesize_reflection(sc.setup.model, sc.setup.bias, FieldFn{}, nullptr, static_cast<double>(n) * period);
    const auto frames = parse_frames(tr, sc.setup.bias.omega_m);
    std::vector<LinearizedFrame> out;
    for (std::size_t k = sc.chain.warmup_frames; k < frames.size(); ++k) out.push_back(p.linearize(frames[k]));
    return out;
}

}  // namespace

FieldFn test_field_fn(const Vec3& amplitude_rms, const Vec3& freqs) {
    TestField tf{amplitude_rms, freqs};
    return [tf](double t) { return tf.at(t); };
}

VectorRun vector_calibration(const ExperimentConfig& cfg) {
    const Scenario sc = make_scenario(cfg);
    MagnetometerChain chain(sc.setup.model, sc.setup.bias, sc.chain);
    chain.prepare();
    VectorRun r;

    const MwNoise noise_cal = make_mw_noise(cfg, sc, cfg.duration, cfg.seed);
    r.cal_taus = chain.run(test_field_fn(cfg.test_amplitude_rms, cfg.test_freqs), &noise_cal, cfg.duration);
    r.response = build_response_matrix(r.cal_taus, cfg.test_freqs, cfg.test_amplitude_rms);
    GeometryFitOptions opt;
    opt.bias_dir_lab = sc.setup.bias.b0_vec.normalized();
    r.cal = calibrate(r.response, canonical_basis(), opt);

    const auto lfs = clean_linearized(sc, chain.pipeline());
    r.hyperfine = hyperfine_single_axis(lfs, chain.pipeline().config(), sc.setup.model.constants);
    r.cal.a_axis = r.hyperfine.a_axis;
    r.cal.b0_hyperfine = r.hyperfine.b0_mag;

    r.val_freqs = Vec3(cfg.test_freqs[1], cfg.test_freqs[2], cfg.test_freqs[0]);
    r.val_amplitude = cfg.test_amplitude_rms;
    const MwNoise noise_val = make_mw_noise(cfg, sc, cfg.duration, cfg.seed + 1);
    r.val_taus = chain.run(test_field_fn(r.val_amplitude, r.val_freqs), &noise_val, cfg.duration);

    Vec3 last = Vec3::Zero();
    for (const auto& t : r.val_taus) {
        if (t.all_valid()) last = reconstruct(t, r.cal);
        r.reconstruction.push_back(last);
    }
    std::vector<double> axis(r.reconstruction.size());
    for (int i = 0; i < 3; ++i) {
        for (std::size_t k = 0; k < axis.size(); ++k) axis[k] = r.reconstruction[k][i];
        for (int j = 0; j < 3; ++j) {
            r.tone_matrix(i, j) = std::abs(tone_phasor(axis, chain.frame_rate(), r.val_freqs[j])) / std::sqrt(2.0);
        }
    }
    return r;
}

BiasNoiseRun bias_noise_response(const ExperimentConfig& cfg) {
    Scenario sc = make_scenario(cfg);
    const double f_m = sc.setup.bias.omega_m / kTwoPi;
    const double fs_b = 16.0 * f_m;
    for (const auto* n : {&cfg.bias_amp_noise, &cfg.bias_phase_noise}) {
        if (n->enabled() && n->file.empty() && n->f_hi > 0.5 * fs_b) {
            throw Error("bias noise band exceeds the bias noise grid Nyquist (" + std::to_string(0.5 * fs_b) + " Hz)");
        }
    }
    auto& bias = sc.setup.bias;
    const double span = record_span(sc, cfg.duration);
    bias.sample_rate = fs_b;
    bias.duration = span;
    bias.amp_noise = realize_noise(cfg.bias_amp_noise, fs_b, span, cfg.seed);
    bias.phase_noise = realize_noise(cfg.bias_phase_noise, fs_b, span, cfg.seed + 7);

    MagnetometerChain chain(sc.setup.model, bias, sc.chain);
    chain.prepare();
    const auto taus = chain.run(FieldFn{}, nullptr, cfg.duration);

    BiasNoiseRun r;
    const auto& pcfg = chain.pipeline().config();
    const bool has_a = cfg.bias_amp_noise.enabled(), has_p = cfg.bias_phase_noise.enabled();
    const NoiseSpectrum sa = has_a ? spectrum_of(cfg.bias_amp_noise) : NoiseSpectrum{};
    const NoiseSpectrum sp = has_p ? spectrum_of(cfg.bias_phase_noise) : NoiseSpectrum{};
    for (int o = 0; o < 3; ++o) {
        const auto a = estimate_asd(tau_series(taus, o), chain.frame_rate(), cfg.segment_seconds);
        if (o == 0) r.freqs = a.freqs;
        r.measured[static_cast<std::size_t>(o)] = a.asd;
        const double beta = pcfg.beta[static_cast<std::size_t>(o)];
        const double alpha = std::sqrt(1.0 - beta * beta);
        const auto times = nominal_times(beta, pcfg.omega_m);
        auto& pred = r.predicted[static_cast<std::size_t>(o)];
        for (double f : a.freqs) {
            // Components at f + k f_m all land on f after frame-rate sampling.
            double p2 = 0.0;
            for (int k = -3; k <= 3; ++k) {
                const double fk = f + k * f_m;
                const double w = kTwoPi * fk;
                if (has_a) p2 += std::pow(response_amp(w, times, beta), 2) * sa.linear_psd(std::abs(fk));
                if (has_p) p2 += std::pow(response_phase(w, times, alpha), 2) * sp.linear_psd(std::abs(fk));
            }
            pred.push_back(std::sqrt(p2));
        }
    }
    return r;
}

HarmonicRun harmonic_placement(const ExperimentConfig& cfg, double field_rms, double field_freq) {
    const Scenario sc = make_scenario(cfg);
    const auto& bias = sc.setup.bias;
    const double fs = cfg.sample_rate;
    const std::size_t len = frame_length(fs, bias.omega_m);
    const std::size_t periods = 40;
    const double span = static_cast<double>(sc.chain.warmup_frames + periods) * bias.period();
    auto magnitude = [&](const FieldFn& field) {
        const auto tr = synthesize_reflection(sc.setup.model, bias, field, nullptr, span);
        std::vector<double> y;
        for (std::size_t k = sc.chain.warmup_frames * len; k < tr.samples.size(); ++k) y.push_back(std::abs(tr.samples[k]));
        return y;
    };
    HarmonicRun r;
    const auto clean = magnitude(FieldFn{});
    const Vec3 b = Vec3::UnitX() * field_rms * std::sqrt(2.0);
    const auto field = magnitude([b, field_freq](double t) -> Vec3 {
        return field_freq > 0.0 ? Vec3(b * std::cos(kTwoPi * field_freq * t)) : b;
    });
    r.no_field = harmonic_lines(clean, fs, bias.omega_m, cfg.harmonics);
    r.with_field = harmonic_lines(field, fs, bias.omega_m, cfg.harmonics);
    for (int n = 1; n <= cfg.harmonics; ++n) r.freqs.push_back(n * bias.omega_m / kTwoPi);
    const std::size_t start = clean.size() - len;
    r.model = harmonic_model(std::span<const double>(clean).subspan(start, len / 2), fs, bias.omega_m, cfg.harmonics);
    return r;
}

FloorRun noise_floors(const ExperimentConfig& cfg) {
    const Scenario sc = make_scenario(cfg);
    MagnetometerChain chain(sc.setup.model, sc.setup.bias, sc.chain);
    chain.prepare();
    const Vec3 scale = bias_projections(sc.setup.model, sc.setup.bias).cwiseAbs();
    FlatBand band{cfg.band_lo, cfg.band_hi, {}, 1.0, cfg.segment_seconds};
    FloorRun r;
    r.noiseless = axis_floors(chain.run(FieldFn{}, nullptr, cfg.duration), chain.frame_rate(), scale, band);
    if (cfg.mw_noise.enabled()) {
        const MwNoise noise = make_mw_noise(cfg, sc, cfg.duration, cfg.seed);
        r.noisy = axis_floors(chain.run(FieldFn{}, &noise, cfg.duration), chain.frame_rate(), scale, band);
    }
    return r;
}

namespace {

struct Entry {
    const char* name;
    const char* description;
};

constexpr Entry kExperiments[] = {
    {"fig2-timeseries", "one bias period of the reflected signal with the hyperfine triplets"},
    {"fig3-vector", "vector calibration on three test tones, then reconstruction of an independent record"},
    {"figS-noise-bw", "single-axis floors versus amplitude-noise bandwidth"},
    {"figS-biasnoise", "tau noise under bias amplitude/phase noise against the analytic transfer functions"},
    {"figS-harmonics", "harmonic lines of |y| without and with a static field, with the half-period model"},
    {"figS-thermal", "single-axis floors without noise and with the configured MW noise"},
    {"figS-response", "analytic H_ext, H_amp and H_phase per orientation"},
};

class Writer {
public:
    explicit Writer(const std::filesystem::path& p) : path_(p), os_(p) {
        if (!os_) throw Error("cannot write " + p.string());
        os_ << std::setprecision(10);
    }
    template <class T>
    Writer& operator<<(const T& v) {
        os_ << v;
        return *this;
    }
    std::string name() const { return path_.filename().string(); }

private:
    std::filesystem::path path_;
    std::ofstream os_;
};

void write_manifest(const ExperimentConfig& cfg, const std::filesystem::path& dir, const std::vector<std::string>& files) {
    Writer m(dir / "manifest.txt");
    m << "experiment = " << cfg.name << '\n';
    m << "config = " << cfg.source << '\n';
    m << "config_sha256 = " << cfg.config_hash << '\n';
    m << "seed = " << cfg.seed << '\n';
    m << "nvmag = " << NVMAG_VERSION << '\n';
    m << "eigen = " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION << '\n';
    m << "ceres = " << CERES_VERSION_STRING << '\n';
    m << "fftw = " << fftw_version << '\n';
    m << "openssl = " << OPENSSL_VERSION_TEXT << '\n';
    for (const auto& f : files) m << "output = " << f << '\n';
}

}  // namespace

std::vector<std::string> experiment_names() {
    std::vector<std::string> v;
    for (const auto& e : kExperiments) v.emplace_back(e.name);
    return v;
}

std::string experiment_description(const std::string& name) {
    for (const auto& e : kExperiments) {
        if (name == e.name) return e.description;
    }
    std::string known;
    for (const auto& e : kExperiments) known += std::string(known.empty() ? "" : ", ") + e.name;
    throw Error("unknown experiment '" + name + "' (available: " + known + ")");
}

namespace {

using Path = std::filesystem::path;

std::string run_fig2(const ExperimentConfig& cfg, const Path& dir, std::vector<std::string>& files) {
    const Scenario sc = make_scenario(cfg);
    const auto& bias = sc.setup.bias;
    const std::size_t len = frame_length(cfg.sample_rate, bias.omega_m);
    const double span = static_cast<double>(sc.chain.warmup_frames + 1) * bias.period();
    const auto tr = synthesize_reflection(sc.setup.model, bias, FieldFn{}, nullptr, span);
    const std::size_t start = tr.samples.size() - len;
    Writer w(dir / "trace.csv");
    w << "t_seconds,re,im,abs,bias_n1,bias_n2,bias_n3\n";
    double lo = 1e300, hi = 0.0;
    for (std::size_t k = start; k < tr.samples.size(); ++k) {
        const double t = tr.time(k);
        const Vec3 b = bias.at(t);
        const cplx y = tr.samples[k];
        lo = std::min(lo, std::abs(y));
        hi = std::max(hi, std::abs(y));
        w << t - tr.time(start) << ',' << y.real() << ',' << y.imag() << ',' << std::abs(y);
        for (int i = 0; i < 3; ++i) w << ',' << b.dot(sc.setup.model.basis.axis(i));
        w << '\n';
    }
    files.push_back(w.name());
    const auto pcfg = pipeline_config_for(sc.setup.model, bias);
    std::ostringstream s;
    s << std::setprecision(4) << "contrast " << (hi - lo) / hi << " (|y| " << lo << " .. " << hi << ")\n";
    for (int i = 0; i < 3; ++i) {
        const auto t = nominal_times(pcfg.beta[static_cast<std::size_t>(i)], bias.omega_m);
        s << "orientation " << i + 1 << " triplets at";
        for (double x : t) s << ' ' << x * 1e6 << " us";
        s << '\n';
    }
    return s.str();
}

void write_taus(const std::vector<TauVector>& taus, const Path& p, std::vector<std::string>& files) {
    write_tau_csv(taus, p.string());
    files.push_back(p.filename().string());
}

std::string run_fig3(const ExperimentConfig& cfg, const Path& dir, std::vector<std::string>& files) {
    const VectorRun r = vector_calibration(cfg);
    write_taus(r.cal_taus, dir / "tau_calibration.csv", files);
    write_taus(r.val_taus, dir / "tau_validation.csv", files);
    write_calibration(r.cal, (dir / "calibration.txt").string());
    files.emplace_back("calibration.txt");
    {
        Writer w(dir / "reconstruction.csv");
        w << "t_seconds,bx,by,bz\n";
        for (std::size_t k = 0; k < r.reconstruction.size(); ++k) {
            const Vec3& b = r.reconstruction[k];
            w << r.val_taus[k].t << ',' << b[0] << ',' << b[1] << ',' << b[2] << '\n';
        }
        files.push_back(w.name());
    }
    const double frame_rate = cfg.sensor.bias_freq;
    const char* axes[] = {"bx", "by", "bz"};
    std::vector<double> x(r.reconstruction.size());
    for (int i = 0; i < 3; ++i) {
        for (std::size_t k = 0; k < x.size(); ++k) x[k] = r.reconstruction[k][i];
        const auto a = estimate_asd(x, frame_rate, cfg.segment_seconds);
        const std::string name = std::string("asd_") + axes[i] + ".csv";
        write_asd_csv(a, (dir / name).string());
        files.push_back(name);
    }
    {
        Writer w(dir / "tones.csv");
        w << "axis,tone_hz,amplitude_rms_t\n";
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) w << axes[i] << ',' << r.val_freqs[j] << ',' << r.tone_matrix(i, j) << '\n';
        }
        files.push_back(w.name());
    }
    std::ostringstream s;
    s << std::setprecision(5);
    s << "B0 fit " << r.cal.b0_rms() * 1e4 << " G rms, hyperfine " << r.cal.b0_hyperfine / std::sqrt(2.0) * 1e4
      << " G rms, fit residual " << r.cal.residual << '\n';
    s << "C max |entry| " << r.cal.c_matrix.cwiseAbs().maxCoeff() << (r.cal.c_flagged ? " (flagged)" : "") << '\n';
    for (const auto& wmsg : r.hyperfine.warnings) s << "warning: " << wmsg << '\n';
    for (int i = 0; i < 3; ++i) {
        s << axes[i] << ':';
        for (int j = 0; j < 3; ++j) s << ' ' << r.val_freqs[j] << " Hz " << r.tone_matrix(i, j) / r.val_amplitude[j];
        s << '\n';
    }
    return s.str();
}

std::string run_noise_bw(const ExperimentConfig& cfg, const Path& dir, std::vector<std::string>& files) {
    const Scenario sc = make_scenario(cfg);
    SweepOptions opt;
    opt.duration = cfg.sweep_duration;
    opt.band = FlatBand{cfg.band_lo, cfg.band_hi, {}, 1.0, cfg.segment_seconds};
    opt.placement = cfg.mw_noise.placement;
    opt.threads = cfg.threads;
    const auto pts = noise_bandwidth_sweep(sc.setup.model, sc.setup.bias, cfg.sweep_level_dbc, cfg.sweep_bandwidths,
                                           cfg.seed, opt);
    Writer w(dir / "noise_bw.csv");
    w << "bandwidth_hz,floor1_t_rthz,floor2_t_rthz,floor3_t_rthz\n";
    std::ostringstream s;
    s << std::setprecision(4);
    for (const auto& p : pts) {
        w << p.bandwidth << ',' << p.floor[0] << ',' << p.floor[1] << ',' << p.floor[2] << '\n';
        s << p.bandwidth << " Hz: " << p.floor.transpose() << " T/rtHz\n";
    }
    files.push_back(w.name());
    return s.str();
}

std::string run_biasnoise(const ExperimentConfig& cfg, const Path& dir, std::vector<std::string>& files) {
    const BiasNoiseRun r = bias_noise_response(cfg);
    Writer w(dir / "biasnoise.csv");
    w << "freq_hz,measured1,measured2,measured3,predicted1,predicted2,predicted3\n";
    std::array<double, 3> worst{};
    for (std::size_t k = 0; k < r.freqs.size(); ++k) {
        w << r.freqs[k];
        for (int o = 0; o < 3; ++o) w << ',' << r.measured[static_cast<std::size_t>(o)][k];
        for (int o = 0; o < 3; ++o) w << ',' << r.predicted[static_cast<std::size_t>(o)][k];
        w << '\n';
        if (r.freqs[k] < cfg.band_lo || r.freqs[k] > cfg.band_hi) continue;
        for (std::size_t o = 0; o < 3; ++o) {
            const double ratio = r.measured[o][k] / r.predicted[o][k];
            worst[o] = std::max(worst[o], std::max(ratio, 1.0 / ratio));
        }
    }
    files.push_back(w.name());
    std::ostringstream s;
    s << std::setprecision(4);
    for (int o = 0; o < 3; ++o) s << "orientation " << o + 1 << ": worst measured/predicted factor " << worst[static_cast<std::size_t>(o)] << '\n';
    return s.str();
}

std::string run_harmonics(const ExperimentConfig& cfg, const Path& dir, std::vector<std::string>& files) {
    const HarmonicRun r = harmonic_placement(cfg, cfg.test_amplitude_rms[0], 0.0);
    Writer w(dir / "harmonics.csv");
    w << "n,freq_hz,no_field,with_field,model_comb,model_field_gain\n";
    for (std::size_t k = 0; k < r.freqs.size(); ++k) {
        w << k + 1 << ',' << r.freqs[k] << ',' << r.no_field[k] << ',' << r.with_field[k] << ',' << r.model.comb[k] << ','
          << r.model.field_gain[k] << '\n';
    }
    files.push_back(w.name());
    double even = 0.0, odd = 0.0, odd_field = 0.0;
    for (std::size_t k = 0; k < r.freqs.size(); ++k) {
        if ((k + 1) % 2 == 0) {
            even = std::max(even, r.no_field[k]);
        } else {
            odd = std::max(odd, r.no_field[k]);
            odd_field = std::max(odd_field, r.with_field[k]);
        }
    }
    std::ostringstream s;
    s << std::setprecision(4) << "largest even line " << even << ", largest odd line " << odd << " without field, "
      << odd_field << " with field\n";
    return s.str();
}

std::string run_thermal(const ExperimentConfig& cfg, const Path& dir, std::vector<std::string>& files) {
    const FloorRun r = noise_floors(cfg);
    Writer w(dir / "floors.csv");
    w << "orientation,noiseless_t_rthz,noisy_t_rthz\n";
    for (int i = 0; i < 3; ++i) w << i + 1 << ',' << r.noiseless[i] << ',' << r.noisy[i] << '\n';
    files.push_back(w.name());
    std::ostringstream s;
    s << std::setprecision(4) << "noiseless " << r.noiseless.transpose() << " T/rtHz\nnoisy " << r.noisy.transpose()
      << " T/rtHz\n";
    return s.str();
}

std::string run_response(const ExperimentConfig& cfg, const Path& dir, std::vector<std::string>& files) {
    const Scenario sc = make_scenario(cfg);
    const auto pcfg = pipeline_config_for(sc.setup.model, sc.setup.bias);
    Writer w(dir / "response.csv");
    w << "freq_hz";
    for (int i = 1; i <= 3; ++i) w << ",h_ext" << i << ",h_amp" << i << ",h_phase" << i;
    w << '\n';
    for (double f = 1.0; f <= cfg.band_hi; f += 1.0) {
        w << f;
        for (std::size_t i = 0; i < 3; ++i) {
            const double beta = pcfg.beta[i];
            const auto t = nominal_times(beta, pcfg.omega_m);
            const double omega = kTwoPi * f;
            w << ',' << response_external(omega, t) << ',' << response_amp(omega, t, beta) << ','
              << response_phase(omega, t, std::sqrt(1.0 - beta * beta));
        }
        w << '\n';
    }
    files.push_back(w.name());
    std::ostringstream s;
    s << std::setprecision(4);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto t = nominal_times(pcfg.beta[i], pcfg.omega_m);
        s << "orientation " << i + 1 << ": beta " << pcfg.beta[i] << ", H_ext(1 kHz) "
          << response_external(kTwoPi * 1e3, t) << '\n';
    }
    return s.str();
}

}  // namespace

std::string run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    experiment_description(cfg.name);
    const Path dir(cfg.output_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
    std::vector<std::string> files;
    std::string summary;
    if (cfg.name == "fig2-timeseries") summary = run_fig2(cfg, dir, files);
    if (cfg.name == "fig3-vector") summary = run_fig3(cfg, dir, files);
    if (cfg.name == "figS-noise-bw") summary = run_noise_bw(cfg, dir, files);
    if (cfg.name == "figS-biasnoise") summary = run_biasnoise(cfg, dir, files);
    if (cfg.name == "figS-harmonics") summary = run_harmonics(cfg, dir, files);
    if (cfg.name == "figS-thermal") summary = run_thermal(cfg, dir, files);
    if (cfg.name == "figS-response") summary = run_response(cfg, dir, files);
    {
        Writer w(dir / "summary.txt");
        w << cfg.name << '\n' << summary;
    }
    files.emplace_back("summary.txt");
    write_manifest(cfg, dir, files);
    return summary;
}

}  // namespace nvmag
